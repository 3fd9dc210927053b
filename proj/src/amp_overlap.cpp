#include "qmet/amp_overlap.hpp"

#include <cmath>
#include <numbers>

namespace qmet {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// |+> (x) |psi> prepared by (H (x) I) (I (x) V); used for the two
// controlled-u magnitude measurements.
StatePrep plus_tensor_prep(const StatePrep& v) {
    const Eigen::Index d = v.dim();
    const Eigen::MatrixXcd h = gates::hadamard().matrix();
    const Eigen::MatrixXcd id2 = Eigen::MatrixXcd::Identity(2, 2);
    const Eigen::MatrixXcd idd = Eigen::MatrixXcd::Identity(d, d);
    Eigen::MatrixXcd m = kron(h, idd) * kron(id2, v.unitary().matrix());
    return StatePrep(DenseUnitary(std::move(m), 1e-8));
}

// Controlled u with the control prepended; costs are inherited (the extra
// single-qubit gates are free), and powers stay controlled powers.
CostedUnitary controlled_costed(const CostedUnitary& u) {
    CostedUnitary cu(controlled(u.matrix), u.per_use);
    CostedUnitary base = u;
    cu.power_fn = [base](std::uint64_t k) {
        return controlled(base.power(k));
    };
    return cu;
}

// diag(e^{i pi/4}, e^{-i pi/4}) on the control qubit, after controlled u.
// Equivalent to the controlled u with a quarter-turn reference phase, which
// turns the second magnitude measurement into an Im(o) probe.
CostedUnitary phase_shifted_controlled(const CostedUnitary& u) {
    const Eigen::Index d = u.matrix.dim();
    Eigen::MatrixXcd g = Eigen::MatrixXcd::Identity(2 * d, 2 * d);
    const cd w = std::polar(1.0, kPi / 4.0);
    for (Eigen::Index i = 0; i < d; ++i) {
        g(i, i) = w;
        g(d + i, d + i) = std::conj(w);
    }
    const CostedUnitary cu = controlled_costed(u);
    return CostedUnitary(DenseUnitary(g * cu.matrix.matrix(), 1e-8),
                         u.per_use);
}

}  // namespace

HemispherePoint hemisphere_lift(cd o) {
    double m = std::abs(o);
    if (m > 1.0 + 1e-9)
        throw invalid_operand("overlap magnitude above one: " +
                              std::to_string(m));
    if (m > 1.0) {
        o /= m;
        m = 1.0;
    }
    HemispherePoint pt;
    pt.x = o.real();
    pt.y = o.imag();
    pt.z = std::sqrt(std::max(0.0, 1.0 - m * m));
    return pt;
}

double hemisphere_distance(cd a, cd b) {
    const HemispherePoint pa = hemisphere_lift(a);
    const HemispherePoint pb = hemisphere_lift(b);
    double dot = pa.x * pb.x + pa.y * pb.y + pa.z * pb.z;
    dot = std::min(1.0, std::max(-1.0, dot));
    return std::acos(dot);
}

AmpEstimate amp_estimate(const CostedUnitary& u, const StatePrep& v, double p,
                         std::optional<double> c, Rng& rng) {
    if (!(p > 0.0)) throw invalid_operand("precision must be positive");
    const CostedUnitary s = grover_reflection(v, u);

    AmpEstimate out;
    // The reflection's eigenphases are +-2*arccos|o|; estimating either one
    // to within 2p of a turn pins arccos|o| to within p (in pi units).
    out.pea = c ? pea_modified(s, v.state(), 2.0 * p, *c, rng)
                : pea_original(s, v.state(), 2.0 * p, rng);
    out.phase = out.pea.phase;
    out.value = clamp01(std::abs(std::cos(out.phase / 2.0)));
    out.ledger = out.pea.ledger;
    return out;
}

cd reconstruct_y(double a, double b0, double b_half_pi) {
    // |2*b0|^2 = |1 + o|^2 = 1 + |o|^2 + 2 Re o, and the quarter-turn
    // variant swaps Re for Im; subtracting 1 + a^2 isolates the parts.
    const double re = (4.0 * b0 * b0 - a * a - 1.0) / 2.0;
    const double im = (4.0 * b_half_pi * b_half_pi - a * a - 1.0) / 2.0;
    return cd(re, im);
}

OverlapEstimate overlap_estimate(const CostedUnitary& u, const StatePrep& v,
                                 double p, std::optional<double> c,
                                 Rng& rng) {
    if (!(p > 0.0)) throw invalid_operand("precision must be positive");
    std::optional<double> c3;
    if (c) {
        if (!(*c > 0.0 && *c < 1.0))
            throw invalid_operand("confidence must lie in (0, 1)");
        c3 = 1.0 - (1.0 - *c) / 3.0;
    }

    OverlapEstimate out;
    const AmpEstimate amp_a = amp_estimate(u, v, p / 4.0, c3, rng);
    out.a = amp_a.value;
    out.ledger = amp_a.ledger;

    const StatePrep vp = plus_tensor_prep(v);
    const AmpEstimate amp_b0 =
        amp_estimate(controlled_costed(u), vp, p / 16.0, c3, rng);
    out.b0 = amp_b0.value;
    out.ledger.append_sequential(amp_b0.ledger);

    const AmpEstimate amp_bq =
        amp_estimate(phase_shifted_controlled(u), vp, p / 16.0, c3, rng);
    out.b_half_pi = amp_bq.value;
    out.ledger.append_sequential(amp_bq.ledger);

    const cd y = reconstruct_y(out.a, out.b0, out.b_half_pi);
    if (std::abs(y) < 1e-6) {
        // Direction information vanishes with the magnitude; report a
        // phase of zero and flag it.  The hemisphere metric forgives this:
        // all phases of a near-zero overlap are close together.
        out.theta = 0.0;
        out.phase_unreliable = true;
    } else {
        out.theta = std::atan2(y.imag(), y.real());
    }
    out.value = std::polar(out.a, out.theta);
    return out;
}

}  // namespace qmet
