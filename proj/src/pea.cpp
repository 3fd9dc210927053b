#include "qmet/pea.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "qmet/confidence.hpp"

namespace qmet {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

StateVector plus_state() {
    const double s = std::numbers::sqrt2 / 2.0;
    return StateVector({cd(s, 0.0), cd(s, 0.0)});
}

StateVector minus_i_state() {
    const double s = std::numbers::sqrt2 / 2.0;
    return StateVector({cd(s, 0.0), cd(0.0, -s)});
}

// powers[j] = W^(2^j) for j = 0..n-1.
std::vector<DenseUnitary> power_ladder(const CostedUnitary& w, int n) {
    std::vector<DenseUnitary> powers;
    powers.reserve(static_cast<std::size_t>(n));
    if (n == 0) return powers;
    powers.push_back(w.matrix);
    for (int j = 1; j < n; ++j) {
        if (w.power_fn)
            powers.push_back(w.power_fn(std::uint64_t(1) << j));
        else
            powers.push_back(powers.back() * powers.back());
    }
    return powers;
}

std::vector<int> register_targets(int reg_qubits) {
    std::vector<int> targets(static_cast<std::size_t>(reg_qubits));
    std::iota(targets.begin(), targets.end(), 1);
    return targets;
}

// One kickback experiment: ancilla `anc` is prepended, the controlled power
// of W applied, the ancilla rotated back by `comp`, and measured in the X
// basis.  The register keeps whatever the measurement collapsed it to.
int kickback_experiment(StateVector& reg, const DenseUnitary& wpow,
                        const StateVector& anc, double comp, Rng& rng) {
    StateVector full = embed(reg, anc);
    apply(full, wpow, register_targets(reg.num_qubits()), {0});
    if (comp != 0.0) apply(full, gates::phase(-comp), {0});
    const int outcome = measure_qubit_x(full, 0, rng);
    reg = remove_qubit(full, 0, outcome);
    return outcome;
}

// Compensation angle pi*(0.b_{k+1} ... b_{hi}) for bit k, given bits[j-1] =
// b_j.  The residual-angle term is added separately by the caller.
double bit_compensation(const std::vector<int>& bits, int k, int hi) {
    double comp = 0.0;
    for (int j = k + 1; j <= hi; ++j)
        if (bits[static_cast<std::size_t>(j - 1)])
            comp += std::ldexp(kPi, k - j);
    return comp;
}

double grid_phase(const std::vector<int>& bits) {
    double frac = 0.0;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) frac += std::ldexp(1.0, -static_cast<int>(i) - 1);
    return kTwoPi * frac;
}

// Snapshot-sampling approximation for the r repetitions of one bit: the
// outcome probability is read off the pre-measurement state, r outcomes are
// drawn from it, and the register is collapsed once toward the majority.
std::int64_t approx_parallel_bit(StateVector& reg, const DenseUnitary& wpow,
                                 double comp, std::int64_t reps, Rng& rng) {
    StateVector full = embed(reg, plus_state());
    apply(full, wpow, register_targets(reg.num_qubits()), {0});
    if (comp != 0.0) apply(full, gates::phase(-comp), {0});
    apply(full, gates::hadamard(), {0});  // X outcome -> computational value

    const std::uint64_t half = full.dim() / 2;
    double p1 = 0.0;
    for (std::uint64_t i = half; i < full.dim(); ++i)
        p1 += std::norm(full.amps()[i]);

    std::int64_t ones = 0;
    for (std::int64_t i = 0; i < reps; ++i)
        if (rng.bernoulli(p1)) ++ones;
    const int majority = (2 * ones > reps) ? 1 : 0;

    // Project the ancilla onto the majority branch.  The branch cannot be
    // empty: a zero-probability outcome can never win the vote.
    auto& amps = full.amps();
    for (std::uint64_t i = 0; i < full.dim(); ++i) {
        const int bit = (i >= half) ? 1 : 0;
        if (bit != majority) amps[i] = 0.0;
    }
    full.normalize();
    reg = remove_qubit(full, 0, majority);
    return ones;
}

DeltaPrimeEstimate delta_prime_on_register(const DenseUnitary& wpow,
                                           StateVector& reg, std::int64_t r,
                                           Rng& rng) {
    if (r < 1) throw invalid_operand("repetition count must be positive");
    DeltaPrimeEstimate out;
    out.r = r;
    const StateVector plus = plus_state();
    const StateVector minus_i = minus_i_state();
    std::int64_t ones1 = 0;
    for (std::int64_t i = 0; i < r; ++i)
        ones1 += kickback_experiment(reg, wpow, plus, 0.0, rng);
    std::int64_t ones2 = 0;
    for (std::int64_t i = 0; i < r; ++i)
        ones2 += kickback_experiment(reg, wpow, minus_i, 0.0, rng);
    out.x1 = static_cast<double>(ones1) / static_cast<double>(r);
    out.x2 = static_cast<double>(ones2) / static_cast<double>(r);
    // P(1) = (1-cos(delta))/2 in the first batch, (1-sin(delta))/2 in the
    // second, so the two means recover delta's cosine and sine.
    const double re = 1.0 - 2.0 * out.x1;
    const double im = 1.0 - 2.0 * out.x2;
    double dp = std::atan2(im, re);
    if (dp < 0.0) dp += kTwoPi;
    out.delta_prime = dp;
    return out;
}

void check_pea_input(const CostedUnitary& w, const StateVector& psi) {
    if (w.matrix.dim() == 0) throw invalid_operand("empty unitary");
    if (static_cast<std::uint64_t>(w.matrix.dim()) != psi.dim())
        throw invalid_operand("unitary and state dimensions differ");
}

PhaseEstimate pea_modified_core(const CostedUnitary& w,
                                const StateVector& psi, int n,
                                std::int64_t r, std::optional<double> c,
                                const PeaOptions& opts, Rng& rng) {
    check_pea_input(w, psi);
    if (r < 1) throw invalid_operand("repetition count must be positive");
    PhaseEstimate est;
    est.p = std::ldexp(1.0, -n);
    est.n_bits = n;
    est.r = r;
    est.confidence = c;
    if (n == 0) return est;

    const auto powers = power_ladder(w, n);
    StateVector reg = psi;
    est.ledger.add_preps(1);

    // Residual angle of W^(2^{n-1}).  Both batches run in parallel for
    // depth purposes: one sequential chain of 2^{n-1} uses.
    const DeltaPrimeEstimate dp = delta_prime_on_register(
        powers[static_cast<std::size_t>(n - 1)], reg, r, rng);
    est.ledger.charge(w.per_use, std::int64_t(1) << (n - 1), 2 * r);
    est.delta_prime = dp.delta_prime;

    // The residual angle is pi*b_n plus a remainder in (-pi/2, pi/2]; the
    // quadrant fixes the last bit, and values above 3*pi/2 wrap to negative
    // remainders so the compensation shrinks toward the grid.
    est.bits.assign(static_cast<std::size_t>(n), 0);
    const int a_n =
        (dp.delta_prime > kPi / 2 && dp.delta_prime < 1.5 * kPi) ? 1 : 0;
    est.bits[static_cast<std::size_t>(n - 1)] = a_n;
    const double delta_eff = (dp.delta_prime > 1.5 * kPi)
                                 ? dp.delta_prime - kTwoPi
                                 : dp.delta_prime;

    const StateVector plus = plus_state();
    for (int k = n - 1; k >= 1; --k) {
        // Bits n-1..k+1 enter as a binary fraction; bit n is already inside
        // the measured residual, which is scaled down to this bit's level.
        const double comp = bit_compensation(est.bits, k, n - 1) +
                            std::ldexp(delta_eff, k - n);
        std::int64_t reps = r;
        if (opts.exponential_confidence) reps = r << (n - k);
        est.ledger.charge(w.per_use, std::int64_t(1) << (k - 1), reps);

        std::int64_t ones = 0;
        if (opts.approx_parallel_reps) {
            ones = approx_parallel_bit(
                reg, powers[static_cast<std::size_t>(k - 1)], comp, reps,
                rng);
        } else {
            for (std::int64_t i = 0; i < reps; ++i)
                ones += kickback_experiment(
                    reg, powers[static_cast<std::size_t>(k - 1)], plus, comp,
                    rng);
        }
        est.bits[static_cast<std::size_t>(k - 1)] = (2 * ones > reps) ? 1 : 0;
    }
    est.phase = grid_phase(est.bits);
    return est;
}

}  // namespace

int bits_for_precision(double p) {
    if (!(p > 0.0)) throw invalid_operand("precision must be positive");
    if (p >= 1.0) return 0;
    // Small guard so exact powers of two do not round up a bit.
    return static_cast<int>(std::ceil(-std::log2(p) - 1e-12));
}

std::int64_t pea_uses(int n_bits) {
    if (n_bits < 0 || n_bits > 62)
        throw invalid_operand("bit count out of range");
    return (std::int64_t(1) << n_bits) - 1;
}

PhaseEstimate pea_original(const CostedUnitary& w, const StateVector& psi,
                           double p, Rng& rng) {
    check_pea_input(w, psi);
    PhaseEstimate est;
    est.p = p;
    const int n = bits_for_precision(p);
    est.n_bits = n;
    if (n == 0) return est;

    const auto powers = power_ladder(w, n);
    StateVector reg = psi;
    est.ledger.add_preps(1);
    est.bits.assign(static_cast<std::size_t>(n), 0);

    const StateVector plus = plus_state();
    for (int k = n; k >= 1; --k) {
        const double comp = bit_compensation(est.bits, k, n);
        est.ledger.charge(w.per_use, std::int64_t(1) << (k - 1));
        est.bits[static_cast<std::size_t>(k - 1)] = kickback_experiment(
            reg, powers[static_cast<std::size_t>(k - 1)], plus, comp, rng);
    }
    est.phase = grid_phase(est.bits);
    return est;
}

DeltaPrimeEstimate estimate_delta_prime(const DenseUnitary& w,
                                        StateVector& reg, int n_bits,
                                        std::int64_t r, Rng& rng) {
    if (static_cast<std::uint64_t>(w.dim()) != reg.dim())
        throw invalid_operand("unitary and state dimensions differ");
    if (n_bits < 1 || n_bits > 62)
        throw invalid_operand("bit count out of range");
    if (r < 1) throw invalid_operand("repetition count must be positive");
    return delta_prime_on_register(w.power(std::uint64_t(1) << (n_bits - 1)),
                                   reg, r, rng);
}

PhaseEstimate pea_modified(const CostedUnitary& w, const StateVector& psi,
                           double p, double confidence, Rng& rng,
                           const PeaOptions& opts) {
    const int n = bits_for_precision(p);
    std::int64_t r = (n == 0) ? 1 : select_r(n, confidence);
    if (r % 2 == 0) ++r;  // odd r makes majority ties unreachable
    PhaseEstimate est = pea_modified_core(w, psi, n, r, confidence, opts, rng);
    est.p = p;
    return est;
}

PhaseEstimate pea_modified_fixed_r(const CostedUnitary& w,
                                   const StateVector& psi, int n_bits,
                                   std::int64_t r, Rng& rng,
                                   const PeaOptions& opts) {
    if (n_bits < 0) throw invalid_operand("bit count must be non-negative");
    return pea_modified_core(w, psi, n_bits, r, std::nullopt, opts, rng);
}

PhaseEstimate pea_parallel_model(double eigenphase, double p, double c,
                                 Rng& rng, const ParallelPeaOptions& opts) {
    double phi = std::fmod(eigenphase, kTwoPi);
    if (phi < 0.0) phi += kTwoPi;

    const int n = bits_for_precision(p);
    std::int64_t r = (n == 0) ? 1 : select_r(n, c);
    if (r % 2 == 0) ++r;

    PhaseEstimate est;
    est.p = p;
    est.n_bits = n;
    est.r = r;
    est.confidence = c;

    const OracleCosts unit_cost{};
    if (opts.preproject) {
        // Preliminary sequential run that pins the eigenstate: charged at
        // the cost the repetition-hardened variant would incur, assumed
        // successful.
        if (!(opts.eigenphase_gap > 0.0))
            throw invalid_operand(
                "eigenstate preprojection needs a positive eigenphase gap");
        const double c_pre = 1.0 - (1.0 - c) * p / opts.b_constant;
        const int n_pre = bits_for_precision(opts.eigenphase_gap / 2.0);
        if (n_pre > 0) {
            std::int64_t r_pre = select_r(n_pre, c_pre);
            if (r_pre % 2 == 0) ++r_pre;
            est.ledger.add_preps(1);
            est.ledger.charge(unit_cost, std::int64_t(1) << (n_pre - 1),
                              2 * r_pre);
            for (int k = n_pre - 1; k >= 1; --k)
                est.ledger.charge(unit_cost, std::int64_t(1) << (k - 1),
                                  r_pre);
        }
    }

    if (n == 0) return est;
    est.ledger.add_preps(1);

    auto sample_mean = [&](double prob, std::int64_t reps) {
        std::int64_t ones = 0;
        for (std::int64_t i = 0; i < reps; ++i)
            if (rng.bernoulli(prob)) ++ones;
        return static_cast<double>(ones) / static_cast<double>(reps);
    };

    // Residual-angle stage: every controlled use sits in its own
    // ancilla/copy pair, so the whole stage is one layer deep.
    const double delta =
        std::fmod(std::ldexp(phi, n - 1), kTwoPi);  // phi >= 0, so in [0,2pi)
    const double s = std::sin(delta / 2.0);
    const double x1 = sample_mean(s * s, r);
    const double x2 = sample_mean((1.0 - std::sin(delta)) / 2.0, r);
    est.ledger.charge(unit_cost, 1, 2 * r * (std::int64_t(1) << (n - 1)));

    double dp = std::atan2(1.0 - 2.0 * x2, 1.0 - 2.0 * x1);
    if (dp < 0.0) dp += kTwoPi;
    est.delta_prime = dp;

    est.bits.assign(static_cast<std::size_t>(n), 0);
    const int a_n = (dp > kPi / 2 && dp < 1.5 * kPi) ? 1 : 0;
    est.bits[static_cast<std::size_t>(n - 1)] = a_n;
    const double delta_eff = (dp > 1.5 * kPi) ? dp - kTwoPi : dp;

    for (int k = n - 1; k >= 1; --k) {
        const double comp = bit_compensation(est.bits, k, n - 1) +
                            std::ldexp(delta_eff, k - n);
        const double xi = std::ldexp(phi, k - 1) - comp;
        const double p1 = std::sin(xi / 2.0) * std::sin(xi / 2.0);
        const std::int64_t reps = r;
        const double mean = sample_mean(p1, reps);
        est.bits[static_cast<std::size_t>(k - 1)] = (mean > 0.5) ? 1 : 0;
        est.ledger.charge(unit_cost, 1, reps * (std::int64_t(1) << (k - 1)));
    }
    est.phase = grid_phase(est.bits);
    return est;
}

}  // namespace qmet
