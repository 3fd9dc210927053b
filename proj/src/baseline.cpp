#include "qmet/baseline.hpp"

#include <cmath>
#include <vector>

#include "qmet/common.hpp"
#include "qmet/statevector.hpp"

namespace qmet {

namespace {

double sample_mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Unbiased sample variance (zero for fewer than two samples).
double sample_variance(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return s / static_cast<double>(xs.size() - 1);
}

}  // namespace

SampledEstimate one_ancilla_overlap(const DenseUnitary& u, const StatePrep& v,
                                    std::int64_t num_samples, Rng& rng) {
    if (num_samples < 2)
        throw invalid_operand("one_ancilla_overlap needs at least 2 samples");
    if (v.dim() != u.dim())
        throw invalid_operand(
            "state preparation dimension does not match the unitary");

    const DenseUnitary cu = controlled(u);
    const std::int64_t n_x = (num_samples + 1) / 2;
    std::vector<double> xs, ys;
    xs.reserve(static_cast<std::size_t>(n_x));
    ys.reserve(static_cast<std::size_t>(num_samples - n_x));

    for (std::int64_t k = 0; k < num_samples; ++k) {
        StateVector reg = embed(v.state(), StateVector::basis_state(1, 0));
        apply(reg, gates::hadamard(), {0});
        apply(reg, cu);
        const int outcome = k < n_x ? measure_qubit_x(reg, 0, rng)
                                    : measure_qubit_y(reg, 0, rng);
        (k < n_x ? xs : ys).push_back(outcome == 0 ? 1.0 : -1.0);
    }

    SampledEstimate out;
    out.num_samples = num_samples;
    const double mx = sample_mean(xs);
    const double my = sample_mean(ys);
    out.value = cd(mx, my);
    out.standard_error =
        std::sqrt(sample_variance(xs, mx) / static_cast<double>(xs.size()) +
                  sample_variance(ys, my) / static_cast<double>(ys.size()));
    // One state preparation and one controlled-U per shot; shots are
    // independent, so the whole batch is one layer deep.
    OracleCosts per_shot;
    per_shot.state_preps = 1;
    per_shot.u_uses = 1;
    out.ledger.charge(per_shot, 1, num_samples);
    return out;
}

SampledEstimate direct_sample_mean(const EvolutionOracle& evolution,
                                   const StatePrep& v,
                                   std::int64_t num_samples, Rng& rng) {
    if (num_samples < 2)
        throw invalid_operand("direct_sample_mean needs at least 2 samples");
    if (v.dim() != evolution.dim())
        throw invalid_operand(
            "state preparation dimension does not match the evolution");

    // Born weights of |psi> in the eigenbasis of A.
    const Eigen::MatrixXcd& vecs = evolution.eigenvectors();
    const Eigen::VectorXd& vals = evolution.eigenvalues();
    const StateVector& psi = v.state();
    const Eigen::Map<const Eigen::VectorXcd> amps(psi.amps().data(),
                                                  psi.dim());
    std::vector<double> weights(static_cast<std::size_t>(vals.size()));
    for (Eigen::Index j = 0; j < vals.size(); ++j)
        weights[static_cast<std::size_t>(j)] =
            std::norm(vecs.col(j).dot(amps));

    std::vector<double> draws;
    draws.reserve(static_cast<std::size_t>(num_samples));
    for (std::int64_t k = 0; k < num_samples; ++k) {
        const double r = rng.uniform();
        double acc = 0.0;
        std::size_t pick = weights.size() - 1;
        for (std::size_t j = 0; j < weights.size(); ++j) {
            acc += weights[j];
            if (r < acc) {
                pick = j;
                break;
            }
        }
        draws.push_back(vals(static_cast<Eigen::Index>(pick)));
    }

    SampledEstimate out;
    out.num_samples = num_samples;
    const double mean = sample_mean(draws);
    out.value = cd(mean, 0.0);
    out.standard_error = std::sqrt(sample_variance(draws, mean) /
                                   static_cast<double>(num_samples));
    OracleCosts per_shot;
    per_shot.state_preps = 1;
    per_shot.u_uses = 0;
    out.ledger.charge(per_shot, 1, num_samples);
    return out;
}

}  // namespace qmet
