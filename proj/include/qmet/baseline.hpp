#pragma once

#include <cstdint>

#include "qmet/oracles.hpp"

namespace qmet {

// Result of a shot-noise-limited estimator: mean of num_samples independent
// measurements plus its estimated standard error (sample standard deviation
// over the square root of the relevant sample count; for a complex estimate
// the two quadratures are combined in quadrature).
struct SampledEstimate {
    cd value{0.0, 0.0};
    std::int64_t num_samples = 0;
    double standard_error = 0.0;
    ResourceLedger ledger;
};

// One-ancilla overlap measurement: prepare |+>|psi>, apply controlled-U,
// read the ancilla in the sigma_x basis (first ceil(N/2) samples, real
// part) or the sigma_y basis (remaining samples, imaginary part).  Each
// +-1-valued outcome is one binomial shot, so the error scales as 1/sqrt(N).
SampledEstimate one_ancilla_overlap(const DenseUnitary& u, const StatePrep& v,
                                    std::int64_t num_samples, Rng& rng);

// Direct eigenvalue sampling of A: draw eigenvalues with the Born weights
// |<e_j|psi>|^2 (exact eigendecomposition as the sampling distribution) and
// return the sample mean.
SampledEstimate direct_sample_mean(const EvolutionOracle& evolution,
                                   const StatePrep& v,
                                   std::int64_t num_samples, Rng& rng);

}  // namespace qmet
