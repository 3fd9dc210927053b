#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qmet/oracles.hpp"

namespace qmet {

struct PeaOptions {
    // Repeat bit k 2^{n-k}*r times instead of r times, so that per-bit
    // failure probabilities shrink with the bit's significance.
    bool exponential_confidence = false;
    // Sample all r repetitions of one bit from a snapshot of the register
    // and collapse it once toward the majority outcome.  This is an
    // approximation: exact semantics measure sequentially, with every
    // outcome reshaping the register for the next repetition.
    bool approx_parallel_reps = false;
};

// Result of the two measurement batches that pin down the residual angle
// delta' = (phase * 2^{n-1}) mod 2*pi before the bit-by-bit sweep.
struct DeltaPrimeEstimate {
    double delta_prime = 0.0;  // in [0, 2*pi)
    double x1 = 0.0;           // mean outcome of the |+> ancilla batch
    double x2 = 0.0;           // mean outcome of the (|0>-i|1>)/sqrt2 batch
    std::int64_t r = 0;
};

struct PhaseEstimate {
    double phase = 0.0;     // 2*pi*(0.b1 b2 ... bn), always an n-bit grid value
    std::vector<int> bits;  // b1..bn, most significant first
    int n_bits = 0;
    double p = 0.0;         // precision as a fraction of a full turn
    std::optional<double> confidence;    // set by the repetition-based variant
    std::int64_t r = 1;                  // repetitions per bit
    std::optional<double> delta_prime;   // set by the repetition-based variant
    ResourceLedger ledger;
};

// Number of bits needed to resolve a phase fraction to within p:
// ceil(log2(1/p)), and 0 when p >= 1.
int bits_for_precision(double p);

// Sequential controlled-W applications in an n-bit run: 2^n - 1.
std::int64_t pea_uses(int n_bits);

// Bit-by-bit phase estimation with measured-bit feedback: one register
// preparation, a fresh |+> ancilla per bit, bits measured least significant
// first, each later bit compensated by the phase the earlier bits account
// for.  On an eigenstate with an exactly n-bit eigenphase the result is
// deterministic; at worst-case offset the two nearest grid phases appear
// with total probability 8/pi^2.
PhaseEstimate pea_original(const CostedUnitary& w, const StateVector& psi,
                           double p, Rng& rng);

// Measures the residual angle of w^(2^{n-1}) on the (collapsing) register:
// r experiments with a |+> ancilla and r with a (|0>-i|1>)/sqrt(2) ancilla
// recover cos(delta) and sin(delta).  Charges nothing; callers account for
// the 2r chains of 2^{n-1} uses themselves.
DeltaPrimeEstimate estimate_delta_prime(const DenseUnitary& w,
                                        StateVector& reg, int n_bits,
                                        std::int64_t r, Rng& rng);

// Repetition-hardened variant: the residual angle of W^{2^{n-1}} is
// estimated first and folded into every later bit's compensation, and each
// remaining bit is decided by majority over r repetitions.  r is the
// smallest odd count with failure bound 2(n-1)e^{-r/2}+4e^{-r/8} below 1-c.
// The returned phase is within 2^{-n} of a true eigenphase fraction with
// probability at least c (eigenstate input).
PhaseEstimate pea_modified(const CostedUnitary& w, const StateVector& psi,
                           double p, double confidence, Rng& rng,
                           const PeaOptions& opts = {});

// Same algorithm with n and r pinned directly; used to probe the failure
// bound at repetition counts the confidence rule would never pick.
PhaseEstimate pea_modified_fixed_r(const CostedUnitary& w,
                                   const StateVector& psi, int n_bits,
                                   std::int64_t r, Rng& rng,
                                   const PeaOptions& opts = {});

struct ParallelPeaOptions {
    // Model the near-deterministic eigenstate preparation that the
    // entangled-ancilla variant needs: one preliminary sequential run at
    // precision eigenphase_gap/2 and confidence 1-(1-c)*p/b_constant is
    // charged to the ledger (and assumed successful).
    bool preproject = false;
    double eigenphase_gap = 0.0;  // same units as p (fraction of a turn)
    double b_constant = 10.0;
};

// Entangled-ancilla variant, statistics-level model: with 2^{k-1} ancillas
// in a GHZ state and as many copies of the eigenstate, every bit costs one
// round of parallel controlled-W uses, so the sequential depth is one per
// stage instead of 2^{k-1}.  Outcome probabilities on an eigenstate are
// identical to the sequential variant, so bits are sampled from those
// closed forms rather than simulating the exponentially wide register.
// Copy preparation and measurement decoding are not charged.
PhaseEstimate pea_parallel_model(double eigenphase, double p, double c,
                                 Rng& rng,
                                 const ParallelPeaOptions& opts = {});

}  // namespace qmet
