#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmet/amp_overlap.hpp"
#include "qmet/oracles.hpp"

namespace qmet {

// Bounds on how eigenvalue weight of A spreads around <A>:
//   F(delta) >= Pr(|lambda - <A>| >= delta)
//   G(delta) >= delta*F(delta) + integral_delta^inf F(s) ds
// with Ginv(x) the smallest delta at which G drops to x.  Four closed-form
// families are provided; "variance" is the polynomial family at exponent 0
// with the variance recorded (Chebyshev: F = min(1, v/delta^2)).
class TailModel {
  public:
    enum class Kind { bounded, exponential, polynomial, point };

    static TailModel bounded(double lambda_max, double b);
    static TailModel exponential(double scale, double b);
    static TailModel polynomial(double beta, double coefficient, double b);
    static TailModel point(double b);
    static TailModel variance(double v, double b);

    Kind kind() const { return kind_; }
    double b() const { return b_; }
    std::optional<double> variance_bound() const { return variance_bound_; }

    double F(double delta) const;
    double G(double delta) const;
    double Ginv(double x) const;

    // Flat key/value form used by the experiment config ([tail] section).
    std::map<std::string, std::string> to_config() const;
    static TailModel from_config(
        const std::map<std::string, std::string>& kv);

  private:
    TailModel() = default;
    Kind kind_ = Kind::point;
    double b_ = 0.0;
    double lambda_max_ = 0.0;  // bounded
    double scale_ = 0.0;       // exponential
    double beta_ = 0.0;        // polynomial
    double coeff_ = 0.0;       // polynomial
    std::optional<double> variance_bound_;
};

// Coefficients C_0..C_K of e^{-i theta l} in the truncated-log series
// sum_{k=1}^K (-1)^{k-1} (e^{-i theta} - 1)^k / k.  They always sum to zero
// and are bounded by 2^K.
struct SeriesCoefficients {
    int K = 0;
    std::vector<double> c;
};

SeriesCoefficients series_coefficients(int K);

// Second-stage evolution parameters: the phase threshold theta_max and the
// total evolution time t (the overlap calls use tau = t/2, or l*t/2 for the
// series variant).
struct StageIIParams {
    double theta_max = 0.0;
    double t = 0.0;
    int K = 1;
};

// The four constraints the second stage needs, evaluated directly:
//   A: series truncation small enough   (theta^3/6 or the order-K form)
//   B: tail contribution small enough   (G(theta/t) vs theta * budget)
//   C: theta within range               (<= 1, or <= 1/(K+1) for K >= 2)
//   D: localisation compatible          (t * delta <= theta)
struct Stage2Checks {
    bool truncation_ok = false;
    bool tail_ok = false;
    bool theta_in_range = false;
    bool localization_ok = false;
    bool all() const {
        return truncation_ok && tail_ok && theta_in_range && localization_ok;
    }
};

Stage2Checks stage2_predicates(const StageIIParams& params,
                               const TailModel& tail, double p, double delta);

// Maximises theta subject to the combined constraint, then sets
// t = theta / max(delta, Ginv(theta * budget)).  Taking the max keeps the
// localisation constraint satisfied even when the first stage pinned <A>
// more loosely than the tail alone would suggest.  For bounded tails with
// K = 1 and delta <= lambda_max this reduces to the closed forms
// theta = sqrt(3p/(4 lambda_max)), t = sqrt(3p/4)/lambda_max^{3/2}.
StageIIParams solve_stage2(const TailModel& tail, double p, double delta,
                           int K);

struct Stage1Result {
    double a0 = 0.0;     // median eigenvalue estimate
    double delta = 0.0;  // localisation radius: |a0 - <A>| <= delta w.h.p.
    double t_i = 0.0;    // evolution time per phase-estimation call
    std::int64_t r = 0;  // number of phase-estimation calls
    double c_prime = 0.0;
    std::vector<double> lambda_estimates;
    ResourceLedger ledger;
};

// Rough localisation of <A>: r phase estimations of e^{-iA t_i} at a fixed
// coarse precision, median-combined.  t_i = pi/(4(b+delta)) keeps all
// relevant eigenphases in (-pi/4, pi/4), so the [0,2pi) phases wrap cleanly
// to signed values.  delta is the smallest p*2^j with F(delta/2) < 1/4.
Stage1Result stage1(const EvolutionOracle& evolution, const StatePrep& v,
                    const TailModel& tail, double p, double c, Rng& rng);

struct Stage1LogResult {
    double a = 0.0;
    double delta = 0.0;
    std::vector<double> p_a_history;  // starts at b, ends <= delta
    int iterations = 0;
    ResourceLedger ledger;
};

// Contracting localisation: starting from |<A>| <= b, each overlap call on
// e^{-i(A-a)t} with t = 1/(p_a + delta) shrinks the uncertainty p_a by at
// least half (while p_a >= 2*delta), so at most ceil(log2(b/delta))
// iterations run.  delta is the smallest value with G(delta) < delta/6 and
// F(delta) < 1/18; for a point model that is arbitrarily small, so callers
// must supply a positive delta_floor.
Stage1LogResult stage1_log(const EvolutionOracle& evolution,
                           const StatePrep& v, const TailModel& tail,
                           double c, Rng& rng, double delta_floor = 0.0,
                           std::optional<bool> suppression_ancilla = {});

struct Stage2Result {
    double value = 0.0;
    ResourceLedger ledger;
};

// Single-call refinement: the imaginary part of the overlap of
// e^{-i(A-a0)(t/2)} is the mean of sin((lambda-a0) t/2), which is linear in
// lambda - a0 up to the truncation the constraints budget for.
Stage2Result stage2(const EvolutionOracle& evolution, const StatePrep& v,
                    double a0, const StageIIParams& params, double p,
                    double c, Rng& rng,
                    std::optional<bool> suppression_ancilla = {});

// Order-K refinement: K overlap calls at times l*t/2 combined with the
// series coefficients, replacing the linearisation by a truncated
// logarithm; the longer evolutions buy a smaller truncation error.
Stage2Result stage2_prime(const EvolutionOracle& evolution,
                          const StatePrep& v, double a0,
                          const StageIIParams& params, double p, double c,
                          Rng& rng,
                          std::optional<bool> suppression_ancilla = {});

struct EeaOptions {
    bool use_stage1_log = false;
    int K = 1;
    // Draw one uniformly random ancilla bit per run and replace every
    // overlap call's evolution by its controlled version on that bit, then
    // unfold the estimate (x -> 2x - 1).  Averaged over runs this
    // reproduces the maximally-mixed-ancilla statistics; see README for
    // why single runs are not within-p reliable.
    bool overlap_suppression = false;
};

struct EeaResult {
    double value = 0.0;
    double a0 = 0.0;
    double delta = 0.0;
    std::optional<StageIIParams> stage2_params;  // absent when stage II skipped
    bool stage2_skipped = false;
    int stage1_iterations = 0;  // contracting variant only
    bool suppression_used = false;
    ResourceLedger ledger;
};

// The composed estimator: localise <A> to within delta (first stage, or the
// bound b itself when b is already tighter than the stage-one grid), then
// refine to within p (second stage, skipped when delta <= p).  Returned
// value is within p of <A> with probability at least c.
EeaResult eea_full(const EvolutionOracle& evolution, const StatePrep& v,
                   const TailModel& tail, double p, double c,
                   const EeaOptions& options, Rng& rng);

}  // namespace qmet
