#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qmet/common.hpp"

namespace qmet {

// Two-sided Hoeffding tail 2*exp(-2*r*x^2) for r samples and deviation x.
double hoeffding_bound(std::int64_t r, double x);

// Failure-probability bound for the r-repetition phase-estimation run on
// n bits: x(n, r) = 2(n-1)e^{-r/2} + 4e^{-r/8}.  The first term covers the
// n-1 majority-voted bits, the second the two batches that fix the residual
// angle.  For n <= 1 only the residual term remains.
double pea_failure_bound(int n_bits, std::int64_t r);

// Smallest r with pea_failure_bound(n, r) < 1 - c.  Throws
// resource_limit_error if no r up to `cap` suffices.
std::int64_t select_r(int n_bits, double confidence,
                      std::int64_t cap = 1'000'000);

// Clamp a bound into [0, 1] for reporting; raw values can exceed 1.
double clamp_probability(double p);

// Tracks how an overall failure budget 1-c is split across sub-steps.
// Each allocation of confidence c_i consumes 1-c_i; the running total may
// not exceed the budget.
class ConfidenceBudget {
  public:
    explicit ConfidenceBudget(double total_confidence);

    // Registers a sub-step at confidence c_i and returns c_i.
    double allocate(const std::string& label, double c_i);

    double total() const { return total_; }
    double spent() const { return spent_; }
    double remaining() const { return (1.0 - total_) - spent_; }
    const std::vector<std::pair<std::string, double>>& allocations() const {
        return allocations_;
    }

  private:
    double total_ = 0.0;  // the overall confidence c
    double spent_ = 0.0;  // sum of 1 - c_i so far
    std::vector<std::pair<std::string, double>> allocations_;
};

}  // namespace qmet
