#include "qmet/confidence.hpp"

#include <algorithm>
#include <cmath>

namespace qmet {

double hoeffding_bound(std::int64_t r, double x) {
    if (r < 1) throw invalid_operand("sample count must be positive");
    if (x < 0.0) throw invalid_operand("deviation must be non-negative");
    return 2.0 * std::exp(-2.0 * static_cast<double>(r) * x * x);
}

double pea_failure_bound(int n_bits, std::int64_t r) {
    if (n_bits < 0) throw invalid_operand("bit count must be non-negative");
    if (r < 1) throw invalid_operand("repetition count must be positive");
    const double rd = static_cast<double>(r);
    const double bits = static_cast<double>(std::max(n_bits - 1, 0));
    return 2.0 * bits * std::exp(-rd / 2.0) + 4.0 * std::exp(-rd / 8.0);
}

std::int64_t select_r(int n_bits, double confidence, std::int64_t cap) {
    if (!(confidence > 0.0 && confidence < 1.0))
        throw invalid_operand("confidence must lie in (0, 1)");
    const double budget = 1.0 - confidence;
    for (std::int64_t r = 1; r <= cap; ++r) {
        if (pea_failure_bound(n_bits, r) < budget) return r;
    }
    throw resource_limit_error(
        "no repetition count up to " + std::to_string(cap) +
        " reaches confidence " + std::to_string(confidence));
}

double clamp_probability(double p) {
    return std::min(1.0, std::max(0.0, p));
}

ConfidenceBudget::ConfidenceBudget(double total_confidence)
    : total_(total_confidence) {
    if (!(total_confidence > 0.0 && total_confidence < 1.0))
        throw invalid_operand("overall confidence must lie in (0, 1)");
}

double ConfidenceBudget::allocate(const std::string& label, double c_i) {
    if (!(c_i > 0.0 && c_i < 1.0))
        throw invalid_operand("sub-step confidence must lie in (0, 1)");
    const double cost = 1.0 - c_i;
    if (spent_ + cost > (1.0 - total_) + 1e-12)
        throw invalid_operand("confidence budget exceeded at step '" + label +
                              "'");
    spent_ += cost;
    allocations_.emplace_back(label, c_i);
    return c_i;
}

}  // namespace qmet
