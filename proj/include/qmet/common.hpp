#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace qmet {

// Thrown when an input violates a documented precondition (non-unitary
// matrix, overlap magnitude above one, mismatched dimensions, ...).
struct invalid_operand : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when a requested precision/confidence pair admits no valid
// parameter assignment (e.g. the spread floor exceeds every feasible
// threshold in the second-stage solver).
struct infeasibility_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a search for repetition counts or similar exceeds a hard cap.
struct resource_limit_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when an internal consistency check fails.  Seeing this means a bug,
// not bad user input.
struct internal_error : std::logic_error {
    using std::logic_error::logic_error;
};

// Config-file syntax problem, carrying the 1-based line number.
struct parse_error : std::runtime_error {
    int line;
    parse_error(const std::string& msg, int line_no)
        : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"),
          line(line_no) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derives a stream seed for a given trial index so that trials are
// independently seeded yet reproducible from one master seed, regardless of
// how work is split across threads.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master + 0x9E3779B97F4A7C15ULL * (index + 1));
}

// Thin wrapper around mt19937_64.  We avoid std::uniform_real_distribution
// and std::normal_distribution because their output sequences are not
// pinned by the standard; this keeps results byte-identical across
// platforms and library versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per call; the pair's second
    // member is cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t raw() { return eng_(); }

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace qmet
