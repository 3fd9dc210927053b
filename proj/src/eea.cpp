#include "qmet/eea.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

#include "qmet/common.hpp"
#include "qmet/statevector.hpp"

namespace qmet {

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double parse_double(const std::map<std::string, std::string>& kv,
                    const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw invalid_operand("tail config missing key '" + key + "'");
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        while (pos < it->second.size() &&
               std::isspace(static_cast<unsigned char>(it->second[pos])))
            ++pos;
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw invalid_operand("tail config value for '" + key +
                              "' is not a number: " + it->second);
    }
}

void require_positive(double x, const char* what) {
    if (!(x > 0.0))
        throw invalid_operand(std::string(what) + " must be positive");
}

}  // namespace

TailModel TailModel::bounded(double lambda_max, double b) {
    require_positive(lambda_max, "lambda_max");
    if (b < 0.0) throw invalid_operand("b must be nonnegative");
    TailModel m;
    m.kind_ = Kind::bounded;
    m.lambda_max_ = lambda_max;
    m.b_ = b;
    return m;
}

TailModel TailModel::exponential(double scale, double b) {
    require_positive(scale, "scale");
    if (b < 0.0) throw invalid_operand("b must be nonnegative");
    TailModel m;
    m.kind_ = Kind::exponential;
    m.scale_ = scale;
    m.b_ = b;
    return m;
}

TailModel TailModel::polynomial(double beta, double coefficient, double b) {
    if (beta < 0.0) throw invalid_operand("beta must be nonnegative");
    require_positive(coefficient, "coefficient");
    if (b < 0.0) throw invalid_operand("b must be nonnegative");
    TailModel m;
    m.kind_ = Kind::polynomial;
    m.beta_ = beta;
    m.coeff_ = coefficient;
    m.b_ = b;
    return m;
}

TailModel TailModel::point(double b) {
    if (b < 0.0) throw invalid_operand("b must be nonnegative");
    TailModel m;
    m.kind_ = Kind::point;
    m.b_ = b;
    return m;
}

TailModel TailModel::variance(double v, double b) {
    TailModel m = polynomial(0.0, v, b);
    m.variance_bound_ = v;
    return m;
}

double TailModel::F(double delta) const {
    if (delta < 0.0) throw invalid_operand("delta must be nonnegative");
    switch (kind_) {
        case Kind::bounded:
            return delta < lambda_max_ ? 1.0 : 0.0;
        case Kind::exponential:
            return std::min(1.0, std::exp(1.0 - delta / scale_));
        case Kind::polynomial: {
            if (delta == 0.0) return 1.0;
            return std::min(1.0, coeff_ / std::pow(delta, 2.0 + beta_));
        }
        case Kind::point:
            return 0.0;
    }
    throw internal_error("unhandled tail kind");
}

double TailModel::G(double delta) const {
    if (delta < 0.0) throw invalid_operand("delta must be nonnegative");
    switch (kind_) {
        case Kind::bounded:
            return delta < lambda_max_ ? lambda_max_ : 0.0;
        case Kind::exponential: {
            if (delta <= scale_) return 2.0 * scale_;
            return (delta + scale_) * std::exp(1.0 - delta / scale_);
        }
        case Kind::polynomial: {
            const double d0 = std::pow(coeff_, 1.0 / (2.0 + beta_));
            const double ratio = (2.0 + beta_) / (1.0 + beta_);
            if (delta <= d0) return d0 * ratio;
            return coeff_ * ratio * std::pow(delta, -(1.0 + beta_));
        }
        case Kind::point:
            return 0.0;
    }
    throw internal_error("unhandled tail kind");
}

double TailModel::Ginv(double x) const {
    if (!(x > 0.0)) throw invalid_operand("Ginv requires x > 0");
    switch (kind_) {
        case Kind::bounded:
            return lambda_max_;
        case Kind::exponential: {
            if (x >= 2.0 * scale_) return 0.0;
            // G is constant (= 2*scale) up to scale and strictly decreasing
            // beyond it; bracket then bisect, returning the inner endpoint
            // so that G(Ginv(x)) <= x holds exactly.
            double lo = scale_, hi = 2.0 * scale_;
            int guard = 0;
            while (G(hi) > x) {
                lo = hi;
                hi *= 2.0;
                if (++guard > 2000)
                    throw internal_error("tail inverse failed to bracket");
            }
            for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
                const double mid = 0.5 * (lo + hi);
                (G(mid) > x ? lo : hi) = mid;
            }
            return hi;
        }
        case Kind::polynomial: {
            const double d0 = std::pow(coeff_, 1.0 / (2.0 + beta_));
            const double ratio = (2.0 + beta_) / (1.0 + beta_);
            if (x >= d0 * ratio) return 0.0;
            return std::pow(coeff_ * ratio / x, 1.0 / (1.0 + beta_));
        }
        case Kind::point:
            return 0.0;
    }
    throw internal_error("unhandled tail kind");
}

std::map<std::string, std::string> TailModel::to_config() const {
    std::map<std::string, std::string> kv;
    kv["b"] = fmt_double(b_);
    if (variance_bound_) {
        kv["kind"] = "variance";
        kv["v"] = fmt_double(*variance_bound_);
        return kv;
    }
    switch (kind_) {
        case Kind::bounded:
            kv["kind"] = "bounded";
            kv["lambda_max"] = fmt_double(lambda_max_);
            break;
        case Kind::exponential:
            kv["kind"] = "exponential";
            kv["scale"] = fmt_double(scale_);
            break;
        case Kind::polynomial:
            kv["kind"] = "polynomial";
            kv["beta"] = fmt_double(beta_);
            kv["coefficient"] = fmt_double(coeff_);
            break;
        case Kind::point:
            kv["kind"] = "point";
            break;
    }
    return kv;
}

TailModel TailModel::from_config(
    const std::map<std::string, std::string>& kv) {
    auto it = kv.find("kind");
    if (it == kv.end()) throw invalid_operand("tail config missing 'kind'");
    const std::string& kind = it->second;
    const double b = parse_double(kv, "b");
    if (kind == "bounded") return bounded(parse_double(kv, "lambda_max"), b);
    if (kind == "exponential") return exponential(parse_double(kv, "scale"), b);
    if (kind == "polynomial")
        return polynomial(parse_double(kv, "beta"),
                          parse_double(kv, "coefficient"), b);
    if (kind == "variance") return variance(parse_double(kv, "v"), b);
    if (kind == "point") return point(b);
    throw invalid_operand("unknown tail kind '" + kind + "'");
}

SeriesCoefficients series_coefficients(int K) {
    if (K < 1 || K > 20)
        throw invalid_operand("series order must lie in [1, 20]");
    // Accumulate sum_{k=1}^K (-1)^{k-1}/k * (z-1)^k coefficient by
    // coefficient, expanding (z-1)^k iteratively.
    std::vector<double> power{1.0};
    std::vector<double> total(static_cast<std::size_t>(K) + 1, 0.0);
    for (int k = 1; k <= K; ++k) {
        std::vector<double> next(power.size() + 1, 0.0);
        for (std::size_t l = 0; l < power.size(); ++l) {
            next[l] -= power[l];
            next[l + 1] += power[l];
        }
        power = std::move(next);
        const double f = (k % 2 ? 1.0 : -1.0) / k;
        for (std::size_t l = 0; l < power.size(); ++l) total[l] += f * power[l];
    }
    return {K, std::move(total)};
}

namespace {

double stage2_budget_scale(double p, int K) {
    if (K == 1) return p / 8.0;
    return p / (8.0 * K * std::ldexp(1.0, K));
}

double stage2_rhs(double theta, double p, int K) {
    if (K == 1) return 3.0 * p / (4.0 * theta * theta);
    return (p / 8.0) * (K + 1) * std::pow(1.0 - theta, K + 1) /
           std::pow(theta, K);
}

double stage2_truncation(double theta, int K) {
    if (K == 1) return theta * theta * theta / 6.0;
    return std::pow(theta, K + 1) /
           ((K + 1) * std::pow(1.0 - theta, K + 1));
}

}  // namespace

StageIIParams solve_stage2(const TailModel& tail, double p, double delta,
                           int K) {
    require_positive(p, "p");
    require_positive(delta, "delta");
    if (K < 1 || K > 20)
        throw invalid_operand("series order must lie in [1, 20]");
    if (p > delta * (1.0 + 1e-12))
        throw invalid_operand(
            "target precision must not exceed the localisation radius");

    const double cap = K == 1 ? 1.0 : 1.0 / (K + 1);
    const double scale = stage2_budget_scale(p, K);
    auto eta = [&](double theta) {
        return std::max(delta, tail.Ginv(theta * scale));
    };
    auto feasible = [&](double theta) {
        return eta(theta) <= stage2_rhs(theta, p, K);
    };

    const double lo_floor = 1e-9;
    double theta;
    if (feasible(cap)) {
        theta = cap;
    } else if (feasible(lo_floor)) {
        // eta is nonincreasing-in-1/theta no worse than ~theta^{-1} while
        // the right-hand side falls at least like theta^{-2}, so the
        // feasible set is an interval starting at small theta; bisect for
        // its upper end.
        double lo = lo_floor, hi = cap;
        for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
            const double mid = 0.5 * (lo + hi);
            (feasible(mid) ? lo : hi) = mid;
        }
        theta = lo;
    } else {
        // Safety net for any non-monotone corner: coarse log-spaced scan.
        theta = 0.0;
        for (int i = 64; i >= 1; --i) {
            const double cand =
                lo_floor * std::pow(cap / lo_floor, i / 64.0);
            if (feasible(cand)) {
                theta = cand;
                break;
            }
        }
        if (theta == 0.0) {
            std::ostringstream os;
            os << "no phase threshold satisfies the combined truncation and "
                  "tail constraint at p="
               << p << ", delta=" << delta << ", K=" << K;
            throw infeasibility_error(os.str());
        }
    }

    StageIIParams out;
    out.theta_max = theta;
    out.t = theta / eta(theta);
    out.K = K;
    return out;
}

Stage2Checks stage2_predicates(const StageIIParams& params,
                               const TailModel& tail, double p,
                               double delta) {
    const double theta = params.theta_max;
    const double t = params.t;
    const int K = params.K;
    const double tau = t / 2.0;
    const double slack = 1.0 + 1e-9;  // absorb solver round-off only

    Stage2Checks ck;
    ck.truncation_ok = stage2_truncation(theta, K) <= tau * p / 4.0 * slack;
    ck.tail_ok =
        tail.G(theta / t) <= theta * stage2_budget_scale(p, K) * slack;
    const double cap = K == 1 ? 1.0 : 1.0 / (K + 1);
    ck.theta_in_range = theta > 0.0 && theta <= cap * slack;
    ck.localization_ok = t * delta <= theta * slack;
    return ck;
}

namespace {

void check_stage_inputs(const EvolutionOracle& evolution, const StatePrep& v,
                        double c) {
    if (v.dim() != evolution.dim())
        throw invalid_operand(
            "state preparation dimension does not match the evolution");
    if (!(c > 0.0 && c < 1.0))
        throw invalid_operand("confidence must lie in (0, 1)");
}

// One overlap estimation of e^{-i(A - offset) tau}.  With a suppression
// ancilla supplied the evolution is replaced by its controlled version
// acting on that bit and the estimate is unfolded: over many runs the
// uniformly drawn bit reproduces the maximally mixed ancilla, whose
// coherences average (1 + x)/2.
cd overlap_call(const EvolutionOracle& evolution, const StatePrep& v,
                double tau, double precision, double confidence,
                const std::optional<bool>& suppress, Rng& rng,
                ResourceLedger& ledger) {
    if (!suppress.has_value()) {
        CostedUnitary w = evolution.costed_exp(tau);
        OverlapEstimate est =
            overlap_estimate(w, v, precision, confidence, rng);
        ledger.append_sequential(est.ledger);
        return est.value;
    }
    const bool bit = *suppress;
    CostedUnitary w = evolution.costed_exp(tau);
    CostedUnitary cw(controlled(w.matrix), w.per_use);
    cw.power_fn = [evolution, tau](std::uint64_t k) {
        return controlled(
            evolution.exp_matrix(tau * static_cast<double>(k)));
    };
    StatePrep vp(
        kron(bit ? gates::pauli_x() : gates::identity(2), v.unitary()));
    OverlapEstimate est = overlap_estimate(cw, vp, precision, confidence, rng);
    ledger.append_sequential(est.ledger);
    return 2.0 * est.value - 1.0;
}

// Smallest delta on the grid {p * 2^j : j >= 0} with F(delta/2) < 1/4.
double stage1_grid_delta(const TailModel& tail, double p) {
    double delta = p;
    for (int j = 0; j <= 200; ++j) {
        if (tail.F(delta / 2.0) < 0.25) return delta;
        delta *= 2.0;
    }
    throw infeasibility_error(
        "no spread radius on the doubling grid satisfies F(delta/2) < 1/4");
}

// Smallest delta with G(delta) < delta/6 and F(delta) < 1/18; 0 when the
// model admits arbitrarily small delta (point model).
double stage1_log_delta(const TailModel& tail) {
    auto ok = [&](double d) {
        return tail.G(d) < d / 6.0 && tail.F(d) < 1.0 / 18.0;
    };
    switch (tail.kind()) {
        case TailModel::Kind::point:
            return 0.0;
        case TailModel::Kind::bounded:
            // For delta below the spectral bound G = lambda_max > delta/6
            // fails; at the bound both G and F vanish.
            return tail.Ginv(1e-300);
        default:
            break;
    }
    double hi = 1e-6;
    int guard = 0;
    while (!ok(hi)) {
        hi *= 2.0;
        if (++guard > 2000)
            throw infeasibility_error(
                "no spread radius satisfies the contraction premises");
    }
    double lo = 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace

Stage1Result stage1(const EvolutionOracle& evolution, const StatePrep& v,
                    const TailModel& tail, double p, double c, Rng& rng) {
    check_stage_inputs(evolution, v, c);
    require_positive(p, "p");

    Stage1Result out;
    out.delta = stage1_grid_delta(tail, p);
    out.t_i = kPi / (4.0 * (tail.b() + out.delta));

    // 2 e^{-r/8} <= (1-c)/4, rounded up to odd for a clean median.
    std::int64_t r = static_cast<std::int64_t>(
        std::ceil(8.0 * std::log(8.0 / (1.0 - c))));
    if (r < 1) r = 1;
    while (2.0 * std::exp(-static_cast<double>(r) / 8.0) > (1.0 - c) / 4.0)
        ++r;
    if (r % 2 == 0) ++r;
    out.r = r;
    out.c_prime = 1.0 - (1.0 - c) / (4.0 * static_cast<double>(r));

    // Eigenphases of e^{-iA t_i} must come out within delta*t_i/2 radians,
    // i.e. a fraction delta*t_i/(4 pi) of a full turn.
    const double pe_precision = out.delta * out.t_i / (4.0 * kPi);
    CostedUnitary w = evolution.costed_exp(out.t_i);

    out.lambda_estimates.reserve(static_cast<std::size_t>(r));
    for (std::int64_t k = 0; k < r; ++k) {
        PhaseEstimate pe =
            pea_modified(w, v.state(), pe_precision, out.c_prime, rng);
        double phase = pe.phase;
        if (phase >= kPi) phase -= 2.0 * kPi;  // signed eigenphase
        out.lambda_estimates.push_back(-phase / out.t_i);
        out.ledger.merge_parallel(pe.ledger);
    }
    std::vector<double> sorted = out.lambda_estimates;
    std::sort(sorted.begin(), sorted.end());
    out.a0 = sorted[static_cast<std::size_t>((r - 1) / 2)];
    return out;
}

Stage1LogResult stage1_log(const EvolutionOracle& evolution,
                           const StatePrep& v, const TailModel& tail,
                           double c, Rng& rng, double delta_floor,
                           std::optional<bool> suppression_ancilla) {
    check_stage_inputs(evolution, v, c);
    if (delta_floor < 0.0)
        throw invalid_operand("delta_floor must be nonnegative");

    Stage1LogResult out;
    out.delta = std::max(stage1_log_delta(tail), delta_floor);
    if (!(out.delta > 0.0))
        throw invalid_operand(
            "tail admits arbitrarily small spread; supply a positive "
            "delta_floor");

    const double b = tail.b();
    out.a = 0.0;
    out.p_a_history.push_back(b);
    if (b <= out.delta) return out;  // |<A>| <= b is already tight enough

    const int max_iter = static_cast<int>(
        std::ceil(std::log2(b / out.delta) - 1e-12));
    const double c_call = 1.0 - (1.0 - c) / (2.0 * max_iter);

    double p_a = b;
    while (p_a > out.delta) {
        if (out.iterations >= max_iter)
            throw internal_error(
                "localisation loop exceeded its iteration bound");
        ++out.iterations;
        const double t = 1.0 / (p_a + out.delta);
        const cd x =
            overlap_call(evolution.with_offset(out.a), v, t, 1.0 / 18.0,
                         c_call, suppression_ancilla, rng, out.ledger);
        out.a -= x.imag() / t;
        const double next =
            out.delta / 6.0 + (5.0 / 18.0) * (p_a + out.delta);
        if (p_a >= 2.0 * out.delta && next > p_a / 2.0 + 1e-12)
            throw internal_error("localisation update failed to contract");
        p_a = next;
        out.p_a_history.push_back(p_a);
    }
    return out;
}

Stage2Result stage2(const EvolutionOracle& evolution, const StatePrep& v,
                    double a0, const StageIIParams& params, double p,
                    double c, Rng& rng,
                    std::optional<bool> suppression_ancilla) {
    check_stage_inputs(evolution, v, c);
    if (params.K != 1)
        throw invalid_operand("plain second stage requires K = 1");
    const double tau = params.t / 2.0;
    Stage2Result out;
    const cd x =
        overlap_call(evolution.with_offset(a0), v, tau, tau * p / 4.0,
                     1.0 - (1.0 - c) / 2.0, suppression_ancilla, rng,
                     out.ledger);
    out.value = a0 - x.imag() / tau;
    return out;
}

Stage2Result stage2_prime(const EvolutionOracle& evolution,
                          const StatePrep& v, double a0,
                          const StageIIParams& params, double p, double c,
                          Rng& rng, std::optional<bool> suppression_ancilla) {
    check_stage_inputs(evolution, v, c);
    const int K = params.K;
    if (K < 2)
        throw invalid_operand("series second stage requires K >= 2");
    const SeriesCoefficients series = series_coefficients(K);
    const double tau = params.t / 2.0;
    const double precision = tau * p / (4.0 * K * std::ldexp(1.0, K));
    const double confidence = 1.0 - (1.0 - c) / (2.0 * K);

    Stage2Result out;
    cd acc = series.c[0];  // y_0 = 1
    const EvolutionOracle shifted = evolution.with_offset(a0);
    for (int l = 1; l <= K; ++l) {
        ResourceLedger sub;
        const cd y = overlap_call(shifted, v, l * tau, precision, confidence,
                                  suppression_ancilla, rng, sub);
        out.ledger.merge_parallel(sub);
        acc += series.c[static_cast<std::size_t>(l)] * y;
    }
    out.value = a0 - acc.imag() / tau;
    return out;
}

EeaResult eea_full(const EvolutionOracle& evolution, const StatePrep& v,
                   const TailModel& tail, double p, double c,
                   const EeaOptions& options, Rng& rng) {
    check_stage_inputs(evolution, v, c);
    require_positive(p, "p");
    if (options.K < 1 || options.K > 20)
        throw invalid_operand("series order must lie in [1, 20]");

    const EvolutionOracle base = evolution.with_offset(0.0);
    EeaResult out;
    out.suppression_used = options.overlap_suppression;
    // One ancilla draw per run: every overlap call below sees the same bit,
    // matching a single sample of the mixed-ancilla ensemble.
    const std::optional<bool> anc =
        options.overlap_suppression ? std::optional<bool>(rng.bernoulli(0.5))
                                    : std::nullopt;

    if (options.use_stage1_log) {
        Stage1LogResult s1 = stage1_log(base, v, tail, c, rng, p, anc);
        out.a0 = s1.a;
        out.delta = std::min(s1.delta, tail.b());
        out.stage1_iterations = s1.iterations;
        out.ledger = std::move(s1.ledger);
    } else {
        const double grid_delta = stage1_grid_delta(tail, p);
        if (tail.b() < grid_delta) {
            // |<A>| <= b localises more tightly than the grid radius would;
            // the first stage has nothing to add.
            out.a0 = 0.0;
            out.delta = tail.b();
        } else {
            Stage1Result s1 = stage1(base, v, tail, p, c, rng);
            out.a0 = s1.a0;
            out.delta = s1.delta;
            out.ledger = std::move(s1.ledger);
        }
    }

    if (out.delta <= p) {
        out.value = out.a0;
        out.stage2_skipped = true;
        return out;
    }

    const StageIIParams params = solve_stage2(tail, p, out.delta, options.K);
    out.stage2_params = params;
    Stage2Result s2 =
        options.K == 1
            ? stage2(base, v, out.a0, params, p, c, rng, anc)
            : stage2_prime(base, v, out.a0, params, p, c, rng, anc);
    out.ledger.append_sequential(s2.ledger);
    out.value = s2.value;
    return out;
}

}  // namespace qmet
