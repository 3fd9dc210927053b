#include "qmet/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "qmet/amp_overlap.hpp"
#include "qmet/baseline.hpp"
#include "qmet/common.hpp"
#include "qmet/pea.hpp"
#include "qmet/statevector.hpp"

namespace qmet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double to_double(const std::string& s, const std::string& what, int line) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (trim(s.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw parse_error("expected a number for " + what + ", got '" + s + "'",
                      line);
}

std::int64_t to_int64(const std::string& s, const std::string& what,
                      int line) {
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(s, &pos);
        if (trim(s.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw parse_error("expected an integer for " + what + ", got '" + s + "'",
                      line);
}

std::uint64_t to_uint64(const std::string& s, const std::string& what,
                        int line) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(s, &pos);
        if (trim(s.substr(pos)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw parse_error(
        "expected a nonnegative integer for " + what + ", got '" + s + "'",
        line);
}

std::vector<double> to_double_list(const std::string& s,
                                   const std::string& what, int line) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            throw parse_error("empty entry in " + what, line);
        out.push_back(to_double(item, what, line));
    }
    if (out.empty()) throw parse_error(what + " list is empty", line);
    return out;
}

}  // namespace

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "pea") return Algorithm::pea;
    if (name == "pea_modified") return Algorithm::pea_modified;
    if (name == "aea") return Algorithm::aea;
    if (name == "oea") return Algorithm::oea;
    if (name == "eea") return Algorithm::eea;
    if (name == "eea_stage1log") return Algorithm::eea_stage1log;
    if (name == "one_ancilla") return Algorithm::one_ancilla;
    if (name == "direct_sample") return Algorithm::direct_sample;
    throw invalid_operand("unknown algorithm '" + name + "'");
}

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::pea: return "pea";
        case Algorithm::pea_modified: return "pea_modified";
        case Algorithm::aea: return "aea";
        case Algorithm::oea: return "oea";
        case Algorithm::eea: return "eea";
        case Algorithm::eea_stage1log: return "eea_stage1log";
        case Algorithm::one_ancilla: return "one_ancilla";
        case Algorithm::direct_sample: return "direct_sample";
    }
    throw internal_error("unhandled algorithm");
}

bool algorithm_uses_unitary(Algorithm a) {
    switch (a) {
        case Algorithm::pea:
        case Algorithm::pea_modified:
        case Algorithm::aea:
        case Algorithm::oea:
        case Algorithm::one_ancilla:
            return true;
        case Algorithm::eea:
        case Algorithm::eea_stage1log:
        case Algorithm::direct_sample:
            return false;
    }
    throw internal_error("unhandled algorithm");
}

void ExperimentConfig::validate() const {
    if (!(p > 0.0 && p <= 1.0))
        throw invalid_operand("p must lie in (0, 1]");
    if (!(c > 0.0 && c < 1.0))
        throw invalid_operand("c must lie in (0, 1)");
    if (K < 0 || K > 20)
        throw invalid_operand("K must lie in [0, 20] (0 selects the default)");
    if (trials < 1) throw invalid_operand("trials must be at least 1");
    if (workers < 1) throw invalid_operand("workers must be at least 1");
    if (samples && *samples < 2)
        throw invalid_operand("samples must be at least 2");
    for (double q : sweep)
        if (!(q > 0.0 && q <= 1.0))
            throw invalid_operand("sweep values must lie in (0, 1]");
    if (format != "csv" && format != "jsonl")
        throw invalid_operand("format must be 'csv' or 'jsonl'");
    const bool files = !instance.unitary_file.empty() ||
                       !instance.hamiltonian_file.empty() ||
                       !instance.state_file.empty();
    if (!instance.builtin.empty() && files)
        throw invalid_operand(
            "choose either a built-in instance or explicit files, not both");
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::map<std::string, std::string> tail_kv;
    int tail_line = 0;
    bool saw_tail = false;

    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        const std::size_t hash = s.find_first_of("#;");
        if (hash != std::string::npos) s.erase(hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw parse_error("unterminated section header", line);
            section = trim(s.substr(1, s.size() - 2));
            if (section != "experiment" && section != "instance" &&
                section != "tail")
                throw parse_error("unknown section [" + section + "]", line);
            if (section == "tail") {
                saw_tail = true;
                tail_line = line;
            }
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw parse_error("expected 'key = value'", line);
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw parse_error("missing key before '='", line);
        if (value.empty()) throw parse_error("missing value for '" + key + "'", line);
        if (section.empty())
            throw parse_error("key '" + key + "' outside any section", line);

        if (section == "experiment") {
            if (key == "algorithm") {
                try {
                    cfg.algorithm = algorithm_from_name(value);
                } catch (const invalid_operand& e) {
                    throw parse_error(e.what(), line);
                }
            } else if (key == "p") {
                cfg.p = to_double(value, "p", line);
            } else if (key == "c") {
                cfg.c = to_double(value, "c", line);
            } else if (key == "K") {
                cfg.K = static_cast<int>(to_int64(value, "K", line));
            } else if (key == "trials") {
                cfg.trials = to_int64(value, "trials", line);
            } else if (key == "seed") {
                cfg.seed = to_uint64(value, "seed", line);
            } else if (key == "samples") {
                cfg.samples = to_int64(value, "samples", line);
            } else if (key == "sweep") {
                cfg.sweep = to_double_list(value, "sweep", line);
            } else if (key == "workers") {
                cfg.workers = static_cast<int>(to_int64(value, "workers", line));
            } else if (key == "out") {
                cfg.out_path = value;
            } else if (key == "format") {
                cfg.format = value;
            } else {
                throw parse_error("unknown [experiment] key '" + key + "'",
                                  line);
            }
        } else if (section == "instance") {
            if (key == "builtin") {
                cfg.instance.builtin = value;
            } else if (key == "unitary") {
                cfg.instance.unitary_file = value;
            } else if (key == "hamiltonian") {
                cfg.instance.hamiltonian_file = value;
            } else if (key == "state") {
                cfg.instance.state_file = value;
            } else if (key == "instance_seed") {
                cfg.instance.instance_seed =
                    to_uint64(value, "instance_seed", line);
            } else {
                throw parse_error("unknown [instance] key '" + key + "'",
                                  line);
            }
        } else {  // tail
            if (key != "kind" && key != "lambda_max" && key != "scale" &&
                key != "beta" && key != "coefficient" && key != "b" &&
                key != "v")
                throw parse_error("unknown [tail] key '" + key + "'", line);
            tail_kv[key] = value;
        }
    }

    if (saw_tail) {
        try {
            cfg.tail = TailModel::from_config(tail_kv);
        } catch (const invalid_operand& e) {
            throw parse_error(e.what(), tail_line);
        }
    }
    try {
        cfg.validate();
    } catch (const invalid_operand& e) {
        throw parse_error(e.what(), line);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_operand("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

Eigen::MatrixXcd load_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_operand("cannot open matrix file: " + path);
    int line = 1;
    std::int64_t dim = 0;
    if (!(in >> dim) || dim < 1 || dim > 4096)
        throw parse_error("matrix file " + path +
                              ": first entry must be the dimension",
                          line);
    Eigen::MatrixXcd m(dim, dim);
    for (std::int64_t r = 0; r < dim; ++r) {
        for (std::int64_t c = 0; c < dim; ++c) {
            double re = 0.0, im = 0.0;
            ++line;
            if (!(in >> re >> im))
                throw parse_error("matrix file " + path +
                                      ": expected 're im' pair",
                                  line);
            m(r, c) = cd(re, im);
        }
    }
    return m;
}

StateVector load_state_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_operand("cannot open state file: " + path);
    int line = 1;
    std::int64_t dim = 0;
    if (!(in >> dim) || dim < 2 || dim > 4096)
        throw parse_error("state file " + path +
                              ": first entry must be the dimension",
                          line);
    std::vector<cd> amps(static_cast<std::size_t>(dim));
    for (std::int64_t k = 0; k < dim; ++k) {
        double re = 0.0, im = 0.0;
        ++line;
        if (!(in >> re >> im))
            throw parse_error("state file " + path + ": expected 're im' pair",
                              line);
        amps[static_cast<std::size_t>(k)] = cd(re, im);
    }
    StateVector psi(amps);
    psi.normalize();
    return psi;
}

namespace {

struct Instance {
    std::optional<CostedUnitary> unitary;
    std::optional<EvolutionOracle> evolution;
    StatePrep prep;
};

// Splits "name" or "name:param"; param must parse as a double.
std::pair<std::string, std::optional<double>> split_builtin(
    const std::string& name) {
    const std::size_t colon = name.find(':');
    if (colon == std::string::npos) return {name, std::nullopt};
    const std::string base = name.substr(0, colon);
    const std::string arg = name.substr(colon + 1);
    try {
        std::size_t pos = 0;
        double v = std::stod(arg, &pos);
        if (trim(arg.substr(pos)).empty()) return {base, v};
    } catch (const std::exception&) {
    }
    throw invalid_operand("built-in parameter must be a number: '" + name +
                          "'");
}

StateVector plus_state() {
    return StateVector({cd(std::numbers::sqrt2 / 2.0, 0.0),
                        cd(std::numbers::sqrt2 / 2.0, 0.0)});
}

Instance make_builtin(const std::string& name, bool wants_unitary,
                      std::uint64_t instance_seed, std::int64_t trial) {
    auto [base, param] = split_builtin(name);
    auto need_param = [&]() {
        if (!param)
            throw invalid_operand("built-in '" + base +
                                  "' needs a parameter, e.g. '" + base +
                                  ":0.5'");
        return *param;
    };
    auto no_param = [&]() {
        if (param)
            throw invalid_operand("built-in '" + base +
                                  "' takes no parameter");
    };
    auto unitary_only = [&]() {
        if (!wants_unitary)
            throw invalid_operand("built-in '" + base +
                                  "' provides a unitary, not a Hamiltonian");
    };

    Instance inst;
    if (base == "identity") {
        no_param();
        inst.prep = StatePrep(StateVector::basis_state(1, 0));
        if (wants_unitary)
            inst.unitary = CostedUnitary(gates::identity(2));
        else
            inst.evolution = EvolutionOracle(Eigen::MatrixXcd::Identity(2, 2));
        return inst;
    }
    if (base == "bitflip") {
        no_param();
        inst.prep = StatePrep(StateVector::basis_state(1, 0));
        if (wants_unitary)
            inst.unitary = CostedUnitary(gates::pauli_x());
        else
            inst.evolution = EvolutionOracle(gates::pauli_x().matrix());
        return inst;
    }
    if (base == "rotation") {
        unitary_only();
        inst.unitary = CostedUnitary(gates::ry(need_param()));
        inst.prep = StatePrep(StateVector::basis_state(1, 0));
        return inst;
    }
    if (base == "phase") {
        unitary_only();
        inst.unitary = CostedUnitary(gates::phase(need_param()));
        inst.prep = StatePrep(plus_state());
        return inst;
    }
    if (base == "eigenphase") {
        unitary_only();
        inst.unitary = CostedUnitary(gates::phase(need_param()));
        inst.prep = StatePrep(StateVector::basis_state(1, 1));
        return inst;
    }
    if (base == "random_unitary_2q") {
        no_param();
        unitary_only();
        // Re-split so the instance stream can never collide with the
        // estimator stream even when both master seeds coincide.
        Rng irng(derive_seed(derive_seed(instance_seed,
                                         static_cast<std::uint64_t>(trial)),
                             0));
        inst.unitary = CostedUnitary(random_unitary(4, irng));
        inst.prep = StatePrep(random_state(2, irng));
        return inst;
    }
    if (base == "random_hermitian_4") {
        no_param();
        if (wants_unitary)
            throw invalid_operand(
                "built-in 'random_hermitian_4' provides a Hamiltonian, not a "
                "unitary");
        Rng irng(derive_seed(derive_seed(instance_seed,
                                         static_cast<std::uint64_t>(trial)),
                             0));
        EvolutionOracle raw(random_hermitian(4, irng));
        inst.evolution = rescale_spectrum(raw, -1.0, 1.0);
        inst.prep = StatePrep(random_state(2, irng));
        return inst;
    }
    throw invalid_operand("unknown built-in instance '" + base + "'");
}

Instance make_instance(const ExperimentConfig& cfg, std::int64_t trial) {
    const InstanceSpec& spec = cfg.instance;
    const bool wants_unitary = algorithm_uses_unitary(cfg.algorithm);
    const bool files = !spec.unitary_file.empty() ||
                       !spec.hamiltonian_file.empty() ||
                       !spec.state_file.empty();
    if (files) {
        if (spec.state_file.empty())
            throw invalid_operand("file-based instances need a state file");
        Instance inst;
        StateVector psi = load_state_file(spec.state_file);
        inst.prep = StatePrep(psi);
        if (wants_unitary) {
            if (spec.unitary_file.empty())
                throw invalid_operand("algorithm '" +
                                      algorithm_name(cfg.algorithm) +
                                      "' needs a unitary file");
            inst.unitary = CostedUnitary(
                DenseUnitary(load_matrix_file(spec.unitary_file), 1e-8));
        } else {
            if (spec.hamiltonian_file.empty())
                throw invalid_operand("algorithm '" +
                                      algorithm_name(cfg.algorithm) +
                                      "' needs a hamiltonian file");
            inst.evolution =
                EvolutionOracle(load_matrix_file(spec.hamiltonian_file), 1e-8);
        }
        if (inst.prep.dim() !=
            (wants_unitary ? inst.unitary->matrix.dim() : inst.evolution->dim()))
            throw invalid_operand(
                "state dimension does not match the instance matrix");
        return inst;
    }
    std::string name = spec.builtin;
    if (name.empty())
        name = wants_unitary ? "identity" : "random_hermitian_4";
    return make_builtin(name, wants_unitary,
                        spec.instance_seed.value_or(cfg.seed), trial);
}

int k_for(const ExperimentConfig& cfg, double p) {
    if (cfg.K > 0) return cfg.K;
    return std::min(20, std::max(2, bits_for_precision(p)));
}

std::int64_t samples_for(const ExperimentConfig& cfg, double p) {
    if (cfg.samples) return *cfg.samples;
    return std::max<std::int64_t>(
        2, static_cast<std::int64_t>(std::ceil(1.0 / (p * p))));
}

// Shortest distance between two phases, as a fraction of a full turn.
double cycle_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), kTwoPi);
    if (d > kTwoPi - d) d = kTwoPi - d;
    return d / kTwoPi;
}

double wrap_phase(double phi) {
    double w = std::fmod(phi, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    return w;
}

cd exact_overlap(const Instance& inst) {
    StateVector upsi = inst.prep.state();
    apply(upsi, inst.unitary->matrix);
    return inner_product(inst.prep.state(), upsi);
}

}  // namespace

TrialRecord run_trial(const ExperimentConfig& config, double p_value,
                      std::int64_t trial_index) {
    TrialRecord rec;
    rec.trial = trial_index;
    rec.p = p_value;
    rec.seed = derive_seed(config.seed,
                           static_cast<std::uint64_t>(trial_index));
    Rng rng(rec.seed);
    Instance inst = make_instance(config, trial_index);
    const TailModel tail =
        config.tail ? *config.tail : TailModel::bounded(2.0, 1.0);

    switch (config.algorithm) {
        case Algorithm::pea:
        case Algorithm::pea_modified: {
            const cd o = exact_overlap(inst);
            const double exact =
                std::abs(o) < 1e-12 ? 0.0 : wrap_phase(std::arg(o));
            PhaseEstimate pe =
                config.algorithm == Algorithm::pea
                    ? pea_original(*inst.unitary, inst.prep.state(), p_value,
                                   rng)
                    : pea_modified(*inst.unitary, inst.prep.state(), p_value,
                                   config.c, rng);
            rec.estimate = cd(pe.phase, 0.0);
            rec.exact = cd(exact, 0.0);
            rec.error = cycle_distance(pe.phase, exact);
            rec.ledger = pe.ledger;
            break;
        }
        case Algorithm::aea: {
            const double exact = std::abs(exact_overlap(inst));
            AmpEstimate est =
                amp_estimate(*inst.unitary, inst.prep, p_value, config.c, rng);
            rec.estimate = cd(est.value, 0.0);
            rec.exact = cd(exact, 0.0);
            rec.error = std::abs(std::acos(std::clamp(est.value, 0.0, 1.0)) -
                                 std::acos(std::clamp(exact, 0.0, 1.0))) /
                        std::numbers::pi;
            rec.ledger = est.ledger;
            break;
        }
        case Algorithm::oea: {
            const cd exact = exact_overlap(inst);
            OverlapEstimate est = overlap_estimate(*inst.unitary, inst.prep,
                                                   p_value, config.c, rng);
            rec.estimate = est.value;
            rec.exact = exact;
            rec.error = hemisphere_distance(est.value, exact);
            rec.ledger = est.ledger;
            break;
        }
        case Algorithm::eea:
        case Algorithm::eea_stage1log: {
            const double exact = inst.evolution->expectation(inst.prep.state());
            EeaOptions opt;
            opt.use_stage1_log = config.algorithm == Algorithm::eea_stage1log;
            opt.K = k_for(config, p_value);
            EeaResult est = eea_full(*inst.evolution, inst.prep, tail, p_value,
                                     config.c, opt, rng);
            rec.estimate = cd(est.value, 0.0);
            rec.exact = cd(exact, 0.0);
            rec.error = std::abs(est.value - exact);
            rec.ledger = est.ledger;
            break;
        }
        case Algorithm::one_ancilla: {
            const cd exact = exact_overlap(inst);
            SampledEstimate est =
                one_ancilla_overlap(inst.unitary->matrix, inst.prep,
                                    samples_for(config, p_value), rng);
            rec.estimate = est.value;
            rec.exact = exact;
            rec.error = std::abs(est.value - exact);
            rec.ledger = est.ledger;
            break;
        }
        case Algorithm::direct_sample: {
            const double exact = inst.evolution->expectation(inst.prep.state());
            SampledEstimate est = direct_sample_mean(
                *inst.evolution, inst.prep, samples_for(config, p_value), rng);
            rec.estimate = est.value;
            rec.exact = cd(exact, 0.0);
            rec.error = std::abs(est.value.real() - exact);
            rec.ledger = est.ledger;
            break;
        }
    }
    rec.within_p = rec.error <= p_value;
    return rec;
}

namespace {

nlohmann::json aggregate(const std::vector<TrialRecord>& records,
                         std::size_t begin, std::size_t end) {
    const double n = static_cast<double>(end - begin);
    double within = 0.0, err_sum = 0.0;
    double preps = 0.0, evols = 0.0, time = 0.0, uses = 0.0, depth = 0.0;
    std::vector<double> errs;
    errs.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const TrialRecord& r = records[i];
        within += r.within_p ? 1.0 : 0.0;
        err_sum += r.error;
        errs.push_back(r.error);
        preps += static_cast<double>(r.ledger.state_preps);
        evols += static_cast<double>(r.ledger.evolution_uses);
        time += r.ledger.total_time;
        uses += static_cast<double>(r.ledger.u_uses);
        depth += static_cast<double>(r.ledger.depth);
    }
    std::sort(errs.begin(), errs.end());
    const double median =
        errs.empty() ? 0.0
        : errs.size() % 2 ? errs[errs.size() / 2]
                          : 0.5 * (errs[errs.size() / 2 - 1] +
                                   errs[errs.size() / 2]);
    nlohmann::json j;
    j["within_p_fraction"] = within / n;
    j["mean_error"] = err_sum / n;
    j["median_error"] = median;
    j["mean_resources"] = {
        {"n_preps", preps / n},       {"m_evolutions", evols / n},
        {"total_time", time / n},     {"u_uses", uses / n},
        {"depth", depth / n},
    };
    return j;
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& config) {
    config.validate();
    const std::vector<double> points =
        config.sweep.empty() ? std::vector<double>{config.p} : config.sweep;
    const std::int64_t per_point = config.trials;
    const std::int64_t total =
        per_point * static_cast<std::int64_t>(points.size());

    RunOutput out;
    out.records.resize(static_cast<std::size_t>(total));

    std::atomic<std::int64_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto work = [&]() {
        for (;;) {
            const std::int64_t j = next.fetch_add(1);
            if (j >= total || failed.load()) break;
            try {
                const double p_value =
                    points[static_cast<std::size_t>(j / per_point)];
                out.records[static_cast<std::size_t>(j)] =
                    run_trial(config, p_value, j);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                break;
            }
        }
    };

    const int nthreads = static_cast<int>(
        std::min<std::int64_t>(config.workers, total));
    if (nthreads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    nlohmann::json summary;
    summary["algorithm"] = algorithm_name(config.algorithm);
    summary["trials"] = total;
    summary["seed"] = config.seed;
    summary["c"] = config.c;
    if (points.size() == 1) {
        summary["p"] = points[0];
        summary.update(aggregate(out.records, 0, out.records.size()));
    } else {
        nlohmann::json rows = nlohmann::json::array();
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::size_t b = i * static_cast<std::size_t>(per_point);
            const std::size_t e = b + static_cast<std::size_t>(per_point);
            nlohmann::json row = aggregate(out.records, b, e);
            row["p"] = points[i];
            row["trials"] = per_point;
            // Resource axis for the scaling fit: u-uses, falling back to
            // state preparations for estimators that charge none
            // (direct eigenvalue sampling).
            double x = row["mean_resources"]["u_uses"].get<double>();
            if (x <= 0.0) x = row["mean_resources"]["n_preps"].get<double>();
            const double y = row["mean_error"].get<double>();
            if (x > 0.0 && y > 0.0) {
                xs.push_back(x);
                ys.push_back(y);
            }
            rows.push_back(std::move(row));
        }
        summary["sweep"] = std::move(rows);
        if (xs.size() >= 2) summary["loglog_slope"] = loglog_slope(xs, ys);
    }
    out.summary = std::move(summary);
    return out;
}

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols = {
        "trial",   "seed",         "estimate_re", "estimate_im", "exact_re",
        "exact_im", "error",       "within_p",    "n_preps",
        "m_evolutions", "total_time", "u_uses",   "depth",       "wall_ms",
    };
    return cols;
}

std::string csv_line(const TrialRecord& r) {
    std::ostringstream os;
    os << r.trial << ',' << r.seed << ',' << fmt_double(r.estimate.real())
       << ',' << fmt_double(r.estimate.imag()) << ','
       << fmt_double(r.exact.real()) << ',' << fmt_double(r.exact.imag())
       << ',' << fmt_double(r.error) << ',' << (r.within_p ? 1 : 0) << ','
       << r.ledger.state_preps << ',' << r.ledger.evolution_uses << ','
       << fmt_double(r.ledger.total_time) << ',' << r.ledger.u_uses << ','
       << r.ledger.depth << ',' << fmt_double(r.wall_ms);
    return os.str();
}

void write_csv(const std::vector<TrialRecord>& records, std::ostream& os) {
    const auto& cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        os << cols[i] << (i + 1 < cols.size() ? "," : "\n");
    for (const TrialRecord& r : records) os << csv_line(r) << '\n';
}

void write_jsonl(const std::vector<TrialRecord>& records, std::ostream& os) {
    for (const TrialRecord& r : records) {
        nlohmann::json j;
        j["trial"] = r.trial;
        j["seed"] = r.seed;
        j["estimate_re"] = r.estimate.real();
        j["estimate_im"] = r.estimate.imag();
        j["exact_re"] = r.exact.real();
        j["exact_im"] = r.exact.imag();
        j["error"] = r.error;
        j["within_p"] = r.within_p ? 1 : 0;
        j["n_preps"] = r.ledger.state_preps;
        j["m_evolutions"] = r.ledger.evolution_uses;
        j["total_time"] = r.ledger.total_time;
        j["u_uses"] = r.ledger.u_uses;
        j["depth"] = r.ledger.depth;
        j["wall_ms"] = r.wall_ms;
        os << j.dump() << '\n';
    }
}

void emit(const std::vector<TrialRecord>& records, const std::string& format,
          const std::string& path) {
    if (format != "csv" && format != "jsonl")
        throw invalid_operand("format must be 'csv' or 'jsonl'");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    if (format == "csv")
        write_csv(records, os);
    else
        write_jsonl(records, os);
    if (!os) throw std::runtime_error("failed writing output file: " + path);
}

double loglog_slope(const std::vector<double>& x,
                    const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw invalid_operand("slope fit needs at least two (x, y) points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw invalid_operand("slope fit needs positive values");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-30)
        throw invalid_operand("slope fit is degenerate (identical x values)");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace qmet
