// Experiment runner: configures an estimation instance, runs seeded trial
// batches, writes per-trial records (CSV or JSON lines) and prints a JSON
// summary to stdout.
//
// Exit codes: 0 success, 2 configuration/parse error, 3 infeasibility
// (requested precision/confidence admits no parameter assignment),
// 1 anything else.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qmet/common.hpp"
#include "qmet/experiment.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::optional<std::string> algorithm;
    std::optional<double> p;
    std::optional<double> c;
    std::optional<int> K;
    std::optional<std::int64_t> trials;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> sweep;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<int> workers;
};

std::vector<double> parse_sweep(const std::string& text) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(item, &pos);
            while (pos < item.size() &&
                   std::isspace(static_cast<unsigned char>(item[pos])))
                ++pos;
            if (pos != item.size()) throw std::invalid_argument("trailing");
            out.push_back(v);
        } catch (const std::exception&) {
            throw qmet::invalid_operand("bad sweep entry '" + item + "'");
        }
    }
    if (out.empty()) throw qmet::invalid_operand("empty sweep list");
    return out;
}

int run(const CliArgs& args) {
    qmet::ExperimentConfig cfg;
    if (!args.config_path.empty())
        cfg = qmet::parse_config_file(args.config_path);

    if (args.algorithm) cfg.algorithm = qmet::algorithm_from_name(*args.algorithm);
    if (args.p) cfg.p = *args.p;
    if (args.c) cfg.c = *args.c;
    if (args.K) cfg.K = *args.K;
    if (args.trials) cfg.trials = *args.trials;
    if (args.seed) cfg.seed = *args.seed;
    if (args.sweep) cfg.sweep = parse_sweep(*args.sweep);
    if (args.out) cfg.out_path = *args.out;
    if (args.format) cfg.format = *args.format;
    if (args.workers) cfg.workers = *args.workers;
    cfg.validate();

    qmet::RunOutput result = qmet::run_experiment(cfg);
    if (!cfg.out_path.empty())
        qmet::emit(result.records, cfg.format, cfg.out_path);
    std::cout << result.summary.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Statevector experiments for phase, amplitude, overlap and "
        "expectation estimation"};
    CliArgs args;

    app.add_option("--config", args.config_path,
                   "Config file ([experiment]/[instance]/[tail] sections)");
    app.add_option("--algorithm", args.algorithm,
                   "pea | pea_modified | aea | oea | eea | eea_stage1log | "
                   "one_ancilla | direct_sample");
    app.add_option("--p", args.p, "Target precision in (0, 1]");
    app.add_option("--c", args.c, "Target confidence in (0, 1)");
    app.add_option("--K", args.K,
                   "Series order for eea's second stage (0 = default)");
    app.add_option("--trials", args.trials, "Trials per precision point");
    app.add_option("--seed", args.seed, "Master seed");
    app.add_option("--sweep", args.sweep,
                   "Comma-separated precision list, e.g. \"0.2,0.1,0.05\"");
    app.add_option("--out", args.out, "Write per-trial records to this path");
    app.add_option("--format", args.format, "csv | jsonl (default csv)");
    app.add_option("--workers", args.workers, "Concurrent trial workers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and friends are "successful" parse errors with exit code 0.
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return run(args);
    } catch (const qmet::infeasibility_error& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return 3;
    } catch (const qmet::parse_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const qmet::invalid_operand& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
