#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "qmet/eea.hpp"
#include "qmet/oracles.hpp"

namespace qmet {

enum class Algorithm {
    pea,
    pea_modified,
    aea,
    oea,
    eea,
    eea_stage1log,
    one_ancilla,
    direct_sample,
};

Algorithm algorithm_from_name(const std::string& name);
std::string algorithm_name(Algorithm a);
// Phase/amplitude/overlap estimators act on a unitary; the expectation
// estimators and the sampling baseline act on a Hamiltonian.
bool algorithm_uses_unitary(Algorithm a);

// Instance selection: either a named built-in (optionally parameterised,
// e.g. "rotation:0.7") or explicit files.  Matrix files hold a dimension
// line followed by dim*dim "re im" entries in row-major order; state files
// hold a dimension line followed by dim "re im" amplitude lines.
struct InstanceSpec {
    std::string builtin;
    std::string unitary_file;
    std::string hamiltonian_file;
    std::string state_file;
    std::optional<std::uint64_t> instance_seed;  // default: experiment seed
};

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::oea;
    InstanceSpec instance;
    double p = 0.1;
    double c = 0.9;
    int K = 0;  // 0 -> max(2, ceil(log2(1/p))), capped at 20
    std::optional<TailModel> tail;  // default: bounded(lambda_max=2, b=1)
    std::int64_t trials = 100;
    std::uint64_t seed = 1;
    std::optional<std::int64_t> samples;  // baselines; default ceil(1/p^2)
    std::vector<double> sweep;            // empty -> single run at p
    int workers = 1;
    std::string out_path;  // empty -> records not written to disk
    std::string format = "csv";

    void validate() const;  // throws invalid_operand on bad field values
};

// Flat INI-style text: [experiment], [instance] and [tail] sections,
// key = value lines, '#'/';' comments.  Errors carry line numbers.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

struct TrialRecord {
    std::int64_t trial = 0;
    std::uint64_t seed = 0;
    cd estimate{0.0, 0.0};
    cd exact{0.0, 0.0};
    double error = 0.0;
    double p = 0.0;  // per-trial target (varies across sweep points)
    bool within_p = false;
    ResourceLedger ledger;
    double wall_ms = 0.0;  // kept at 0 so output stays byte-deterministic
};

// One fully seeded trial at precision target p_value.  The estimator
// stream is Rng(derive_seed(seed, trial)); random built-ins draw from an
// independently re-split instance stream so the two never overlap.
TrialRecord run_trial(const ExperimentConfig& config, double p_value,
                      std::int64_t trial_index);

struct RunOutput {
    std::vector<TrialRecord> records;
    nlohmann::json summary;
};

// Runs trials (for each sweep point, when a sweep is set) across the
// configured worker count.  Records are indexed by global trial number, so
// output is identical for any worker count.
RunOutput run_experiment(const ExperimentConfig& config);

// trial,seed,estimate_re,estimate_im,exact_re,exact_im,error,within_p,
// n_preps,m_evolutions,total_time,u_uses,depth,wall_ms
const std::vector<std::string>& csv_columns();
std::string csv_line(const TrialRecord& r);
void write_csv(const std::vector<TrialRecord>& records, std::ostream& os);
void write_jsonl(const std::vector<TrialRecord>& records, std::ostream& os);
// format is "csv" or "jsonl"; creates/truncates path.
void emit(const std::vector<TrialRecord>& records, const std::string& format,
          const std::string& path);

// Least-squares slope of log(y) against log(x); needs >= 2 positive points.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Matrix/state file loaders (exposed for tests and tooling).  The matrix
// loader returns the raw entries; callers decide whether they must be
// unitary (estimation targets) or Hermitian (Hamiltonians).
Eigen::MatrixXcd load_matrix_file(const std::string& path);
StateVector load_state_file(const std::string& path);

}  // namespace qmet
