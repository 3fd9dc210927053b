#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qmet/statevector.hpp"

namespace qmet {

// What one invocation of an oracle costs.  Composite oracles (reflections,
// controlled variants) carry the summed cost of their ingredients.
struct OracleCosts {
    std::int64_t state_preps = 0;
    std::int64_t u_uses = 1;
    std::int64_t evolutions = 0;
    double time = 0.0;  // total |t| of evolution segments inside one use
};

// Running totals for a single estimation run.
//
// Counters only ever grow.  `depth` tracks the longest sequential chain of
// oracle uses: repetitions done for confidence are counted as parallel
// (they add to the counters but not to the depth), while the 2^{k-1}
// back-to-back uses inside one phase-estimation bit are sequential.
struct ResourceLedger {
    std::int64_t state_preps = 0;    // N
    std::int64_t evolution_uses = 0; // M
    std::int64_t u_uses = 0;
    std::int64_t depth = 0;
    double total_time = 0.0;         // T, sum of |t| over evolution uses

    // `count` sequential uses, each repeated `parallel_reps` times in
    // parallel.  Counters grow by count*parallel_reps, depth by count.
    void charge(const OracleCosts& cost, std::int64_t count = 1,
                std::int64_t parallel_reps = 1);

    // State preparations that are not tied to an oracle use (the initial
    // register preparation).  No depth contribution.
    void add_preps(std::int64_t n);

    // this, then other.
    void append_sequential(const ResourceLedger& other);
    // this alongside other: componentwise sum, depth is the max.
    void merge_parallel(const ResourceLedger& other);
};

// Preparation unitary V with V|0...0> = |target>, plus the cached target.
class StatePrep {
  public:
    StatePrep() = default;
    // From an explicit preparation unitary.
    explicit StatePrep(DenseUnitary v);
    // From a target state: V's first column is the target, the rest is an
    // orthonormal completion (Gram-Schmidt over the computational basis).
    explicit StatePrep(const StateVector& target);

    const DenseUnitary& unitary() const { return v_; }
    const StateVector& state() const { return target_; }
    int num_qubits() const { return target_.num_qubits(); }
    Eigen::Index dim() const { return v_.dim(); }

  private:
    DenseUnitary v_;
    StateVector target_;
};

// P0 = I - 2|0...0><0...0|.
DenseUnitary selective_sign_zero(int num_qubits);

// A unitary bundled with its per-use cost, so the phase-estimation layer can
// charge ledgers without knowing what the operator is made of.  `power_fn`,
// when set, produces the exact k-th power directly (used for e^{-iAt} where
// the power is just a longer evolution); otherwise powers go through
// repeated squaring of the matrix.
struct CostedUnitary {
    DenseUnitary matrix;
    OracleCosts per_use{};
    std::function<DenseUnitary(std::uint64_t)> power_fn;

    CostedUnitary() = default;
    CostedUnitary(DenseUnitary m) : matrix(std::move(m)) {}
    CostedUnitary(DenseUnitary m, OracleCosts c)
        : matrix(std::move(m)), per_use(c) {}

    DenseUnitary power(std::uint64_t k) const;
};

// S = V P0 V^ U V P0 V^ U^.  On span{|psi>, U|psi>} its eigenvalues are
// e^{+-i phi} with phi = 2 arccos |<psi|U|psi>|.  Each use of S costs four
// preparation-unitary uses and two uses of U (plus twice whatever U itself
// carries in evolutions/time).
CostedUnitary grover_reflection(const StatePrep& v, const CostedUnitary& u);

// Controlled S built by conditioning only the two sign changes; the
// uncontrolled U's and V's cancel when the control is |0>.
DenseUnitary controlled_grover(const StatePrep& v, const DenseUnitary& u);

// Hermitian A with a cached eigendecomposition; implements e^{-i(A - a0)t}
// exactly.  The offset a0 lives here because the estimation stages evolve
// under A minus their current estimate.
class EvolutionOracle {
  public:
    explicit EvolutionOracle(const Eigen::MatrixXcd& a,
                             double hermiticity_tol = 1e-10);

    Eigen::Index dim() const { return decomp_->a.rows(); }
    int num_qubits() const;
    double offset() const { return offset_; }
    const Eigen::MatrixXcd& hamiltonian() const { return decomp_->a; }
    const Eigen::VectorXd& eigenvalues() const { return decomp_->evals; }
    const Eigen::MatrixXcd& eigenvectors() const { return decomp_->evecs; }

    // Same Hamiltonian, different offset; shares the decomposition.
    EvolutionOracle with_offset(double a0) const;

    // e^{-i(A - a0)t}; no accounting.
    DenseUnitary exp_matrix(double t) const;

    // e^{-i(A - a0)t}, charging one evolution of duration |t|.
    DenseUnitary exp_at(double t, ResourceLedger& ledger) const;

    // The same evolution packaged for the phase-estimation layer: one use
    // costs one u_use, one evolution, |t| time; powers extend the time.
    CostedUnitary costed_exp(double t) const;

    // <psi| A |psi> (offset not subtracted).
    double expectation(const StateVector& psi) const;

  private:
    struct Decomp {
        Eigen::MatrixXcd a;
        Eigen::VectorXd evals;
        Eigen::MatrixXcd evecs;
    };
    EvolutionOracle(std::shared_ptr<const Decomp> d, double a0)
        : decomp_(std::move(d)), offset_(a0) {}

    std::shared_ptr<const Decomp> decomp_;
    double offset_ = 0.0;
};

// Rebuilds the oracle with eigenvalues mapped linearly onto [lo, hi];
// degenerate spectra map to the midpoint.
EvolutionOracle rescale_spectrum(const EvolutionOracle& oracle, double lo,
                                 double hi);

// GUE-style random Hermitian matrix (B + B^)/2 with normal entries.
Eigen::MatrixXcd random_hermitian(int dim, Rng& rng);

}  // namespace qmet
