#include "qmet/oracles.hpp"

#include <cmath>
#include <utility>

namespace qmet {

void ResourceLedger::charge(const OracleCosts& cost, std::int64_t count,
                            std::int64_t parallel_reps) {
    if (count < 0 || parallel_reps < 0)
        throw invalid_operand("ledger charge counts must be non-negative");
    const std::int64_t n = count * parallel_reps;
    state_preps += cost.state_preps * n;
    evolution_uses += cost.evolutions * n;
    u_uses += cost.u_uses * n;
    total_time += cost.time * static_cast<double>(n);
    depth += count;
}

void ResourceLedger::add_preps(std::int64_t n) {
    if (n < 0) throw invalid_operand("negative state-prep count");
    state_preps += n;
}

void ResourceLedger::append_sequential(const ResourceLedger& other) {
    state_preps += other.state_preps;
    evolution_uses += other.evolution_uses;
    u_uses += other.u_uses;
    total_time += other.total_time;
    depth += other.depth;
}

void ResourceLedger::merge_parallel(const ResourceLedger& other) {
    state_preps += other.state_preps;
    evolution_uses += other.evolution_uses;
    u_uses += other.u_uses;
    total_time += other.total_time;
    depth = std::max(depth, other.depth);
}

StatePrep::StatePrep(DenseUnitary v) : v_(std::move(v)) {
    const Eigen::Index d = v_.dim();
    std::vector<cd> amps(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) amps[i] = v_.matrix()(i, 0);
    target_ = StateVector(std::move(amps));
}

StatePrep::StatePrep(const StateVector& target) {
    const Eigen::Index d = static_cast<Eigen::Index>(target.dim());
    Eigen::MatrixXcd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) m(i, 0) = target.amps()[i];
    m.col(0).normalize();

    // Complete to an orthonormal basis: orthogonalise each computational
    // basis vector against the columns so far, skipping the (at most one)
    // that is linearly dependent.  Two projection passes keep this stable.
    Eigen::Index cols = 1;
    for (Eigen::Index e = 0; e < d && cols < d; ++e) {
        Eigen::VectorXcd w = Eigen::VectorXcd::Zero(d);
        w(e) = 1.0;
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index j = 0; j < cols; ++j)
                w -= m.col(j).dot(w) * m.col(j);
        const double norm = w.norm();
        if (norm < 1e-8) continue;
        m.col(cols++) = w / norm;
    }
    if (cols != d)
        throw internal_error("basis completion failed to span the space");
    v_ = DenseUnitary(std::move(m));
    target_ = target;
}

DenseUnitary selective_sign_zero(int num_qubits) {
    if (num_qubits < 1) throw invalid_operand("need at least one qubit");
    const Eigen::Index d = Eigen::Index(1) << num_qubits;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(d, d);
    m(0, 0) = -1.0;
    return DenseUnitary(std::move(m));
}

DenseUnitary CostedUnitary::power(std::uint64_t k) const {
    if (power_fn) return power_fn(k);
    return matrix.power(k);
}

CostedUnitary grover_reflection(const StatePrep& v, const CostedUnitary& u) {
    if (v.dim() != u.matrix.dim())
        throw invalid_operand("state-prep and unitary dimensions differ");
    const Eigen::MatrixXcd& vm = v.unitary().matrix();
    const Eigen::MatrixXcd& um = u.matrix.matrix();
    const Eigen::MatrixXcd p0 =
        selective_sign_zero(v.num_qubits()).matrix();
    const Eigen::MatrixXcd refl = vm * p0 * vm.adjoint();
    Eigen::MatrixXcd s = refl * um * refl * um.adjoint();

    OracleCosts costs;
    costs.state_preps = 4 + 2 * u.per_use.state_preps;
    costs.u_uses = 2 * u.per_use.u_uses;
    costs.evolutions = 2 * u.per_use.evolutions;
    costs.time = 2.0 * u.per_use.time;
    // Composite tolerance: four products of verified unitaries.
    return CostedUnitary(DenseUnitary(std::move(s), 1e-8), costs);
}

DenseUnitary controlled_grover(const StatePrep& v, const DenseUnitary& u) {
    if (v.dim() != u.dim())
        throw invalid_operand("state-prep and unitary dimensions differ");
    const Eigen::Index d = v.dim();
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(2, 2);
    const Eigen::MatrixXcd vm = kron(id, v.unitary().matrix());
    const Eigen::MatrixXcd um = kron(id, u.matrix());
    const Eigen::MatrixXcd cp0 =
        controlled(DenseUnitary(selective_sign_zero(v.num_qubits())))
            .matrix();
    const Eigen::MatrixXcd crefl = vm * cp0 * vm.adjoint();
    Eigen::MatrixXcd cs = crefl * um * crefl * um.adjoint();
    (void)d;
    return DenseUnitary(std::move(cs), 1e-8);
}

EvolutionOracle::EvolutionOracle(const Eigen::MatrixXcd& a,
                                 double hermiticity_tol) {
    if (a.rows() != a.cols()) throw invalid_operand("Hamiltonian not square");
    const double herm_err = (a - a.adjoint()).cwiseAbs().maxCoeff();
    if (herm_err > hermiticity_tol)
        throw invalid_operand("matrix is not Hermitian (deviation " +
                              std::to_string(herm_err) + ")");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(a);
    if (solver.info() != Eigen::Success)
        throw internal_error("eigendecomposition failed");
    auto d = std::make_shared<Decomp>();
    d->a = a;
    d->evals = solver.eigenvalues();
    d->evecs = solver.eigenvectors();
    decomp_ = std::move(d);
}

int EvolutionOracle::num_qubits() const {
    int n = 0;
    while ((Eigen::Index(1) << n) < dim()) ++n;
    return n;
}

EvolutionOracle EvolutionOracle::with_offset(double a0) const {
    return EvolutionOracle(decomp_, a0);
}

DenseUnitary EvolutionOracle::exp_matrix(double t) const {
    const Eigen::Index d = dim();
    Eigen::VectorXcd phases(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double angle = -(decomp_->evals(j) - offset_) * t;
        phases(j) = cd(std::cos(angle), std::sin(angle));
    }
    Eigen::MatrixXcd m = decomp_->evecs * phases.asDiagonal() *
                         decomp_->evecs.adjoint();
    return DenseUnitary(std::move(m), 1e-8);
}

DenseUnitary EvolutionOracle::exp_at(double t, ResourceLedger& ledger) const {
    OracleCosts cost;
    cost.u_uses = 0;
    cost.evolutions = 1;
    cost.time = std::abs(t);
    ledger.charge(cost, 1);
    return exp_matrix(t);
}

CostedUnitary EvolutionOracle::costed_exp(double t) const {
    OracleCosts cost;
    cost.u_uses = 1;
    cost.evolutions = 1;
    cost.time = std::abs(t);
    CostedUnitary w(exp_matrix(t), cost);
    // Powers of an evolution are just longer evolutions; keep them exact
    // instead of squaring up rounding error.
    const EvolutionOracle self = *this;
    w.power_fn = [self, t](std::uint64_t k) {
        return self.exp_matrix(static_cast<double>(k) * t);
    };
    return w;
}

double EvolutionOracle::expectation(const StateVector& psi) const {
    if (static_cast<Eigen::Index>(psi.dim()) != dim())
        throw invalid_operand("state dimension does not match Hamiltonian");
    Eigen::Map<const Eigen::VectorXcd> v(psi.amps().data(),
                                         static_cast<Eigen::Index>(psi.dim()));
    const cd val = v.dot(decomp_->a * v);
    return val.real();
}

EvolutionOracle rescale_spectrum(const EvolutionOracle& oracle, double lo,
                                 double hi) {
    if (!(lo <= hi)) throw invalid_operand("empty target interval");
    const Eigen::VectorXd& ev = oracle.eigenvalues();
    const double mn = ev.minCoeff();
    const double mx = ev.maxCoeff();
    Eigen::VectorXd mapped(ev.size());
    if (mx - mn < 1e-14) {
        mapped.setConstant(0.5 * (lo + hi));
    } else {
        for (Eigen::Index j = 0; j < ev.size(); ++j)
            mapped(j) = lo + (hi - lo) * (ev(j) - mn) / (mx - mn);
    }
    const Eigen::MatrixXcd& vecs = oracle.eigenvectors();
    Eigen::MatrixXcd a = vecs * mapped.asDiagonal() * vecs.adjoint();
    // Symmetrise away the rounding from the triple product.
    a = 0.5 * (a + Eigen::MatrixXcd(a.adjoint()));
    return EvolutionOracle(a);
}

Eigen::MatrixXcd random_hermitian(int dim, Rng& rng) {
    if (dim < 1) throw invalid_operand("dimension must be positive");
    Eigen::MatrixXcd b(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            b(i, j) = cd(rng.normal(), rng.normal());
    return 0.5 * (b + Eigen::MatrixXcd(b.adjoint()));
}

}  // namespace qmet
