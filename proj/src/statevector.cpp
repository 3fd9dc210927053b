#include "qmet/statevector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qmet {

namespace {

int int_log2(std::uint64_t dim) {
    if (dim == 0 || (dim & (dim - 1)) != 0) {
        throw invalid_operand("dimension is not a power of two");
    }
    int n = 0;
    while ((1ULL << n) < dim) ++n;
    return n;
}

}  // namespace

DenseUnitary::DenseUnitary(Eigen::MatrixXcd m, double tol) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0) {
        throw invalid_operand("unitary must be square and non-empty");
    }
    const auto d = std::uint64_t(m_.rows());
    if ((d & (d - 1)) != 0) {
        throw invalid_operand("unitary dimension must be a power of two, got " +
                              std::to_string(d));
    }
    Eigen::MatrixXcd residual =
        m_.adjoint() * m_ - Eigen::MatrixXcd::Identity(m_.rows(), m_.cols());
    double err = residual.cwiseAbs().maxCoeff();
    if (err > tol) {
        throw invalid_operand("matrix is not unitary (max |U*U - I| = " +
                              std::to_string(err) + ")");
    }
}

int DenseUnitary::num_qubits() const { return int_log2(m_.rows()); }

DenseUnitary DenseUnitary::adjoint() const {
    DenseUnitary out;
    out.m_ = m_.adjoint();
    return out;
}

DenseUnitary DenseUnitary::operator*(const DenseUnitary& rhs) const {
    if (dim() != rhs.dim()) {
        throw invalid_operand("unitary product: dimension mismatch");
    }
    DenseUnitary out;
    out.m_ = m_ * rhs.m_;
    return out;
}

namespace {

// Nearest unitary in Frobenius norm (polar projection).  Repeated squaring
// compounds round-off; without this the norm drift after ~2^20 powers is
// large enough to foul downstream unitarity and measurement checks.
Eigen::MatrixXcd reunitarize(const Eigen::MatrixXcd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(
        m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

}  // namespace

DenseUnitary DenseUnitary::power(std::uint64_t k) const {
    DenseUnitary out;
    out.m_ = Eigen::MatrixXcd::Identity(dim(), dim());
    Eigen::MatrixXcd base = m_;
    while (k > 0) {
        if (k & 1ULL) out.m_ = reunitarize(out.m_ * base);
        k >>= 1;
        if (k > 0) base = reunitarize(base * base);
    }
    return out;
}

Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) =
                a(i, j) * b;
        }
    }
    return out;
}

DenseUnitary kron(const DenseUnitary& a, const DenseUnitary& b) {
    DenseUnitary out;
    // Construct directly; the factors were already checked.
    out = DenseUnitary(kron(a.matrix(), b.matrix()), 1e-8);
    return out;
}

DenseUnitary controlled(const DenseUnitary& u) {
    Eigen::Index d = u.dim();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(2 * d, 2 * d);
    m.block(d, d, d, d) = u.matrix();
    return DenseUnitary(std::move(m), 1e-8);
}

namespace gates {

DenseUnitary identity(int dim) {
    return DenseUnitary(Eigen::MatrixXcd::Identity(dim, dim));
}

DenseUnitary pauli_x() {
    Eigen::MatrixXcd m(2, 2);
    m << 0, 1, 1, 0;
    return DenseUnitary(std::move(m));
}

DenseUnitary pauli_y() {
    Eigen::MatrixXcd m(2, 2);
    m << 0, cd(0, -1), cd(0, 1), 0;
    return DenseUnitary(std::move(m));
}

DenseUnitary pauli_z() {
    Eigen::MatrixXcd m(2, 2);
    m << 1, 0, 0, -1;
    return DenseUnitary(std::move(m));
}

DenseUnitary hadamard() {
    double s = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXcd m(2, 2);
    m << s, s, s, -s;
    return DenseUnitary(std::move(m));
}

DenseUnitary phase(double gamma) {
    Eigen::MatrixXcd m(2, 2);
    m << 1, 0, 0, std::exp(cd(0, gamma));
    return DenseUnitary(std::move(m));
}

DenseUnitary ry(double alpha) {
    Eigen::MatrixXcd m(2, 2);
    m << std::cos(alpha), -std::sin(alpha), std::sin(alpha), std::cos(alpha);
    return DenseUnitary(std::move(m));
}

}  // namespace gates

StateVector::StateVector(std::vector<cd> amps) : amps_(std::move(amps)) {
    num_qubits_ = int_log2(amps_.size());
}

StateVector StateVector::basis_state(int num_qubits, std::uint64_t index) {
    std::vector<cd> amps(1ULL << num_qubits, cd(0, 0));
    if (index >= amps.size()) {
        throw invalid_operand("basis index out of range");
    }
    amps[index] = cd(1, 0);
    return StateVector(std::move(amps));
}

double StateVector::norm_sq() const {
    double s = 0.0;
    for (const cd& a : amps_) s += std::norm(a);
    return s;
}

void StateVector::normalize() {
    double n = std::sqrt(norm_sq());
    if (n == 0.0) throw invalid_operand("cannot normalize the zero vector");
    for (cd& a : amps_) a /= n;
}

cd inner_product(const StateVector& a, const StateVector& b) {
    if (a.dim() != b.dim()) {
        throw invalid_operand("inner product: dimension mismatch");
    }
    cd s(0, 0);
    for (std::uint64_t i = 0; i < a.dim(); ++i) {
        s += std::conj(a.amps()[i]) * b.amps()[i];
    }
    return s;
}

StateVector embed(const StateVector& state, const StateVector& ancilla) {
    std::vector<cd> out(state.dim() * ancilla.dim());
    std::uint64_t idx = 0;
    for (std::uint64_t i = 0; i < ancilla.dim(); ++i) {
        for (std::uint64_t j = 0; j < state.dim(); ++j) {
            out[idx++] = ancilla.amps()[i] * state.amps()[j];
        }
    }
    return StateVector(std::move(out));
}

void apply(StateVector& state, const DenseUnitary& u,
           const std::vector<int>& targets, const std::vector<int>& controls) {
    const int n = state.num_qubits();
    const int k = static_cast<int>(targets.size());
    if (u.dim() != (Eigen::Index{1} << k)) {
        throw invalid_operand("apply: gate dimension does not match targets");
    }
    for (int q : targets) {
        if (q < 0 || q >= n) throw invalid_operand("apply: target out of range");
    }
    std::uint64_t control_mask = 0;
    for (int q : controls) {
        if (q < 0 || q >= n) throw invalid_operand("apply: control out of range");
        control_mask |= 1ULL << (n - 1 - q);
    }

    // Bit positions (from the least significant end of the index) of each
    // target qubit; targets[0] is the most significant local bit.
    std::vector<int> shift(k);
    for (int t = 0; t < k; ++t) shift[t] = n - 1 - targets[t];
    std::uint64_t target_mask = 0;
    for (int s : shift) target_mask |= 1ULL << s;
    if (target_mask & control_mask) {
        throw invalid_operand("apply: a qubit is both target and control");
    }

    const std::uint64_t dim = state.dim();
    const std::uint64_t block = 1ULL << k;
    std::vector<cd> scratch(block);
    std::vector<std::uint64_t> offsets(block);
    for (std::uint64_t v = 0; v < block; ++v) {
        std::uint64_t off = 0;
        for (int t = 0; t < k; ++t) {
            if (v & (1ULL << (k - 1 - t))) off |= 1ULL << shift[t];
        }
        offsets[v] = off;
    }

    std::vector<cd>& amps = state.amps();
    for (std::uint64_t base = 0; base < dim; ++base) {
        if (base & target_mask) continue;  // visit each block once
        if ((base & control_mask) != control_mask) continue;
        for (std::uint64_t v = 0; v < block; ++v) scratch[v] = amps[base | offsets[v]];
        for (std::uint64_t r = 0; r < block; ++r) {
            cd acc(0, 0);
            for (std::uint64_t ccol = 0; ccol < block; ++ccol) {
                acc += u.matrix()(static_cast<Eigen::Index>(r),
                                  static_cast<Eigen::Index>(ccol)) *
                       scratch[ccol];
            }
            amps[base | offsets[r]] = acc;
        }
    }
}

void apply(StateVector& state, const DenseUnitary& u) {
    if (u.dim() != static_cast<Eigen::Index>(state.dim())) {
        throw invalid_operand("apply: dimension mismatch");
    }
    const std::uint64_t dim = state.dim();
    std::vector<cd> out(dim, cd(0, 0));
    for (std::uint64_t r = 0; r < dim; ++r) {
        cd acc(0, 0);
        for (std::uint64_t ccol = 0; ccol < dim; ++ccol) {
            acc += u.matrix()(static_cast<Eigen::Index>(r),
                              static_cast<Eigen::Index>(ccol)) *
                   state.amps()[ccol];
        }
        out[r] = acc;
    }
    state.amps() = std::move(out);
}

int measure_qubit(StateVector& state, int qubit, Rng& rng) {
    const int n = state.num_qubits();
    if (qubit < 0 || qubit >= n) {
        throw invalid_operand("measure: qubit out of range");
    }
    const std::uint64_t bit = 1ULL << (n - 1 - qubit);
    // Accumulate both branch masses explicitly: deriving one as 1 - other
    // would silently absorb any tiny norm drift into the kept branch.
    double p0 = 0.0, p1 = 0.0;
    for (std::uint64_t i = 0; i < state.dim(); ++i) {
        (i & bit ? p1 : p0) += std::norm(state.amps()[i]);
    }
    const double u = rng.uniform();
    const int outcome = (u * (p0 + p1) < p1) ? 1 : 0;
    const double p_outcome = outcome ? p1 : p0;
    if (p_outcome < 1e-14) {
        throw internal_error("measured a branch of negligible probability");
    }
    const double scale = 1.0 / std::sqrt(p_outcome);
    for (std::uint64_t i = 0; i < state.dim(); ++i) {
        const bool is_one = (i & bit) != 0;
        if (is_one == (outcome == 1)) {
            state.amps()[i] *= scale;
        } else {
            state.amps()[i] = cd(0, 0);
        }
    }
    return outcome;
}

int measure_qubit_x(StateVector& state, int qubit, Rng& rng) {
    static const DenseUnitary h = gates::hadamard();
    apply(state, h, {qubit});
    return measure_qubit(state, qubit, rng);
}

int measure_qubit_y(StateVector& state, int qubit, Rng& rng) {
    // S^dagger then H maps |+i> -> |0>, |-i> -> |1>.
    static const DenseUnitary rot = [] {
        Eigen::MatrixXcd sdg(2, 2);
        sdg << 1, 0, 0, cd(0, -1);
        return DenseUnitary(gates::hadamard().matrix() * sdg);
    }();
    apply(state, rot, {qubit});
    return measure_qubit(state, qubit, rng);
}

StateVector remove_qubit(const StateVector& state, int qubit, int kept_value) {
    const int n = state.num_qubits();
    if (qubit < 0 || qubit >= n) {
        throw invalid_operand("remove_qubit: qubit out of range");
    }
    const std::uint64_t bit = 1ULL << (n - 1 - qubit);
    const std::uint64_t low_mask = bit - 1;
    std::vector<cd> out(state.dim() / 2);
    for (std::uint64_t j = 0; j < out.size(); ++j) {
        std::uint64_t idx = ((j & ~low_mask) << 1) | (j & low_mask);
        if (kept_value) idx |= bit;
        out[j] = state.amps()[idx];
    }
    StateVector reduced(std::move(out));
    double norm = reduced.norm_sq();
    if (std::abs(norm - 1.0) > 1e-9) {
        throw internal_error("remove_qubit on an entangled/unmeasured qubit");
    }
    return reduced;
}

StateVector random_state(int num_qubits, Rng& rng) {
    std::vector<cd> amps(1ULL << num_qubits);
    for (cd& a : amps) a = cd(rng.normal(), rng.normal());
    StateVector s(std::move(amps));
    s.normalize();
    return s;
}

DenseUnitary random_unitary(int dim, Rng& rng) {
    Eigen::MatrixXcd g(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            g(i, j) = cd(rng.normal(), rng.normal());
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
    Eigen::MatrixXcd q = qr.householderQ();
    Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Fix the phase ambiguity so the distribution is Haar.
    for (int j = 0; j < dim; ++j) {
        cd d = r(j, j);
        cd ph = (std::abs(d) > 0) ? d / std::abs(d) : cd(1, 0);
        q.col(j) *= ph;
    }
    return DenseUnitary(std::move(q));
}

}  // namespace qmet
