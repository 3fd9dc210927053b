#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qmet/common.hpp"

namespace qmet {

using cd = std::complex<double>;

// A unitary matrix with the unitarity check done once at construction.
// Qubit/index convention everywhere: qubit 0 is the most significant bit of
// the basis-state index, so |q0 q1 ... q_{n-1}> has index q0*2^{n-1} + ... .
class DenseUnitary {
  public:
    DenseUnitary() = default;
    explicit DenseUnitary(Eigen::MatrixXcd m, double tol = 1e-10);

    const Eigen::MatrixXcd& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }
    int num_qubits() const;

    DenseUnitary adjoint() const;
    DenseUnitary operator*(const DenseUnitary& rhs) const;

    // U^k by repeated squaring (k >= 0).
    DenseUnitary power(std::uint64_t k) const;

  private:
    Eigen::MatrixXcd m_;
};

// Tensor product; `a` acts on the more significant qubits.
Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b);
DenseUnitary kron(const DenseUnitary& a, const DenseUnitary& b);

// Block-diagonal controlled version diag(I, u): control qubit is prepended
// as the new most-significant qubit.
DenseUnitary controlled(const DenseUnitary& u);

// Fixed 2x2 gates.
namespace gates {
DenseUnitary identity(int dim);
DenseUnitary pauli_x();
DenseUnitary pauli_y();
DenseUnitary pauli_z();
DenseUnitary hadamard();
// diag(1, e^{i*gamma})
DenseUnitary phase(double gamma);
// exp(-i*alpha*Y): rotation by angle 2*alpha about the y axis.
DenseUnitary ry(double alpha);
}  // namespace gates

class StateVector {
  public:
    StateVector() = default;
    explicit StateVector(std::vector<cd> amps);

    static StateVector basis_state(int num_qubits, std::uint64_t index);

    int num_qubits() const { return num_qubits_; }
    std::uint64_t dim() const { return amps_.size(); }
    const std::vector<cd>& amps() const { return amps_; }
    std::vector<cd>& amps() { return amps_; }

    double norm_sq() const;
    void normalize();

  private:
    std::vector<cd> amps_;
    int num_qubits_ = 0;
};

// <a|b>
cd inner_product(const StateVector& a, const StateVector& b);

// ancilla (x) state: the ancilla qubits become the most significant ones.
StateVector embed(const StateVector& state, const StateVector& ancilla);

// Applies `u` to the listed target qubits (targets[0] is the most
// significant qubit of u's local index), conditioned on every control qubit
// being |1>.  Dimensions must match: u.dim() == 2^targets.size().
void apply(StateVector& state, const DenseUnitary& u,
           const std::vector<int>& targets,
           const std::vector<int>& controls = {});

// Applies a full-register unitary.
void apply(StateVector& state, const DenseUnitary& u);

// Computational-basis measurement of one qubit.  Returns the outcome and
// collapses the state in place.  Draws exactly one uniform variate per call.
int measure_qubit(StateVector& state, int qubit, Rng& rng);

// Measurement in the X basis (outcome 0 <-> |+>, 1 <-> |->) and the
// Y basis (outcome 0 <-> |+i>, 1 <-> |-i>), realised by basis rotation
// followed by a computational-basis measurement.
int measure_qubit_x(StateVector& state, int qubit, Rng& rng);
int measure_qubit_y(StateVector& state, int qubit, Rng& rng);

// Removes a qubit that has just been measured (its marginal must be pure);
// keeps the remaining qubits' state.  `kept_value` is the computational
// value the qubit collapsed to.
StateVector remove_qubit(const StateVector& state, int qubit, int kept_value);

// Haar-ish random state / unitary for tests and experiment instances
// (normal amplitudes + normalisation, QR with phase fix).
StateVector random_state(int num_qubits, Rng& rng);
DenseUnitary random_unitary(int dim, Rng& rng);

}  // namespace qmet
