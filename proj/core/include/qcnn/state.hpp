#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qcnn {

using cplx = std::complex<double>;

// Dense statevector of an n-qubit register. Basis index bit b holds the
// state of qubit b, i.e. qubit 0 is the least significant bit of the index.
class StateVector {
  public:
    static constexpr int kMinQubits = 1;
    static constexpr int kMaxQubits = 12;

    // Initializes |0...0>.
    explicit StateVector(int num_qubits);

    int num_qubits() const { return num_qubits_; }
    std::size_t size() const { return amp_.size(); }

    std::span<const cplx> amplitudes() const { return amp_; }
    std::span<cplx> amplitudes() { return amp_; }
    const cplx& operator[](std::size_t i) const { return amp_[i]; }

    // Resets to |0...0>.
    void reset_zero();

    // Writes a real amplitude vector over the full register. The vector must
    // have length 2^n and unit L2 norm within 1e-9.
    void set_real_amplitudes(std::span<const double> values);

    double norm() const;

  private:
    int num_qubits_;
    std::vector<cplx> amp_;
};

enum class GateKind {
    PauliX,
    Rx,
    Ry,
    Rz,
    CRx,
    CRy,
    CRz,
    Cnot,
    Toffoli,
    U3,
    AntiControlledRx,
};

std::string_view gate_kind_name(GateKind kind);

// Number of angle parameters a gate kind carries (0, 1, or 3).
int gate_param_count(GateKind kind);

// One gate instance: kind, target qubit, filled controls (act when |1>),
// open controls (act when |0>) and angle parameters in radians.
struct GateSpec {
    GateKind kind;
    std::vector<int> targets;
    std::vector<int> controls;
    std::vector<int> open_controls;
    std::vector<double> params;

    static GateSpec pauli_x(int q) { return {GateKind::PauliX, {q}, {}, {}, {}}; }
    static GateSpec rx(int q, double t) { return {GateKind::Rx, {q}, {}, {}, {t}}; }
    static GateSpec ry(int q, double t) { return {GateKind::Ry, {q}, {}, {}, {t}}; }
    static GateSpec rz(int q, double t) { return {GateKind::Rz, {q}, {}, {}, {t}}; }
    static GateSpec crx(int c, int t, double a) { return {GateKind::CRx, {t}, {c}, {}, {a}}; }
    static GateSpec cry(int c, int t, double a) { return {GateKind::CRy, {t}, {c}, {}, {a}}; }
    static GateSpec crz(int c, int t, double a) { return {GateKind::CRz, {t}, {c}, {}, {a}}; }
    static GateSpec cnot(int c, int t) { return {GateKind::Cnot, {t}, {c}, {}, {}}; }
    static GateSpec toffoli(int c1, int c2, int t) {
        return {GateKind::Toffoli, {t}, {c1, c2}, {}, {}};
    }
    static GateSpec u3(int q, double t1, double t2, double t3) {
        return {GateKind::U3, {q}, {}, {}, {t1, t2, t3}};
    }
    static GateSpec anti_crx(int open_c, int t, double a) {
        return {GateKind::AntiControlledRx, {t}, {}, {open_c}, {a}};
    }

    // Total qubits the gate touches.
    int arity() const {
        return static_cast<int>(targets.size() + controls.size() + open_controls.size());
    }
};

// Checks index disjointness/range and parameter arity; throws UsageError.
void validate_gate(const GateSpec& gate, int num_qubits);

// The unitary of the gate as a 2^k x 2^k matrix, k = arity. Matrix index
// bit 0 is the target qubit; control bits follow in list order, open
// controls last. Filled controls gate the rotation into the control=|1>
// block, open controls into the control=|0> block.
Eigen::MatrixXcd gate_matrix(const GateSpec& gate);

// Applies the gate in place via index-bitmask pair updates; no full-register
// matrix is formed. Norm is preserved. The `angles` overloads read the gate
// angles from the given span instead of gate.params (same length contract).
void apply_gate(StateVector& state, const GateSpec& gate);
void apply_gate(StateVector& state, const GateSpec& gate, std::span<const double> angles);

// Applies the inverse (conjugate transpose) of the gate in place.
void apply_gate_inverse(StateVector& state, const GateSpec& gate);
void apply_gate_inverse(StateVector& state, const GateSpec& gate,
                        std::span<const double> angles);

// Applies the derivative of the gate unitary with respect to angle
// `param_index` (non-unitary: amplitudes outside the control-selected
// subspace are zeroed). Used by the adjoint gradient sweep.
void apply_gate_derivative(StateVector& state, const GateSpec& gate,
                           std::span<const double> angles, int param_index);

// <Z> on one qubit: sum over basis states of |amp|^2 * (+1 if the qubit bit
// is 0, -1 otherwise). Accumulated in ascending index order. The state is
// not modified.
double expectation_z(const StateVector& state, int qubit);

} // namespace qcnn
