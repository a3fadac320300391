#include "qcnn/state.hpp"

#include <algorithm>
#include <cmath>

#include "qcnn/errors.hpp"

namespace qcnn {

namespace {

constexpr cplx kI{0.0, 1.0};

struct Mat2 {
    cplx m00, m01, m10, m11;

    Mat2 dagger() const {
        return {std::conj(m00), std::conj(m10), std::conj(m01), std::conj(m11)};
    }
};

// The 2x2 acting on the target qubit (identity embedding and control
// blocks are handled by the callers).
Mat2 base_matrix(GateKind kind, std::span<const double> params) {
    switch (kind) {
    case GateKind::PauliX:
    case GateKind::Cnot:
    case GateKind::Toffoli:
        return {0.0, 1.0, 1.0, 0.0};
    case GateKind::Rx:
    case GateKind::CRx:
    case GateKind::AntiControlledRx: {
        const double c = std::cos(params[0] / 2.0);
        const double s = std::sin(params[0] / 2.0);
        return {c, -kI * s, -kI * s, c};
    }
    case GateKind::Ry:
    case GateKind::CRy: {
        const double c = std::cos(params[0] / 2.0);
        const double s = std::sin(params[0] / 2.0);
        return {c, -s, s, c};
    }
    case GateKind::Rz:
    case GateKind::CRz: {
        const cplx p = std::exp(-kI * (params[0] / 2.0));
        return {p, 0.0, 0.0, std::conj(p)};
    }
    case GateKind::U3: {
        const double c = std::cos(params[0] / 2.0);
        const double s = std::sin(params[0] / 2.0);
        const cplx e2 = std::exp(kI * params[1]);
        const cplx e3 = std::exp(kI * params[2]);
        return {c, -e3 * s, e2 * s, e2 * e3 * c};
    }
    }
    throw Error("unknown gate kind");
}

// d(base)/d(params[param_index]).
Mat2 base_derivative(GateKind kind, std::span<const double> params, int param_index) {
    switch (kind) {
    case GateKind::Rx:
    case GateKind::CRx:
    case GateKind::AntiControlledRx: {
        const double c = 0.5 * std::cos(params[0] / 2.0);
        const double s = 0.5 * std::sin(params[0] / 2.0);
        return {-s, -kI * c, -kI * c, -s};
    }
    case GateKind::Ry:
    case GateKind::CRy: {
        const double c = 0.5 * std::cos(params[0] / 2.0);
        const double s = 0.5 * std::sin(params[0] / 2.0);
        return {-s, -c, c, -s};
    }
    case GateKind::Rz:
    case GateKind::CRz: {
        const cplx p = std::exp(-kI * (params[0] / 2.0));
        return {-0.5 * kI * p, 0.0, 0.0, 0.5 * kI * std::conj(p)};
    }
    case GateKind::U3: {
        const double c = std::cos(params[0] / 2.0);
        const double s = std::sin(params[0] / 2.0);
        const cplx e2 = std::exp(kI * params[1]);
        const cplx e3 = std::exp(kI * params[2]);
        if (param_index == 0)
            return {-0.5 * s, -0.5 * e3 * c, 0.5 * e2 * c, -0.5 * e2 * e3 * s};
        if (param_index == 1)
            return {0.0, 0.0, kI * e2 * s, kI * e2 * e3 * c};
        return {0.0, -kI * e3 * s, 0.0, kI * e2 * e3 * c};
    }
    default:
        break;
    }
    throw UsageError("gate kind has no differentiable parameter");
}

struct GateMasks {
    std::size_t target;  // single target bit
    std::size_t control; // all filled-control bits
    std::size_t open;    // all open-control bits
};

GateMasks masks_of(const GateSpec& gate) {
    GateMasks m{std::size_t{1} << gate.targets[0], 0, 0};
    for (int c : gate.controls)
        m.control |= std::size_t{1} << c;
    for (int c : gate.open_controls)
        m.open |= std::size_t{1} << c;
    return m;
}

// In-place 2x2 update of every amplitude pair whose control predicate holds.
void transform_pairs(std::span<cplx> amp, const Mat2& m, const GateMasks& g) {
    const std::size_t size = amp.size();
    if (g.control == 0 && g.open == 0) {
        // Uncontrolled fast path: enumerate the 2^(n-1) pairs directly.
        const std::size_t lo = g.target - 1;
        const std::size_t hi = ~lo;
        const std::size_t half = size >> 1;
        for (std::size_t k = 0; k < half; ++k) {
            const std::size_t i = ((k & hi) << 1) | (k & lo);
            const std::size_t j = i | g.target;
            const cplx a0 = amp[i];
            const cplx a1 = amp[j];
            amp[i] = m.m00 * a0 + m.m01 * a1;
            amp[j] = m.m10 * a0 + m.m11 * a1;
        }
        return;
    }
    for (std::size_t i = 0; i < size; ++i) {
        if (i & g.target)
            continue;
        if ((i & g.control) != g.control || (i & g.open) != 0)
            continue;
        const std::size_t j = i | g.target;
        const cplx a0 = amp[i];
        const cplx a1 = amp[j];
        amp[i] = m.m00 * a0 + m.m01 * a1;
        amp[j] = m.m10 * a0 + m.m11 * a1;
    }
}

// Swap pairs where the controls fire (PauliX / CNOT / Toffoli).
void swap_pairs(std::span<cplx> amp, const GateMasks& g) {
    const std::size_t size = amp.size();
    for (std::size_t i = 0; i < size; ++i) {
        if (i & g.target)
            continue;
        if ((i & g.control) != g.control || (i & g.open) != 0)
            continue;
        std::swap(amp[i], amp[i | g.target]);
    }
}

bool is_x_like(GateKind kind) {
    return kind == GateKind::PauliX || kind == GateKind::Cnot || kind == GateKind::Toffoli;
}

} // namespace

StateVector::StateVector(int num_qubits) : num_qubits_(num_qubits) {
    if (num_qubits < kMinQubits || num_qubits > kMaxQubits)
        throw ConfigError("num_qubits must be in [" + std::to_string(kMinQubits) + ", " +
                          std::to_string(kMaxQubits) + "], got " + std::to_string(num_qubits));
    amp_.assign(std::size_t{1} << num_qubits, cplx{0.0, 0.0});
    amp_[0] = 1.0;
}

void StateVector::reset_zero() {
    std::fill(amp_.begin(), amp_.end(), cplx{0.0, 0.0});
    amp_[0] = 1.0;
}

void StateVector::set_real_amplitudes(std::span<const double> values) {
    if (values.size() != amp_.size())
        throw EncodingError("amplitude vector has length " + std::to_string(values.size()) +
                            ", expected " + std::to_string(amp_.size()));
    double sq = 0.0;
    for (double v : values)
        sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-9)
        throw EncodingError("amplitude vector is not L2-normalized (norm " +
                            std::to_string(std::sqrt(sq)) + ")");
    for (std::size_t i = 0; i < amp_.size(); ++i)
        amp_[i] = values[i];
}

double StateVector::norm() const {
    double sq = 0.0;
    for (const cplx& a : amp_)
        sq += std::norm(a);
    return std::sqrt(sq);
}

std::string_view gate_kind_name(GateKind kind) {
    switch (kind) {
    case GateKind::PauliX: return "x";
    case GateKind::Rx: return "rx";
    case GateKind::Ry: return "ry";
    case GateKind::Rz: return "rz";
    case GateKind::CRx: return "crx";
    case GateKind::CRy: return "cry";
    case GateKind::CRz: return "crz";
    case GateKind::Cnot: return "cnot";
    case GateKind::Toffoli: return "toffoli";
    case GateKind::U3: return "u3";
    case GateKind::AntiControlledRx: return "acrx";
    }
    return "?";
}

int gate_param_count(GateKind kind) {
    switch (kind) {
    case GateKind::PauliX:
    case GateKind::Cnot:
    case GateKind::Toffoli:
        return 0;
    case GateKind::U3:
        return 3;
    default:
        return 1;
    }
}

void validate_gate(const GateSpec& gate, int num_qubits) {
    if (gate.targets.size() != 1)
        throw UsageError("gate must have exactly one target qubit");
    const std::size_t expected_controls = [&] {
        switch (gate.kind) {
        case GateKind::CRx:
        case GateKind::CRy:
        case GateKind::CRz:
        case GateKind::Cnot:
            return std::size_t{1};
        case GateKind::Toffoli:
            return std::size_t{2};
        default:
            return std::size_t{0};
        }
    }();
    const std::size_t expected_open = gate.kind == GateKind::AntiControlledRx ? 1 : 0;
    if (gate.controls.size() != expected_controls || gate.open_controls.size() != expected_open)
        throw UsageError(std::string("wrong control count for gate ") +
                         std::string(gate_kind_name(gate.kind)));
    if (gate.params.size() != static_cast<std::size_t>(gate_param_count(gate.kind)))
        throw UsageError(std::string("gate ") + std::string(gate_kind_name(gate.kind)) +
                         " expects " + std::to_string(gate_param_count(gate.kind)) +
                         " parameters, got " + std::to_string(gate.params.size()));

    std::size_t seen = 0;
    auto check = [&](int q) {
        if (q < 0 || q >= num_qubits)
            throw UsageError("qubit index " + std::to_string(q) + " out of range for " +
                             std::to_string(num_qubits) + " qubits");
        const std::size_t bit = std::size_t{1} << q;
        if (seen & bit)
            throw UsageError("gate qubit indices collide on qubit " + std::to_string(q));
        seen |= bit;
    };
    for (int q : gate.targets)
        check(q);
    for (int q : gate.controls)
        check(q);
    for (int q : gate.open_controls)
        check(q);
}

Eigen::MatrixXcd gate_matrix(const GateSpec& gate) {
    validate_gate(gate, StateVector::kMaxQubits);
    const Mat2 b = base_matrix(gate.kind, gate.params);
    const int k = gate.arity();
    const std::size_t dim = std::size_t{1} << k;

    // Local index layout: bit 0 = target, then controls, then open controls.
    std::size_t cmask = 0;
    std::size_t omask = 0;
    std::size_t bit = 2;
    for (std::size_t c = 0; c < gate.controls.size(); ++c, bit <<= 1)
        cmask |= bit;
    for (std::size_t c = 0; c < gate.open_controls.size(); ++c, bit <<= 1)
        omask |= bit;

    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) {
        if (i & 1)
            continue;
        if ((i & cmask) != cmask || (i & omask) != 0)
            continue;
        const std::size_t j = i | 1;
        m(i, i) = b.m00;
        m(i, j) = b.m01;
        m(j, i) = b.m10;
        m(j, j) = b.m11;
    }
    return m;
}

void apply_gate(StateVector& state, const GateSpec& gate, std::span<const double> angles) {
    validate_gate(gate, state.num_qubits());
    if (angles.size() != static_cast<std::size_t>(gate_param_count(gate.kind)))
        throw UsageError("angle override has wrong length");
    const GateMasks g = masks_of(gate);
    if (is_x_like(gate.kind)) {
        swap_pairs(state.amplitudes(), g);
        return;
    }
    transform_pairs(state.amplitudes(), base_matrix(gate.kind, angles), g);
}

void apply_gate(StateVector& state, const GateSpec& gate) {
    apply_gate(state, gate, gate.params);
}

void apply_gate_inverse(StateVector& state, const GateSpec& gate,
                        std::span<const double> angles) {
    validate_gate(gate, state.num_qubits());
    if (angles.size() != static_cast<std::size_t>(gate_param_count(gate.kind)))
        throw UsageError("angle override has wrong length");
    const GateMasks g = masks_of(gate);
    if (is_x_like(gate.kind)) {
        swap_pairs(state.amplitudes(), g);
        return;
    }
    transform_pairs(state.amplitudes(), base_matrix(gate.kind, angles).dagger(), g);
}

void apply_gate_inverse(StateVector& state, const GateSpec& gate) {
    apply_gate_inverse(state, gate, gate.params);
}

void apply_gate_derivative(StateVector& state, const GateSpec& gate,
                           std::span<const double> angles, int param_index) {
    validate_gate(gate, state.num_qubits());
    if (param_index < 0 || param_index >= gate_param_count(gate.kind))
        throw UsageError("derivative parameter index out of range");
    const Mat2 d = base_derivative(gate.kind, angles, param_index);
    const GateMasks g = masks_of(gate);
    std::span<cplx> amp = state.amplitudes();
    for (std::size_t i = 0; i < amp.size(); ++i) {
        if (i & g.target)
            continue;
        const std::size_t j = i | g.target;
        if ((i & g.control) == g.control && (i & g.open) == 0) {
            const cplx a0 = amp[i];
            const cplx a1 = amp[j];
            amp[i] = d.m00 * a0 + d.m01 * a1;
            amp[j] = d.m10 * a0 + d.m11 * a1;
        } else {
            amp[i] = 0.0;
            amp[j] = 0.0;
        }
    }
}

double expectation_z(const StateVector& state, int qubit) {
    if (qubit < 0 || qubit >= state.num_qubits())
        throw UsageError("qubit index " + std::to_string(qubit) + " out of range");
    const std::size_t bit = std::size_t{1} << qubit;
    std::span<const cplx> amp = state.amplitudes();
    double value = 0.0;
    for (std::size_t i = 0; i < amp.size(); ++i) {
        const double p = std::norm(amp[i]);
        value += (i & bit) ? -p : p;
    }
    return value;
}

} // namespace qcnn
