#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qcnn/state.hpp"

namespace qcnn {

enum class Encoding { Amplitude, Angle };
enum class AnsatzKind { A1, A2 };

std::string_view encoding_name(Encoding e);
std::string_view ansatz_name(AnsatzKind a);

// Full architecture description. Image networks run 8 data qubits, a
// pooling stage and two convolutional stages; the 4-qubit variant for
// low-dimensional feature data drops pooling and the second stage.
struct NetworkConfig {
    Encoding encoding = Encoding::Amplitude;
    AnsatzKind ansatz = AnsatzKind::A1;
    int data_qubits = 8;
    int num_classes = 2;
    int conv_repeats_per_stage = 1;
    bool interaction_layers_enabled = true;
    bool iris_variant = false;

    int total_qubits() const { return data_qubits + num_classes; }
    // Expected input feature length for the configured encoding.
    int feature_length() const {
        return encoding == Encoding::Amplitude ? (1 << data_qubits) : data_qubits;
    }
    // Throws ConfigError when the fields are inconsistent.
    void validate() const;
};

// Named contiguous slot ranges of the flat trainable-parameter vector.
// All ansatz instances inside one convolutional layer read the same range.
struct ParamGroup {
    std::string name;
    int begin = 0;
    int end = 0;

    int size() const { return end - begin; }
};

class ParamLayout {
  public:
    ParamLayout() = default;
    explicit ParamLayout(std::vector<ParamGroup> groups);

    int total() const { return total_; }
    std::span<const ParamGroup> groups() const { return groups_; }
    const ParamGroup* find(std::string_view name) const;

    // Stable structural fingerprint (FNV-1a over names and ranges), used to
    // reject parameter files saved under a different layout.
    std::uint64_t hash() const;

  private:
    std::vector<ParamGroup> groups_;
    int total_ = 0;
};

// Flat trainable-angle vector plus its slot-group map.
struct ParameterVector {
    std::vector<double> values;
    ParamLayout layout;
};

// One gate of a built network. Angle k of `gate` is read from
// values[slots[k]] when slots[k] >= 0 and from gate.params[k] otherwise.
struct ProgramGate {
    GateSpec gate;
    std::array<int, 3> slots{-1, -1, -1};

    bool has_slots() const { return slots[0] >= 0 || slots[1] >= 0 || slots[2] >= 0; }
};

// Row of the layer accounting table rendered by describe().
struct LayerSummary {
    std::string operation;
    std::string qubits;
    int params = 0;
};

// The network as an ordered gate program over a parameter layout.
// Construction is pure; a built network can be evaluated concurrently.
class Network {
  public:
    explicit Network(const NetworkConfig& config);

    const NetworkConfig& config() const { return config_; }
    const ParamLayout& layout() const { return layout_; }
    std::span<const ProgramGate> program() const { return program_; }
    std::span<const int> measured_qubits() const { return ancillas_; }
    std::span<const LayerSummary> layer_summaries() const { return summaries_; }
    int total_qubits() const { return config_.total_qubits(); }

    // State preparation for one feature vector (already preprocessed for the
    // configured encoding).
    StateVector encode(std::span<const double> features) const;

    // Applies the full gate program with the given parameter values.
    void apply_program(StateVector& state, std::span<const double> values) const;

    // encode + apply_program + <Z> on each ancilla, in ancilla order.
    std::vector<double> forward(std::span<const double> values,
                                std::span<const double> features) const;

    // Deterministic text dump: header, parameter layout, layer accounting
    // and one line per gate (kind, qubits, slot indices).
    std::string describe() const;

  private:
    NetworkConfig config_;
    ParamLayout layout_;
    std::vector<ProgramGate> program_;
    std::vector<int> ancillas_;
    std::vector<LayerSummary> summaries_;
};

// Trainable-parameter total for a configuration (without building gates).
int param_count(const NetworkConfig& config);

// Initializes parameter values from N(0, 1) with the given seed.
ParameterVector init_parameters(const NetworkConfig& config, std::uint64_t seed);

// Fills a gate's slot-driven angles from a value vector.
GateSpec materialize(const ProgramGate& pg, std::span<const double> values);

// --- layer building blocks -------------------------------------------------
//
// Each returns the concrete gate sequence (application order) for explicit
// angles; the Network builder emits the same structure with parameter slots.

// Two-qubit ansatz with 15 angles: U3 pair, CNOT ladder with Ry/Rz, U3 pair.
std::vector<GateSpec> conv_ansatz1(int qa, int qb, std::span<const double> theta);

// Two-qubit ansatz with 10 angles: Rx/Rz pairs around two cross-directed
// controlled-Rx gates.
std::vector<GateSpec> conv_ansatz2(int qa, int qb, std::span<const double> theta);

// Translationally invariant layer on a ring of qubits: one rail of ansatz
// instances on pairs (q0,q1),(q2,q3),... and a second rail on
// (q1,q2),...,(q_{m-1},q0). Every instance reads the same shared angles.
std::vector<GateSpec> conv_layer(std::span<const int> ring, AnsatzKind ansatz,
                                 std::span<const double> theta);

// Halves the live register: per pair (keep, drop) applies CRz(theta[0])
// drop->keep, X on drop, and an open-control Rx(theta[1]) drop->keep.
// Returns the gates and the kept qubits; dropped qubits are never addressed
// by later layers.
std::pair<std::vector<GateSpec>, std::vector<int>> pooling_layer(std::span<const int> qubits,
                                                                 std::span<const double> theta);

// Four Toffoli gates entangling four live qubits in a circuit-block pattern.
std::vector<GateSpec> interaction_layer1(std::span<const int> qubits);

// The Toffoli block interleaved with trainable Rx/Ry/Rz rotations (12 angles).
std::vector<GateSpec> interaction_layer2(std::span<const int> qubits,
                                         std::span<const double> theta);

// Ring CNOTs over the data qubits, one CNOT link per ancilla, then per-ancilla
// Rz/Ry/Rx rotations (3 angles each).
std::vector<GateSpec> classifier_layer(std::span<const int> data_qubits,
                                       std::span<const int> ancillas,
                                       std::span<const double> theta);

// Ry(features[i]) on qubits[i]; features must be scaled to [0, pi].
void angle_encode(StateVector& state, std::span<const double> features,
                  std::span<const int> qubits);

// Writes a unit-norm feature vector of length 2^data_qubits as the amplitudes
// of the data subregister (ancillas stay |0>).
void amplitude_encode(StateVector& state, std::span<const double> features, int data_qubits);

} // namespace qcnn
