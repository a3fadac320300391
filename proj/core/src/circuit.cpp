#include "qcnn/circuit.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "qcnn/errors.hpp"
#include "qcnn/rng.hpp"

namespace qcnn {

namespace {

int ansatz_param_count(AnsatzKind a) { return a == AnsatzKind::A1 ? 15 : 10; }

// Appends program gates; slot -1 means the angle stays fixed at 0.
struct Emitter {
    std::vector<ProgramGate>& out;

    void push(GateSpec gate, std::array<int, 3> slots = {-1, -1, -1}) {
        out.push_back(ProgramGate{std::move(gate), slots});
    }
    void x(int q) { push(GateSpec::pauli_x(q)); }
    void rx(int q, int slot) { push(GateSpec::rx(q, 0.0), {slot, -1, -1}); }
    void ry(int q, int slot) { push(GateSpec::ry(q, 0.0), {slot, -1, -1}); }
    void rz(int q, int slot) { push(GateSpec::rz(q, 0.0), {slot, -1, -1}); }
    void u3(int q, int s0, int s1, int s2) { push(GateSpec::u3(q, 0, 0, 0), {s0, s1, s2}); }
    void crx(int c, int t, int slot) { push(GateSpec::crx(c, t, 0.0), {slot, -1, -1}); }
    void crz(int c, int t, int slot) { push(GateSpec::crz(c, t, 0.0), {slot, -1, -1}); }
    void acrx(int oc, int t, int slot) { push(GateSpec::anti_crx(oc, t, 0.0), {slot, -1, -1}); }
    void cnot(int c, int t) { push(GateSpec::cnot(c, t)); }
    void toffoli(int c1, int c2, int t) { push(GateSpec::toffoli(c1, c2, t)); }
};

void emit_ansatz1(Emitter& e, int qa, int qb, int base) {
    e.u3(qa, base + 0, base + 1, base + 2);
    e.u3(qb, base + 3, base + 4, base + 5);
    e.cnot(qa, qb);
    e.ry(qa, base + 6);
    e.rz(qb, base + 7);
    e.cnot(qb, qa);
    e.ry(qa, base + 8);
    e.cnot(qa, qb);
    e.u3(qa, base + 9, base + 10, base + 11);
    e.u3(qb, base + 12, base + 13, base + 14);
}

void emit_ansatz2(Emitter& e, int qa, int qb, int base) {
    e.rx(qa, base + 0);
    e.rz(qa, base + 1);
    e.rx(qb, base + 5);
    e.rz(qb, base + 6);
    e.crx(qb, qa, base + 2);
    e.crx(qa, qb, base + 7);
    e.rx(qa, base + 3);
    e.rz(qa, base + 4);
    e.rx(qb, base + 8);
    e.rz(qb, base + 9);
}

void emit_ansatz(Emitter& e, AnsatzKind a, int qa, int qb, int base) {
    if (a == AnsatzKind::A1)
        emit_ansatz1(e, qa, qb, base);
    else
        emit_ansatz2(e, qa, qb, base);
}

void emit_conv_layer(Emitter& e, std::span<const int> ring, AnsatzKind ansatz, int base) {
    const int m = static_cast<int>(ring.size());
    if (m < 4 || m % 2 != 0)
        throw ConfigError("convolutional layer needs an even ring of at least 4 qubits, got " +
                          std::to_string(m));
    for (int i = 0; i + 1 < m; i += 2)
        emit_ansatz(e, ansatz, ring[i], ring[i + 1], base);
    for (int i = 1; i + 1 < m; i += 2)
        emit_ansatz(e, ansatz, ring[i], ring[i + 1], base);
    emit_ansatz(e, ansatz, ring[m - 1], ring[0], base);
}

std::vector<int> emit_pooling(Emitter& e, std::span<const int> qubits, int base) {
    const int m = static_cast<int>(qubits.size());
    if (m < 2 || m % 2 != 0)
        throw ConfigError("pooling layer needs an even number of qubits, got " +
                          std::to_string(m));
    std::vector<int> kept;
    kept.reserve(m / 2);
    for (int i = 0; i + 1 < m; i += 2) {
        const int keep = qubits[i];
        const int drop = qubits[i + 1];
        e.crz(drop, keep, base + 0);
        e.x(drop);
        e.acrx(drop, keep, base + 1);
        kept.push_back(keep);
    }
    return kept;
}

void check_four(std::span<const int> qubits, const char* what) {
    if (qubits.size() != 4)
        throw ConfigError(std::string(what) + " needs exactly 4 live qubits, got " +
                          std::to_string(qubits.size()));
}

void emit_il1(Emitter& e, std::span<const int> q) {
    check_four(q, "interaction layer 1");
    e.toffoli(q[1], q[2], q[3]);
    e.toffoli(q[0], q[3], q[1]);
    e.toffoli(q[0], q[1], q[2]);
    e.toffoli(q[2], q[3], q[0]);
}

void emit_il2(Emitter& e, std::span<const int> q, int base) {
    check_four(q, "interaction layer 2");
    e.toffoli(q[1], q[2], q[3]);
    e.toffoli(q[0], q[3], q[1]);
    for (int i = 0; i < 4; ++i)
        e.rx(q[i], base + i);
    e.toffoli(q[0], q[1], q[2]);
    for (int i = 0; i < 4; ++i)
        e.ry(q[i], base + 4 + i);
    e.toffoli(q[2], q[3], q[0]);
    for (int i = 0; i < 4; ++i)
        e.rz(q[i], base + 8 + i);
}

void emit_classifier(Emitter& e, std::span<const int> d, std::span<const int> anc, int base) {
    check_four(d, "classifier layer");
    if (anc.empty())
        throw ConfigError("classifier layer needs at least one ancilla");
    e.cnot(d[3], d[0]);
    e.cnot(d[0], d[1]);
    e.cnot(d[1], d[2]);
    e.cnot(d[2], d[3]);
    // One entangling link per ancilla, cycling over the data qubits starting
    // at the second one.
    const int k = static_cast<int>(anc.size());
    for (int j = 0; j < k; ++j)
        e.cnot(d[(1 + j) % 4], anc[j]);
    for (int j = 0; j < k; ++j)
        e.rz(anc[j], base + 3 * j);
    for (int j = 0; j < k; ++j)
        e.ry(anc[j], base + 3 * j + 1);
    for (int j = 0; j < k; ++j)
        e.rx(anc[j], base + 3 * j + 2);
}

struct LayoutPlan {
    std::vector<ParamGroup> groups;
    int cursor = 0;

    int add(std::string name, int size) {
        const int begin = cursor;
        cursor += size;
        groups.push_back({std::move(name), begin, cursor});
        return begin;
    }
};

LayoutPlan plan_layout(const NetworkConfig& c) {
    LayoutPlan plan;
    const int ap = ansatz_param_count(c.ansatz);
    plan.add("Conv1", ap);
    if (!c.iris_variant) {
        plan.add("Pool", 2);
        plan.add("Conv2", ap);
    }
    if (c.interaction_layers_enabled)
        plan.add("IL2", 12);
    plan.add("Classifier", 3 * c.num_classes);
    return plan;
}

std::vector<GateSpec> materialize_all(const std::vector<ProgramGate>& gates,
                                      std::span<const double> values) {
    std::vector<GateSpec> out;
    out.reserve(gates.size());
    for (const ProgramGate& pg : gates)
        out.push_back(materialize(pg, values));
    return out;
}

void check_theta(std::span<const double> theta, int expected, const char* what) {
    if (theta.size() != static_cast<std::size_t>(expected))
        throw UsageError(std::string(what) + " expects " + std::to_string(expected) +
                         " angles, got " + std::to_string(theta.size()));
}

} // namespace

std::string_view encoding_name(Encoding e) {
    return e == Encoding::Amplitude ? "amplitude" : "angle";
}

std::string_view ansatz_name(AnsatzKind a) { return a == AnsatzKind::A1 ? "A1" : "A2"; }

void NetworkConfig::validate() const {
    if (num_classes < 2)
        throw ConfigError("num_classes must be at least 2, got " + std::to_string(num_classes));
    if (iris_variant) {
        if (data_qubits != 4)
            throw ConfigError("the 4-qubit variant requires data_qubits == 4");
        if (encoding != Encoding::Angle)
            throw ConfigError("the 4-qubit variant requires angle encoding");
    } else if (data_qubits != 8) {
        throw ConfigError("image networks require data_qubits == 8, got " +
                          std::to_string(data_qubits));
    }
    if (encoding == Encoding::Amplitude && data_qubits != 8)
        throw ConfigError("amplitude encoding requires data_qubits == 8");
    if (total_qubits() > StateVector::kMaxQubits)
        throw ConfigError("total qubit count " + std::to_string(total_qubits()) + " exceeds " +
                          std::to_string(StateVector::kMaxQubits));
    if (conv_repeats_per_stage < 1)
        throw ConfigError("conv_repeats_per_stage must be positive");
}

ParamLayout::ParamLayout(std::vector<ParamGroup> groups) : groups_(std::move(groups)) {
    for (const ParamGroup& g : groups_)
        total_ = std::max(total_, g.end);
}

const ParamGroup* ParamLayout::find(std::string_view name) const {
    for (const ParamGroup& g : groups_)
        if (g.name == name)
            return &g;
    return nullptr;
}

std::uint64_t ParamLayout::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ull;
    };
    for (const ParamGroup& g : groups_) {
        for (char c : g.name)
            mix(static_cast<unsigned char>(c));
        mix(0xff);
        mix(static_cast<std::uint64_t>(g.begin));
        mix(static_cast<std::uint64_t>(g.end));
    }
    return h;
}

GateSpec materialize(const ProgramGate& pg, std::span<const double> values) {
    GateSpec g = pg.gate;
    for (std::size_t k = 0; k < g.params.size(); ++k)
        if (pg.slots[k] >= 0)
            g.params[k] = values[pg.slots[k]];
    return g;
}

int param_count(const NetworkConfig& config) {
    config.validate();
    return plan_layout(config).cursor;
}

ParameterVector init_parameters(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    ParameterVector p;
    p.layout = ParamLayout(plan_layout(config).groups);
    p.values.resize(p.layout.total());
    Rng rng(seed);
    for (double& v : p.values)
        v = rng.normal();
    return p;
}

Network::Network(const NetworkConfig& config) : config_(config) {
    config_.validate();
    LayoutPlan plan = plan_layout(config_);
    layout_ = ParamLayout(plan.groups);

    std::vector<int> ring(config_.data_qubits);
    for (int i = 0; i < config_.data_qubits; ++i)
        ring[i] = i;
    for (int j = 0; j < config_.num_classes; ++j)
        ancillas_.push_back(config_.data_qubits + j);

    Emitter e{program_};
    const int ap = ansatz_param_count(config_.ansatz);
    const std::string conv_note =
        std::string(ansatz_name(config_.ansatz)) +
        (config_.conv_repeats_per_stage > 1 ? ", x" + std::to_string(config_.conv_repeats_per_stage)
                                            : "");

    summaries_.push_back({"encoding (" + std::string(encoding_name(config_.encoding)) + ")",
                          std::to_string(config_.data_qubits), 0});

    const int conv1_base = layout_.find("Conv1")->begin;
    for (int r = 0; r < config_.conv_repeats_per_stage; ++r)
        emit_conv_layer(e, ring, config_.ansatz, conv1_base);
    summaries_.push_back({"conv layer 1 (" + conv_note + ")", std::to_string(ring.size()), ap});

    std::vector<int> live = ring;
    if (!config_.iris_variant) {
        live = emit_pooling(e, ring, layout_.find("Pool")->begin);
        summaries_.push_back(
            {"pooling", std::to_string(ring.size()) + " -> " + std::to_string(live.size()), 2});
    }

    if (config_.interaction_layers_enabled) {
        emit_il1(e, live);
        summaries_.push_back({"interaction layer 1", std::to_string(live.size()), 0});
    }

    if (!config_.iris_variant) {
        const int conv2_base = layout_.find("Conv2")->begin;
        for (int r = 0; r < config_.conv_repeats_per_stage; ++r)
            emit_conv_layer(e, live, config_.ansatz, conv2_base);
        summaries_.push_back({"conv layer 2 (" + conv_note + ")", std::to_string(live.size()), ap});
    }

    if (config_.interaction_layers_enabled) {
        emit_il2(e, live, layout_.find("IL2")->begin);
        summaries_.push_back({"interaction layer 2", std::to_string(live.size()), 12});
    }

    emit_classifier(e, live, ancillas_, layout_.find("Classifier")->begin);
    summaries_.push_back({"classifier (+" + std::to_string(config_.num_classes) + " ancillas)",
                          std::to_string(live.size()) + " + " + std::to_string(config_.num_classes),
                          3 * config_.num_classes});
    summaries_.push_back({"measurement", std::to_string(config_.num_classes), 0});
}

StateVector Network::encode(std::span<const double> features) const {
    StateVector state(total_qubits());
    if (config_.encoding == Encoding::Amplitude) {
        amplitude_encode(state, features, config_.data_qubits);
    } else {
        std::vector<int> qubits(config_.data_qubits);
        for (int i = 0; i < config_.data_qubits; ++i)
            qubits[i] = i;
        angle_encode(state, features, qubits);
    }
    return state;
}

void Network::apply_program(StateVector& state, std::span<const double> values) const {
    if (values.size() != static_cast<std::size_t>(layout_.total()))
        throw UsageError("parameter vector has length " + std::to_string(values.size()) +
                         ", expected " + std::to_string(layout_.total()));
    std::array<double, 3> angles{};
    for (const ProgramGate& pg : program_) {
        const int n = gate_param_count(pg.gate.kind);
        for (int k = 0; k < n; ++k)
            angles[k] = pg.slots[k] >= 0 ? values[pg.slots[k]] : pg.gate.params[k];
        apply_gate(state, pg.gate, std::span<const double>(angles.data(), n));
    }
}

std::vector<double> Network::forward(std::span<const double> values,
                                     std::span<const double> features) const {
    StateVector state = encode(features);
    apply_program(state, values);
    std::vector<double> scores;
    scores.reserve(ancillas_.size());
    for (int q : ancillas_)
        scores.push_back(expectation_z(state, q));
    return scores;
}

std::string Network::describe() const {
    std::ostringstream os;
    os << "qcnn network\n";
    os << "  encoding: " << encoding_name(config_.encoding)
       << "   ansatz: " << ansatz_name(config_.ansatz)
       << "   data qubits: " << config_.data_qubits << "   classes: " << config_.num_classes
       << "\n";
    os << "  conv repeats per stage: " << config_.conv_repeats_per_stage
       << "   interaction layers: " << (config_.interaction_layers_enabled ? "on" : "off")
       << "   iris variant: " << (config_.iris_variant ? "on" : "off") << "\n";
    os << "  total qubits: " << total_qubits() << " (ancillas q" << ancillas_.front() << "..q"
       << ancillas_.back() << ")   trainable parameters: " << layout_.total() << "\n";

    os << "\nparameter layout\n";
    for (const ParamGroup& g : layout_.groups()) {
        os << "  " << std::left << std::setw(12) << g.name << std::right << " [" << std::setw(3)
           << g.begin << "," << std::setw(4) << g.end << ")  " << std::setw(3) << g.size() << "\n";
    }

    os << "\nlayer accounting\n";
    os << "  " << std::left << std::setw(30) << "operation" << std::setw(12) << "qubits"
       << "params" << std::right << "\n";
    for (const LayerSummary& row : summaries_) {
        os << "  " << std::left << std::setw(30) << row.operation << std::setw(12) << row.qubits
           << row.params << std::right << "\n";
    }

    os << "\ngates\n";
    for (std::size_t i = 0; i < program_.size(); ++i) {
        const ProgramGate& pg = program_[i];
        std::string qubits;
        auto join = [](const std::vector<int>& qs) {
            std::string s;
            for (std::size_t k = 0; k < qs.size(); ++k)
                s += (k ? ",q" : "q") + std::to_string(qs[k]);
            return s;
        };
        if (!pg.gate.controls.empty())
            qubits = join(pg.gate.controls) + " -> " + join(pg.gate.targets);
        else if (!pg.gate.open_controls.empty())
            qubits = join(pg.gate.open_controls) + " o-> " + join(pg.gate.targets);
        else
            qubits = join(pg.gate.targets);

        os << "  [" << std::setw(3) << i << "] " << std::left << std::setw(8)
           << gate_kind_name(pg.gate.kind) << std::setw(16) << qubits << std::right;
        if (pg.has_slots()) {
            os << "slots ";
            const int n = gate_param_count(pg.gate.kind);
            for (int k = 0; k < n; ++k)
                os << (k ? "," : "") << pg.slots[k];
        }
        os << "\n";
    }
    return os.str();
}

std::vector<GateSpec> conv_ansatz1(int qa, int qb, std::span<const double> theta) {
    check_theta(theta, 15, "conv_ansatz1");
    if (qa == qb)
        throw UsageError("ansatz qubits must differ");
    std::vector<ProgramGate> gates;
    Emitter e{gates};
    emit_ansatz1(e, qa, qb, 0);
    return materialize_all(gates, theta);
}

std::vector<GateSpec> conv_ansatz2(int qa, int qb, std::span<const double> theta) {
    check_theta(theta, 10, "conv_ansatz2");
    if (qa == qb)
        throw UsageError("ansatz qubits must differ");
    std::vector<ProgramGate> gates;
    Emitter e{gates};
    emit_ansatz2(e, qa, qb, 0);
    return materialize_all(gates, theta);
}

std::vector<GateSpec> conv_layer(std::span<const int> ring, AnsatzKind ansatz,
                                 std::span<const double> theta) {
    check_theta(theta, ansatz_param_count(ansatz), "conv_layer");
    std::vector<ProgramGate> gates;
    Emitter e{gates};
    emit_conv_layer(e, ring, ansatz, 0);
    return materialize_all(gates, theta);
}

std::pair<std::vector<GateSpec>, std::vector<int>> pooling_layer(std::span<const int> qubits,
                                                                 std::span<const double> theta) {
    check_theta(theta, 2, "pooling_layer");
    std::vector<ProgramGate> gates;
    Emitter e{gates};
    std::vector<int> kept = emit_pooling(e, qubits, 0);
    return {materialize_all(gates, theta), std::move(kept)};
}

std::vector<GateSpec> interaction_layer1(std::span<const int> qubits) {
    std::vector<ProgramGate> gates;
    Emitter e{gates};
    emit_il1(e, qubits);
    return materialize_all(gates, {});
}

std::vector<GateSpec> interaction_layer2(std::span<const int> qubits,
                                         std::span<const double> theta) {
    check_theta(theta, 12, "interaction_layer2");
    std::vector<ProgramGate> gates;
    Emitter e{gates};
    emit_il2(e, qubits, 0);
    return materialize_all(gates, theta);
}

std::vector<GateSpec> classifier_layer(std::span<const int> data_qubits,
                                       std::span<const int> ancillas,
                                       std::span<const double> theta) {
    check_theta(theta, 3 * static_cast<int>(ancillas.size()), "classifier_layer");
    std::vector<ProgramGate> gates;
    Emitter e{gates};
    emit_classifier(e, data_qubits, ancillas, 0);
    return materialize_all(gates, theta);
}

void angle_encode(StateVector& state, std::span<const double> features,
                  std::span<const int> qubits) {
    if (features.size() != qubits.size())
        throw EncodingError("angle encoding expects one feature per qubit (" +
                            std::to_string(qubits.size()) + "), got " +
                            std::to_string(features.size()));
    for (std::size_t i = 0; i < qubits.size(); ++i)
        apply_gate(state, GateSpec::ry(qubits[i], features[i]));
}

void amplitude_encode(StateVector& state, std::span<const double> features, int data_qubits) {
    const std::size_t expected = std::size_t{1} << data_qubits;
    if (features.size() != expected)
        throw EncodingError("amplitude encoding expects " + std::to_string(expected) +
                            " features, got " + std::to_string(features.size()));
    double sq = 0.0;
    for (double v : features)
        sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-9)
        throw EncodingError("amplitude-encoded features must have unit norm (norm " +
                            std::to_string(std::sqrt(sq)) + ")");
    std::span<cplx> amp = state.amplitudes();
    std::fill(amp.begin(), amp.end(), cplx{0.0, 0.0});
    for (std::size_t i = 0; i < expected; ++i)
        amp[i] = features[i];
}

} // namespace qcnn
