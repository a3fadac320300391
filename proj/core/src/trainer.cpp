#include "qcnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "qcnn/errors.hpp"
#include "qcnn/rng.hpp"

namespace qcnn {

namespace {

constexpr double kProbFloor = 1e-12;

int resolve_threads(int threads) {
#ifdef _OPENMP
    return threads > 0 ? threads : omp_get_max_threads();
#else
    (void)threads;
    return 1;
#endif
}

std::array<double, 3> gate_angles(const ProgramGate& pg, std::span<const double> values) {
    std::array<double, 3> a{};
    const int n = gate_param_count(pg.gate.kind);
    for (int k = 0; k < n; ++k)
        a[k] = pg.slots[k] >= 0 ? values[pg.slots[k]] : pg.gate.params[k];
    return a;
}

bool uses_four_term_rule(GateKind kind) {
    switch (kind) {
    case GateKind::CRx:
    case GateKind::CRy:
    case GateKind::CRz:
    case GateKind::AntiControlledRx:
        return true;
    default:
        return false;
    }
}

std::vector<double> ancilla_expectations(const Network& net, const StateVector& state) {
    std::vector<double> scores;
    scores.reserve(net.measured_qubits().size());
    for (int q : net.measured_qubits())
        scores.push_back(expectation_z(state, q));
    return scores;
}

// d(loss)/d(score_j) of cross_entropy(softmax(scores), onehot).
std::vector<double> loss_chain(std::span<const double> scores, int label) {
    std::vector<double> chain = softmax(scores);
    chain[label] -= 1.0;
    return chain;
}

double sample_loss(std::span<const double> scores, int label) {
    const std::vector<double> probs = softmax(scores);
    const std::vector<double> y = one_hot(label, static_cast<int>(scores.size()));
    return cross_entropy(probs, y);
}

// Per-sample gradient of the shifted-circuit family; prefix states are
// cached so each shifted evaluation replays only the suffix.
void shift_grad_one_sample(const Network& net, std::span<const double> values,
                           std::span<const double> features, int label, const ShiftRule& rule,
                           std::span<double> grad_out, double* loss_out) {
    const std::span<const ProgramGate> program = net.program();
    const std::size_t n_gates = program.size();

    std::vector<StateVector> prefix;
    prefix.reserve(n_gates + 1);
    prefix.push_back(net.encode(features));
    for (std::size_t g = 0; g < n_gates; ++g) {
        prefix.push_back(prefix.back());
        const auto angles = gate_angles(program[g], values);
        apply_gate(prefix.back(), program[g].gate,
                   std::span<const double>(angles.data(),
                                           gate_param_count(program[g].gate.kind)));
    }

    const std::vector<double> scores = ancilla_expectations(net, prefix.back());
    const std::vector<double> chain = loss_chain(scores, label);
    if (loss_out)
        *loss_out = sample_loss(scores, label);

    const int n_out = static_cast<int>(scores.size());
    std::vector<double> shifted_e(n_out);
    std::vector<double> de(n_out);

    for (std::size_t g = 0; g < n_gates; ++g) {
        const ProgramGate& pg = program[g];
        const int n_params = gate_param_count(pg.gate.kind);
        const auto base = gate_angles(pg, values);

        for (int k = 0; k < n_params; ++k) {
            if (pg.slots[k] < 0)
                continue;

            struct Term {
                double shift, coeff;
            };
            std::array<Term, 4> terms;
            int n_terms;
            if (uses_four_term_rule(pg.gate.kind)) {
                terms = {{{rule.four_term_shift1, rule.four_term_coeff1},
                          {-rule.four_term_shift1, -rule.four_term_coeff1},
                          {rule.four_term_shift2, -rule.four_term_coeff2},
                          {-rule.four_term_shift2, rule.four_term_coeff2}}};
                n_terms = 4;
            } else {
                terms = {{{rule.two_term_shift, rule.two_term_coeff},
                          {-rule.two_term_shift, -rule.two_term_coeff},
                          {0, 0},
                          {0, 0}}};
                n_terms = 2;
            }

            std::fill(de.begin(), de.end(), 0.0);
            for (int t = 0; t < n_terms; ++t) {
                StateVector state = prefix[g];
                std::array<double, 3> shifted = base;
                shifted[k] += terms[t].shift;
                apply_gate(state, pg.gate,
                           std::span<const double>(shifted.data(), n_params));
                for (std::size_t h = g + 1; h < n_gates; ++h) {
                    const auto angles = gate_angles(program[h], values);
                    apply_gate(state, program[h].gate,
                               std::span<const double>(
                                   angles.data(), gate_param_count(program[h].gate.kind)));
                }
                int j = 0;
                for (int q : net.measured_qubits())
                    shifted_e[j++] = expectation_z(state, q);
                for (int o = 0; o < n_out; ++o)
                    de[o] += terms[t].coeff * shifted_e[o];
            }

            double contrib = 0.0;
            for (int o = 0; o < n_out; ++o)
                contrib += chain[o] * de[o];
            grad_out[pg.slots[k]] += contrib;
        }
    }
}

void adjoint_grad_one_sample(const Network& net, std::span<const double> values,
                             std::span<const double> features, int label,
                             std::span<double> grad_out, double* loss_out) {
    const std::span<const ProgramGate> program = net.program();

    StateVector psi = net.encode(features);
    net.apply_program(psi, values);

    const std::vector<double> scores = ancilla_expectations(net, psi);
    const std::vector<double> chain = loss_chain(scores, label);
    if (loss_out)
        *loss_out = sample_loss(scores, label);

    // One observable-evolved state per measured qubit.
    const std::span<const int> measured = net.measured_qubits();
    const int n_out = static_cast<int>(measured.size());
    std::vector<StateVector> lambda;
    lambda.reserve(n_out);
    for (int j = 0; j < n_out; ++j) {
        lambda.push_back(psi);
        const std::size_t bit = std::size_t{1} << measured[j];
        for (std::size_t i = 0; i < lambda[j].size(); ++i)
            if (i & bit)
                lambda[j].amplitudes()[i] = -lambda[j].amplitudes()[i];
    }

    StateVector mu = psi; // scratch
    for (std::size_t gi = program.size(); gi-- > 0;) {
        const ProgramGate& pg = program[gi];
        const int n_params = gate_param_count(pg.gate.kind);
        const auto angles = gate_angles(pg, values);
        const std::span<const double> a(angles.data(), n_params);

        apply_gate_inverse(psi, pg.gate, a);

        if (pg.has_slots()) {
            for (int k = 0; k < n_params; ++k) {
                if (pg.slots[k] < 0)
                    continue;
                mu = psi;
                apply_gate_derivative(mu, pg.gate, a, k);
                // dE_j = 2 Re <lambda_j | dU |psi_pre>
                double contrib = 0.0;
                for (int j = 0; j < n_out; ++j) {
                    double re = 0.0;
                    const std::span<const cplx> l = lambda[j].amplitudes();
                    const std::span<const cplx> m = mu.amplitudes();
                    for (std::size_t i = 0; i < l.size(); ++i)
                        re += l[i].real() * m[i].real() + l[i].imag() * m[i].imag();
                    contrib += chain[j] * 2.0 * re;
                }
                grad_out[pg.slots[k]] += contrib;
            }
        }

        for (int j = 0; j < n_out; ++j)
            apply_gate_inverse(lambda[j], pg.gate, a);
    }
}

std::vector<double> batched_gradient(const Network& net, std::span<const double> values,
                                     const BatchView& batch, const ShiftRule& rule,
                                     bool use_adjoint, double* loss_out, int threads) {
    if (batch.size() == 0)
        throw UsageError("gradient needs a nonempty batch");
    const std::size_t n = batch.size();
    const std::size_t dim = values.size();
    std::vector<std::vector<double>> per_sample(n, std::vector<double>(dim, 0.0));
    std::vector<double> losses(n, 0.0);

    const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (std::size_t i = 0; i < n; ++i) {
        if (use_adjoint)
            adjoint_grad_one_sample(net, values, batch.features(i), batch.label(i),
                                    per_sample[i], &losses[i]);
        else
            shift_grad_one_sample(net, values, batch.features(i), batch.label(i), rule,
                                  per_sample[i], &losses[i]);
    }

    // Fixed-order reduction keeps results independent of thread placement.
    std::vector<double> grad(dim, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < dim; ++p)
            grad[p] += per_sample[i][p];
        loss += losses[i];
    }
    const double inv = 1.0 / double(n);
    for (double& g : grad)
        g *= inv;
    if (loss_out)
        *loss_out = loss * inv;
    return grad;
}

} // namespace

std::string_view lr_schedule_name(LrSchedule s) {
    switch (s) {
    case LrSchedule::HalveAt50And100: return "halve_at_50_100";
    case LrSchedule::DropTo0p01At50: return "drop_to_0.01_at_50";
    case LrSchedule::Constant: return "constant";
    }
    return "?";
}

std::string_view grad_method_name(GradMethod m) {
    switch (m) {
    case GradMethod::ParameterShift: return "parameter_shift";
    case GradMethod::FiniteDifference: return "finite_difference";
    case GradMethod::Adjoint: return "adjoint";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (iterations < 1)
        throw ConfigError("iterations must be positive");
    if (batch_size < 1)
        throw ConfigError("batch_size must be at least 1");
    if (lr_initial <= 0)
        throw ConfigError("lr_initial must be positive");
    if (momentum < 0 || momentum >= 1)
        throw ConfigError("momentum must lie in [0, 1)");
    if (eval_every < 1)
        throw ConfigError("eval_every must be positive");
    if (finite_diff_step <= 0)
        throw ConfigError("finite_diff_step must be positive");
    if (seeds.empty())
        throw ConfigError("at least one seed is required");
}

ShiftRule ShiftRule::standard() {
    const double sqrt2 = std::numbers::sqrt2;
    return {
        std::numbers::pi / 2.0, 0.5,
        std::numbers::pi / 2.0, (sqrt2 + 1.0) / (4.0 * sqrt2),
        3.0 * std::numbers::pi / 2.0, (sqrt2 - 1.0) / (4.0 * sqrt2),
    };
}

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty())
        throw UsageError("softmax of an empty vector");
    double mx = scores[0];
    for (double s : scores) {
        if (std::isnan(s))
            throw NumericError("softmax input contains NaN");
        mx = std::max(mx, s);
    }
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        total += out[i];
    }
    for (double& v : out)
        v /= total;
    return out;
}

double cross_entropy(std::span<const double> probs, std::span<const double> onehot) {
    if (probs.size() != onehot.size())
        throw UsageError("probability and one-hot vectors differ in length");
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (onehot[i] != 0.0)
            loss -= onehot[i] * std::log(std::max(probs[i], kProbFloor));
    return loss;
}

double loss_over_batch(const Network& net, std::span<const double> values, const BatchView& batch,
                       std::vector<std::vector<double>>* outputs) {
    if (batch.size() == 0)
        throw UsageError("loss needs a nonempty batch");
    if (outputs) {
        outputs->clear();
        outputs->reserve(batch.size());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> scores = net.forward(values, batch.features(i));
        total += sample_loss(scores, batch.label(i));
        if (outputs)
            outputs->push_back(std::move(scores));
    }
    return total / double(batch.size());
}

std::vector<double> parameter_shift_grad(const Network& net, std::span<const double> values,
                                         const BatchView& batch, double* loss_out, int threads) {
    return batched_gradient(net, values, batch, ShiftRule::standard(), false, loss_out, threads);
}

std::vector<double> parameter_shift_grad_with_rule(const Network& net,
                                                   std::span<const double> values,
                                                   const BatchView& batch, const ShiftRule& rule,
                                                   double* loss_out, int threads) {
    return batched_gradient(net, values, batch, rule, false, loss_out, threads);
}

std::vector<double> adjoint_grad(const Network& net, std::span<const double> values,
                                 const BatchView& batch, double* loss_out, int threads) {
    return batched_gradient(net, values, batch, ShiftRule::standard(), true, loss_out, threads);
}

std::vector<double> finite_diff_grad(const Network& net, std::span<const double> values,
                                     const BatchView& batch, double h, int threads) {
    if (h <= 0)
        throw UsageError("finite difference step must be positive");
    const std::size_t dim = values.size();
    std::vector<double> grad(dim, 0.0);
    const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (std::size_t p = 0; p < dim; ++p) {
        std::vector<double> probe(values.begin(), values.end());
        probe[p] = values[p] + h;
        const double up = loss_over_batch(net, probe, batch);
        probe[p] = values[p] - h;
        const double down = loss_over_batch(net, probe, batch);
        grad[p] = (up - down) / (2.0 * h);
    }
    return grad;
}

void nesterov_step(std::vector<double>& params, std::vector<double>& velocity,
                   std::span<const double> grad_at_lookahead, double lr, double momentum) {
    if (params.size() != velocity.size() || params.size() != grad_at_lookahead.size())
        throw UsageError("parameter, velocity and gradient lengths differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * grad_at_lookahead[i];
        params[i] += velocity[i];
    }
}

double lr_at(LrSchedule schedule, double lr_initial, int iteration) {
    if (iteration < 0)
        throw UsageError("iteration must be nonnegative");
    switch (schedule) {
    case LrSchedule::HalveAt50And100:
        if (iteration < 50)
            return lr_initial;
        return iteration < 100 ? lr_initial / 2.0 : lr_initial / 4.0;
    case LrSchedule::DropTo0p01At50:
        return iteration < 50 ? lr_initial : 0.01;
    case LrSchedule::Constant:
        return lr_initial;
    }
    throw Error("unknown schedule");
}

Evaluation evaluate(const Network& net, std::span<const double> values, const Preprocessed& data,
                    int threads) {
    const std::size_t n = data.features.rows;
    if (n == 0)
        throw UsageError("cannot evaluate on an empty dataset");
    std::vector<double> losses(n);
    std::vector<unsigned char> correct(n);

    const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> scores = net.forward(values, data.features.row(i));
        losses[i] = sample_loss(scores, data.labels[i]);
        const std::size_t pred =
            std::max_element(scores.begin(), scores.end()) - scores.begin();
        correct[i] = pred == static_cast<std::size_t>(data.labels[i]);
    }

    Evaluation ev;
    for (std::size_t i = 0; i < n; ++i) {
        ev.loss += losses[i];
        ev.accuracy += correct[i];
    }
    ev.loss /= double(n);
    ev.accuracy /= double(n);
    return ev;
}

RunMetrics train_run(const Network& net, const TrainConfig& config, const Preprocessed& train,
                     const Preprocessed& test, std::uint64_t seed) {
    config.validate();
    if (train.features.rows == 0 || test.features.rows == 0)
        throw UsageError("train and test sets must be nonempty");

    const auto t0 = std::chrono::steady_clock::now();
    const int dim = net.layout().total();

    Rng rng(seed);
    std::vector<double> params(dim);
    for (double& v : params)
        v = rng.normal();
    std::vector<double> velocity(dim, 0.0);
    std::vector<double> lookahead(dim);

    RunMetrics metrics;
    metrics.seed = seed;
    metrics.train_loss.reserve(config.iterations);

    std::vector<std::size_t> indices(config.batch_size);
    for (int it = 0; it < config.iterations; ++it) {
        const double lr = lr_at(config.lr_schedule, config.lr_initial, it);

        for (int b = 0; b < config.batch_size; ++b)
            indices[b] = rng.index(train.features.rows);
        std::sort(indices.begin(), indices.end());
        const BatchView batch{&train, indices};

        for (int p = 0; p < dim; ++p)
            lookahead[p] = params[p] + config.momentum * velocity[p];

        double batch_loss = 0.0;
        std::vector<double> grad;
        switch (config.grad_method) {
        case GradMethod::ParameterShift:
            grad = parameter_shift_grad(net, lookahead, batch, &batch_loss, config.threads);
            break;
        case GradMethod::Adjoint:
            grad = adjoint_grad(net, lookahead, batch, &batch_loss, config.threads);
            break;
        case GradMethod::FiniteDifference:
            grad = finite_diff_grad(net, lookahead, batch, config.finite_diff_step,
                                    config.threads);
            batch_loss = loss_over_batch(net, lookahead, batch);
            break;
        }
        metrics.train_loss.push_back(batch_loss);

        nesterov_step(params, velocity, grad, lr, config.momentum);

        if ((it + 1) % config.eval_every == 0 || it + 1 == config.iterations) {
            const Evaluation ev = evaluate(net, params, test, config.threads);
            metrics.evals.push_back({it + 1, ev.loss, ev.accuracy});
        }
        if (config.record_trajectory)
            metrics.trajectory.push_back(params);
    }

    metrics.final_params = params;
    metrics.final_test_loss = metrics.evals.back().test_loss;
    metrics.final_test_accuracy = metrics.evals.back().test_accuracy;
    metrics.best_test_accuracy = 0.0;
    for (const EvalRecord& e : metrics.evals)
        metrics.best_test_accuracy = std::max(metrics.best_test_accuracy, e.test_accuracy);
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return metrics;
}

AggregateMetrics multi_run(const Network& net, const TrainConfig& config,
                           const Preprocessed& train, const Preprocessed& test) {
    config.validate();
    if (config.seeds.size() < 2)
        throw ConfigError("aggregation needs at least two seeds");

    const auto t0 = std::chrono::steady_clock::now();
    AggregateMetrics agg;
    agg.runs.reserve(config.seeds.size());
    for (std::uint64_t seed : config.seeds)
        agg.runs.push_back(train_run(net, config, train, test, seed));

    double mean = 0.0;
    for (const RunMetrics& r : agg.runs)
        mean += r.final_test_accuracy;
    mean /= double(agg.runs.size());
    double var = 0.0;
    for (const RunMetrics& r : agg.runs) {
        const double d = r.final_test_accuracy - mean;
        var += d * d;
    }
    agg.mean_final_accuracy = mean;
    agg.std_final_accuracy = std::sqrt(var / double(agg.runs.size() - 1));
    agg.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return agg;
}

std::vector<std::vector<int>> confusion_matrix(const Network& net, std::span<const double> values,
                                               const Preprocessed& data, int threads) {
    const int k = static_cast<int>(net.measured_qubits().size());
    std::vector<int> preds(data.features.rows);
    const int nt = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (std::size_t i = 0; i < data.features.rows; ++i) {
        const std::vector<double> scores = net.forward(values, data.features.row(i));
        preds[i] =
            static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    }
    std::vector<std::vector<int>> m(k, std::vector<int>(k, 0));
    for (std::size_t i = 0; i < data.features.rows; ++i) {
        const int truth = data.labels[i];
        if (truth < 0 || truth >= k)
            throw UsageError("label " + std::to_string(truth) + " outside class range");
        m[truth][preds[i]] += 1;
    }
    return m;
}

} // namespace qcnn
