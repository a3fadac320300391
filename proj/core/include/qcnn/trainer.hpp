#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qcnn/circuit.hpp"
#include "qcnn/datapipe.hpp"

namespace qcnn {

enum class LrSchedule { HalveAt50And100, DropTo0p01At50, Constant };
enum class GradMethod { ParameterShift, FiniteDifference, Adjoint };

std::string_view lr_schedule_name(LrSchedule s);
std::string_view grad_method_name(GradMethod m);

struct TrainConfig {
    int iterations = 1000;
    int batch_size = 50;
    double lr_initial = 0.05;
    LrSchedule lr_schedule = LrSchedule::HalveAt50And100;
    double momentum = 0.9;
    int eval_every = 10;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    GradMethod grad_method = GradMethod::ParameterShift;
    double finite_diff_step = 1e-4;
    bool record_trajectory = false;
    int threads = 0; // 0 = hardware default

    void validate() const;
};

struct EvalRecord {
    int iteration = 0;
    double test_loss = 0.0;
    double test_accuracy = 0.0;
};

struct RunMetrics {
    std::uint64_t seed = 0;
    std::vector<double> train_loss;  // one entry per iteration
    std::vector<EvalRecord> evals;
    double final_test_loss = 0.0;
    double final_test_accuracy = 0.0;
    double best_test_accuracy = 0.0;
    std::vector<double> final_params;
    std::vector<std::vector<double>> trajectory; // per-iteration snapshots (optional)
    double wall_seconds = 0.0;
};

struct AggregateMetrics {
    std::vector<RunMetrics> runs;
    double mean_final_accuracy = 0.0;
    double std_final_accuracy = 0.0; // sample standard deviation
    double wall_seconds = 0.0;
};

// A slice of a preprocessed dataset: the rows named by `indices`.
struct BatchView {
    const Preprocessed* data = nullptr;
    std::span<const std::size_t> indices;

    std::size_t size() const { return indices.size(); }
    std::span<const double> features(std::size_t i) const {
        return data->features.row(indices[i]);
    }
    int label(std::size_t i) const { return data->labels[indices[i]]; }
};

// Numerically stable softmax (max subtraction); output sums to 1.
std::vector<double> softmax(std::span<const double> scores);

// Categorical cross-entropy -sum y_j log(p_j), probabilities clamped below
// at 1e-12.
double cross_entropy(std::span<const double> probs, std::span<const double> onehot);

// Mean loss over the batch, accumulated in batch order. When `outputs` is
// non-null it receives the per-sample score vectors.
double loss_over_batch(const Network& net, std::span<const double> values, const BatchView& batch,
                       std::vector<std::vector<double>>* outputs = nullptr);

// Exact gradient of the mean batch loss via the parameter-shift rule:
// single-qubit rotation and U3 angles use the two-term rule (shifts +-pi/2,
// coefficient 1/2); controlled-rotation angles use the four-term rule
// (shifts +-pi/2 and +-3pi/2). Weight sharing sums the contributions of
// every gate instance reading a slot. `loss_out`, when non-null, receives
// the unshifted batch loss.
std::vector<double> parameter_shift_grad(const Network& net, std::span<const double> values,
                                         const BatchView& batch, double* loss_out = nullptr,
                                         int threads = 0);

// Central finite differences of the batch loss, (L(t+h)-L(t-h)) / 2h per
// coordinate. Independent check on the analytic paths.
std::vector<double> finite_diff_grad(const Network& net, std::span<const double> values,
                                     const BatchView& batch, double h, int threads = 0);

// Exact gradient via a reverse (adjoint) sweep over the gate program; one
// forward plus one backward pass per sample instead of shifted re-executions.
// Produces the same analytic derivative as parameter_shift_grad.
std::vector<double> adjoint_grad(const Network& net, std::span<const double> values,
                                 const BatchView& batch, double* loss_out = nullptr,
                                 int threads = 0);

// Shift constants of the two-term and four-term rules, injectable so the
// gradient self-check can prove it detects a corrupted rule.
struct ShiftRule {
    double two_term_shift;
    double two_term_coeff;
    double four_term_shift1;
    double four_term_coeff1;
    double four_term_shift2;
    double four_term_coeff2;

    static ShiftRule standard();
};

std::vector<double> parameter_shift_grad_with_rule(const Network& net,
                                                   std::span<const double> values,
                                                   const BatchView& batch, const ShiftRule& rule,
                                                   double* loss_out = nullptr, int threads = 0);

// One Nesterov momentum update. The gradient must already be evaluated at
// params + momentum * velocity; the step is
//   velocity' = momentum * velocity - lr * grad
//   params'   = params + velocity'
void nesterov_step(std::vector<double>& params, std::vector<double>& velocity,
                   std::span<const double> grad_at_lookahead, double lr, double momentum);

// Learning rate at an iteration under the given schedule.
double lr_at(LrSchedule schedule, double lr_initial, int iteration);

// Full-dataset evaluation: mean loss and argmax accuracy.
struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};
Evaluation evaluate(const Network& net, std::span<const double> values, const Preprocessed& data,
                    int threads = 0);

// One seeded training run: N(0,1) parameter init, with-replacement batch
// sampling (indices sorted within each batch), Nesterov updates with the
// configured schedule, and a test-set evaluation every eval_every
// iterations.
RunMetrics train_run(const Network& net, const TrainConfig& config, const Preprocessed& train,
                     const Preprocessed& test, std::uint64_t seed);

// Runs every seed in config.seeds and aggregates the final test accuracies
// (mean and sample standard deviation).
AggregateMetrics multi_run(const Network& net, const TrainConfig& config,
                           const Preprocessed& train, const Preprocessed& test);

// Per-class confusion counts, rows = true label, cols = predicted.
std::vector<std::vector<int>> confusion_matrix(const Network& net, std::span<const double> values,
                                               const Preprocessed& data, int threads = 0);

} // namespace qcnn
