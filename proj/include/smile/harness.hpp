#pragma once

#include "smile/bundle.hpp"
#include "smile/checkpoint_io.hpp"
#include "smile/model.hpp"
#include "smile/subspace.hpp"
#include "smile/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace smile {

enum class TaskKind { Regression, Classification };

const char* to_string(TaskKind kind) noexcept;

/// A synthetic downstream task. Inputs are mean + scale · basis · z with
/// z ~ N(0, I); targets come from a teacher model stored alongside.
struct TaskSpec {
    std::size_t task_id = 0;
    TaskKind kind = TaskKind::Classification;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::string teacher; // store file, relative to tasks.json
    std::string expert;  // fine-tuned model file, relative to tasks.json
    DenseVector mean;
    DenseMatrix basis;   // input_dim × d, orthonormal columns
    double scale = 1.0;
    std::uint64_t seed = 0;
};

/// n inputs from the task's stream; identical (task, stream_seed) give identical samples.
std::vector<DenseVector> sample_inputs(const TaskSpec& task, std::size_t n, std::uint64_t stream_seed);

/// Gaussian init with standard deviation 1/√in_dim for weights and biases.
TensorStore make_pretrained(const ModelSpec& spec, std::uint64_t seed);

struct FinetuneOptions {
    std::size_t steps = 1000;
    double lr = 0.05;
    std::size_t batch = 32;
    bool freeze_bias = false;
    std::uint64_t seed = 7;
};

/// Plain mini-batch SGD. Regression minimizes ½‖y − teacher(x)‖², classification
/// the softmax cross-entropy against argmax teacher(x).
TensorStore finetune(const ModelSpec& spec, const TensorStore& base, const TaskSpec& task, const ForwardFn& teacher,
                     const FinetuneOptions& options);

/// Mean training loss of `model` on a fixed batch; used for convergence checks.
double task_loss(const ForwardFn& model, const TaskSpec& task, const ForwardFn& teacher, std::size_t n,
                 std::uint64_t stream_seed);

struct TaskScore {
    std::size_t task_id = 0;
    TaskKind kind = TaskKind::Classification;
    double metric = 0.0; // accuracy, or 1/(1 + MSE) for regression
};

struct EvalReport {
    std::string method;
    std::vector<TaskScore> per_task;
    double normalized_param_count = 1.0;

    double mean() const;
    std::string to_json() const;
};

/// Metric of `model` on held-out samples of one task.
double evaluate_task(const ForwardFn& model, const TaskSpec& task, const ForwardFn& teacher, std::size_t n_samples,
                     std::uint64_t seed);

/// Evaluates models[i] on tasks[i]; a single model is reused for every task.
EvalReport evaluate(const std::vector<ForwardFn>& models, const std::vector<TaskSpec>& tasks,
                    const std::vector<ForwardFn>& teachers, std::size_t n_samples, std::uint64_t seed,
                    std::string method, double normalized_param_count);

struct RouterAccuracy {
    std::vector<std::string> layers;
    std::vector<std::vector<double>> per_layer_task; // [layer][task]
    std::vector<double> per_layer;
    double mean = 0.0;
};

/// Fraction of held-out inputs whose top-1 expert equals the generating task,
/// per SMILE layer. Requires top_k = 1 and experts ordered like tasks.
RouterAccuracy router_accuracy(const SmileModel& model, const std::vector<TaskSpec>& tasks, std::size_t n_samples,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Task suites and fixtures

/// Everything needed to fuse and evaluate: architecture, base, per-task
/// teachers and fine-tuned experts.
struct TaskSuite {
    ModelSpec model;
    TensorStore base;
    std::vector<TaskSpec> tasks;
    std::vector<TensorStore> teachers;
    std::vector<TensorStore> experts;

    std::vector<ForwardFn> teacher_fns() const;
    DenseModel base_model() const { return DenseModel(model, base); }
    DenseModel expert_model(std::size_t i) const { return DenseModel(model, experts.at(i)); }
};

/// Writes model.json, base.safetensors, expert_<i>.safetensors,
/// teacher_<i>.safetensors (when distinct from the expert) and tasks.json.
void write_suite(const TaskSuite& suite, const std::filesystem::path& dir, Dtype dtype = Dtype::F64);
TaskSuite read_suite(const std::filesystem::path& tasks_json);
std::string tasks_to_json(const TaskSuite& suite, const std::vector<std::string>& teacher_files,
                          const std::vector<std::string>& expert_files);

/// Base plus hand-built low-rank task deltas on an MLP. Task t reads inputs
/// from its own subspace; its first-layer delta has right singular vectors in
/// that subspace and writes into hidden block t, where the second-layer delta
/// reads. Each expert is its task's teacher.
struct AnalyticFixtureConfig {
    std::size_t input_dim = 64;
    std::size_t hidden_dim = 64;
    std::size_t output_dim = 16;
    std::size_t tasks = 4;
    std::size_t subspace_dim = 8;
    std::size_t delta_rank = 8;
    double input_scale = 8.0;
    double delta_scale = 3.0;
    double spectrum_decay = 0.15; // σ_{j+1} = decay · σ_j
    double bias_shift = 40.0;    // first-layer bias delta on the task's hidden block
    double overlap = 0.0;        // 0: orthogonal input subspaces; 1: identical
    TaskKind kind = TaskKind::Classification;
    std::uint64_t seed = 2024;
};

TaskSuite make_analytic_suite(const AnalyticFixtureConfig& cfg);

enum class SubspacePlacement {
    Minor,  // task inputs and planted changes in the base's trailing singular directions
    Random, // task inputs in random subspaces
};

/// Teachers are the base with planted low-rank changes; experts are trained
/// from the base by SGD against them.
struct SgdFixtureConfig {
    std::size_t input_dim = 64;
    std::size_t hidden_dim = 64;
    std::size_t output_dim = 16;
    std::size_t tasks = 4;
    std::size_t subspace_dim = 8;
    double input_scale = 1.0;
    double planted_scale = 2.0;
    SubspacePlacement placement = SubspacePlacement::Minor;
    TaskKind kind = TaskKind::Regression;
    FinetuneOptions train{};
    std::uint64_t seed = 99;
    std::size_t jobs = 1;
};

TaskSuite make_sgd_suite(const SgdFixtureConfig& cfg);

// ---------------------------------------------------------------------------
// Fused and merged models over a suite

/// Layer-wise weight averaging (lambda < 0) or task arithmetic with coefficient lambda.
DenseModel merge_suite(const TaskSuite& suite, double lambda);

/// Every affine layer's weight becomes W + P ΔW P for the zone, using the
/// base weight's own full SVD; biases stay pre-trained.
DenseModel project_expert(const TaskSuite& suite, std::size_t task, Zone zone);

SmileModel fuse_suite(const TaskSuite& suite, const SmileConfig& cfg, const LayerSelector& selector = {},
                      std::size_t jobs = 1);

struct SweepRow {
    std::size_t k = 0;
    std::size_t k_gate = 0;
    std::size_t top_k = 0;
    double mean_score = 0.0;
    double normalized_params = 0.0;    // from the stored bundle
    std::uint64_t added_params = 0;     // formula, summed over upscaled layers
    std::uint64_t activated_params = 0; // formula, summed over upscaled layers
};

std::vector<SweepRow> sweep(const TaskSuite& suite, const std::vector<std::size_t>& ks,
                            const std::vector<std::size_t>& k_gates, const std::vector<std::size_t>& top_ks,
                            std::size_t n_samples, std::uint64_t seed, std::size_t jobs = 1);
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

} // namespace smile
