#pragma once

// Training loop for the calibrated multimodal classifier, evaluation, and the
// experiment protocols built on top of it (lambda sweep, noise sweep,
// multi-seed replication).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cml/calibration.hpp"
#include "cml/data.hpp"
#include "cml/exec.hpp"
#include "cml/metrics.hpp"
#include "cml/model.hpp"

namespace cml {

struct OptimizerSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
};

struct TrainConfig {
  ModelSpec model;
  OptimizerSettings optimizer;
  double lambda = 0.0;
  RegularizerKind variant = RegularizerKind::kHinge;
  bool skip_on_wrong_full = true;
  bool detach_superset = false;
  std::uint64_t seed = 0;
  VrrMode vrr_mode = VrrMode::kSampled;
  std::size_t vrr_repeats = 1;
  Exec exec = Exec::kParallel;

  // Throws ConfigError (epochs, batch size, lambda, repeats) or SpecError.
  void validate() const;
  ObjectiveOptions objective() const { return {variant, lambda, skip_on_wrong_full, detach_superset}; }
};

struct EpochStats {
  double cls_loss = 0.0;   // mean per-sample classification loss
  double cml_loss = 0.0;   // mean per-sample unweighted regularizer
  double train_acc = 0.0;  // percent, full-modality predictions seen during the epoch
};

struct Evaluation {
  MetricsReport report;
  std::vector<RankingRecord> records;
  std::vector<std::size_t> violations_by_removed;
};

struct RunResult {
  ClassifierParams params;
  std::vector<EpochStats> history;
  // Filled when a validation set was supplied to train().
  std::optional<Evaluation> evaluation;
};

// Chain drawn for training sample `index` in `epoch`.
MaskChain training_chain(std::size_t num_modalities, std::uint64_t seed, std::size_t epoch, std::size_t index);

// Throws DivergenceError on a non-finite loss, naming epoch and batch.
RunResult train(const TrainConfig& config, const Dataset& train_set, const Dataset* validation_set = nullptr);

// Metrics on full-modality predictions, VRR per config, and mean confidence
// per subset size (all subsets for M <= 5, else the evaluation chains).
Evaluation evaluate(const ClassifierParams& params, const Dataset& test_set, const TrainConfig& config);

struct LambdaRow {
  double lambda = 0.0;
  bool failed = false;
  std::string error;
  double val_acc = 0.0;  // percent
  double val_vrr = 0.0;  // fraction
};

struct LambdaSweepResult {
  double best_lambda = 0.0;
  std::vector<LambdaRow> rows;
};

std::vector<double> default_lambda_grid();

// One run per lambda with the base seed. Best = highest validation accuracy,
// then lower validation VRR, then smaller lambda. Runs are independent and
// may execute `jobs` at a time.
// Index of the best non-failed row by the rule above; throws Error when every
// row failed.
std::size_t best_lambda_row(std::span<const LambdaRow> rows);

LambdaSweepResult lambda_sweep(const TrainConfig& base, std::span<const double> grid, const Dataset& train_set,
                               const Dataset& validation_set, std::size_t jobs = 1);

struct NoiseRow {
  double epsilon = 0.0;
  std::vector<std::size_t> targets;
  double acc_baseline = 0.0;
  double acc_cml = 0.0;
  double delta = 0.0;  // acc_cml - acc_baseline
  bool operator==(const NoiseRow&) const = default;
};

std::vector<double> default_noise_grid();
// Each single modality, then all modalities together.
std::vector<std::vector<std::size_t>> default_noise_targets(std::size_t num_modalities);

// One row per (epsilon, target set), epsilon-major. Both models see the same
// corrupted copy.
std::vector<NoiseRow> noise_sweep(const ClassifierParams& baseline, const ClassifierParams& cml, const Dataset& test_set,
                                  std::span<const double> epsilons,
                                  std::span<const std::vector<std::size_t>> target_sets, std::uint64_t seed,
                                  bool epsilon_is_std = false, Exec exec = Exec::kParallel);

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  std::size_t count = 0;
};

struct ReplicateResult {
  std::vector<MetricSummary> metrics;
  std::vector<MetricsReport> reports;  // successful runs, seed order
  std::size_t failed = 0;
  std::vector<std::string> errors;
};

// "m.mm±s.ss"
std::string format_mean_std(double mean, double std);
MetricSummary summarize(const std::string& name, std::span<const double> values);

// Trains and evaluates with seeds seed+0 .. seed+n-1. Throws ConfigError for
// num_seeds < 2.
ReplicateResult replicate(const TrainConfig& config, std::size_t num_seeds, const Dataset& train_set,
                          const Dataset& test_set, std::size_t jobs = 1);

}  // namespace cml
