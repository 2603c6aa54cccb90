#include "cml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cml/errors.hpp"
#include "cml/kernels.hpp"
#include "cml/rng.hpp"

namespace cml {

void TrainConfig::validate() const {
  model.validate();
  if (optimizer.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (optimizer.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (vrr_repeats < 1) throw ConfigError("vrr_repeats must be >= 1");
}

namespace {

void check_compatible(const ModelSpec& spec, const Dataset& ds, const char* what) {
  if (ds.modality_dims != spec.modality_dims || ds.num_classes != spec.num_classes)
    throw SpecError(std::string(what) + " does not match the model spec");
}

}  // namespace

MaskChain training_chain(std::size_t num_modalities, std::uint64_t seed, std::size_t epoch, std::size_t index) {
  Rng rng = derive_rng(seed, Stream::kTrainChain, {epoch, index});
  return sample_chain(num_modalities, rng);
}

RunResult train(const TrainConfig& config, const Dataset& train_set, const Dataset* validation_set) {
  config.validate();
  if (train_set.empty()) throw EmptyInputError("training set is empty");
  check_compatible(config.model, train_set, "training set");

  RunResult result;
  result.params = init_params(config.model, config.seed);
  ClassifierParams& params = result.params;
  AdamState adam = AdamState::for_parameters(params.values.size(), config.optimizer.learning_rate);
  adam.beta1 = config.optimizer.beta1;
  adam.beta2 = config.optimizer.beta2;
  adam.epsilon = config.optimizer.epsilon;

  const ObjectiveOptions options = config.objective();
  const std::size_t n = train_set.size();
  const std::size_t m_count = config.model.num_modalities();
  const std::size_t batch = config.optimizer.batch_size;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < config.optimizer.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = derive_rng(config.seed, Stream::kShuffle, {epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochStats stats;
    std::size_t correct = 0;
    for (std::size_t start = 0, b = 0; start < n; start += batch, ++b) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(batch, n - start));
      std::vector<MaskChain> chains;
      chains.reserve(idx.size());
      for (std::size_t i : idx) chains.push_back(training_chain(m_count, config.seed, epoch, i));

      BatchObjective obj;
      try {
        obj = batch_objective(params, train_set, idx, chains, options, config.exec);
      } catch (const NumericError& e) {
        throw DivergenceError(epoch, b, "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                            std::to_string(b) + ": " + e.what());
      }
      if (!std::isfinite(obj.total_loss) || !all_finite(obj.grad))
        throw DivergenceError(epoch, b, "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                            std::to_string(b) + " (loss " + std::to_string(obj.total_loss) + ")");
      const double inv = 1.0 / static_cast<double>(idx.size());
      for (double& g : obj.grad) g *= inv;
      adam_update(params.values, obj.grad, adam);
      if (!all_finite(params.values))
        throw DivergenceError(epoch, b, "non-finite parameters after epoch " + std::to_string(epoch) + ", batch " +
                                            std::to_string(b));
      stats.cls_loss += obj.classification_loss;
      stats.cml_loss += obj.regularizer_loss;
      correct += obj.full_correct;
    }
    stats.cls_loss /= static_cast<double>(n);
    stats.cml_loss /= static_cast<double>(n);
    stats.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    result.history.push_back(stats);
  }

  if (validation_set != nullptr) result.evaluation = evaluate(params, *validation_set, config);
  return result;
}

Evaluation evaluate(const ClassifierParams& params, const Dataset& test_set, const TrainConfig& config) {
  if (test_set.empty()) throw EmptyInputError("evaluation set is empty");
  check_compatible(params.spec, test_set, "evaluation set");
  const std::size_t m_count = params.spec.num_modalities();

  const std::vector<Prediction> preds = predict_all(params, test_set, SubsetMask::full(m_count), config.exec);
  std::vector<ScoredPrediction> scored;
  scored.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) scored.push_back(score(preds[i], test_set.samples[i].label));

  VrrEvaluation vrr = evaluate_vrr(params, test_set, config.seed, config.vrr_mode, config.vrr_repeats, config.exec);

  std::map<std::size_t, double> conf_sum;
  std::map<std::size_t, std::size_t> conf_count;
  if (m_count <= kMaxExhaustiveModalities) {
    std::vector<SubsetMask> masks;
    for (std::uint64_t bits = 1; bits < (std::uint64_t{1} << m_count); ++bits) {
      std::vector<std::size_t> members;
      for (std::size_t m = 0; m < m_count; ++m)
        if (bits >> m & 1u) members.push_back(m);
      masks.emplace_back(members, m_count);
    }
    const auto conf = subset_confidences(params, test_set, masks, config.exec);
    for (const auto& row : conf)
      for (std::size_t j = 0; j < masks.size(); ++j) {
        conf_sum[masks[j].size()] += row[j];
        ++conf_count[masks[j].size()];
      }
  } else {
    for (const RankingRecord& r : vrr.records) {
      conf_sum[r.s_mask.size()] += r.conf_s;
      ++conf_count[r.s_mask.size()];
      if (r.t_mask.size() == 1) {
        conf_sum[1] += r.conf_t;
        ++conf_count[1];
      }
    }
  }
  std::map<std::size_t, double> by_size;
  for (const auto& [size, total] : conf_sum) by_size[size] = total / static_cast<double>(conf_count[size]);

  double conf_full = 0.0;
  for (const Prediction& p : preds) conf_full += p.confidence;
  conf_full /= static_cast<double>(preds.size());
  by_size[m_count] = conf_full;

  EvalArtifacts art;
  art.num_samples = test_set.size();
  art.accuracy_pct = accuracy(scored);
  art.mean_nll = mean_nll(scored);
  art.aurc = aurc(scored);
  art.e_aurc = e_aurc(scored);
  art.vrr = vrr.vrr;
  art.mean_confidence_full = conf_full;
  art.mean_confidence_by_subset_size = by_size;

  Evaluation ev;
  ev.report = build_report(art);
  ev.records = std::move(vrr.records);
  ev.violations_by_removed = std::move(vrr.violations_by_removed);
  return ev;
}

std::vector<double> default_lambda_grid() { return {1, 5, 10, 20, 30, 50, 100}; }

LambdaSweepResult lambda_sweep(const TrainConfig& base, std::span<const double> grid, const Dataset& train_set,
                               const Dataset& validation_set, std::size_t jobs) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (double l : grid)
    if (!(l >= 0.0)) throw ConfigError("lambda grid values must be >= 0");

  LambdaSweepResult result;
  result.rows.resize(grid.size());
  const auto count = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max<std::size_t>(jobs, 1))
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    LambdaRow& row = result.rows[static_cast<std::size_t>(i)];
    row.lambda = grid[static_cast<std::size_t>(i)];
    TrainConfig cfg = base;
    cfg.lambda = row.lambda;
    try {
      const RunResult run = train(cfg, train_set, &validation_set);
      row.val_acc = run.evaluation->report.accuracy_pct;
      row.val_vrr = run.evaluation->report.vrr;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  }

  result.best_lambda = result.rows[best_lambda_row(result.rows)].lambda;
  return result;
}

std::size_t best_lambda_row(std::span<const LambdaRow> rows) {
  const LambdaRow* best = nullptr;
  for (const LambdaRow& row : rows) {
    if (row.failed) continue;
    if (best == nullptr || row.val_acc > best->val_acc ||
        (row.val_acc == best->val_acc &&
         (row.val_vrr < best->val_vrr || (row.val_vrr == best->val_vrr && row.lambda < best->lambda))))
      best = &row;
  }
  if (best == nullptr)
    throw Error("lambda sweep: every run failed (first error: " + (rows.empty() ? "none" : rows.front().error) + ")");
  return static_cast<std::size_t>(best - rows.data());
}

std::vector<double> default_noise_grid() { return {0.1, 0.2, 0.3, 0.5}; }

std::vector<std::vector<std::size_t>> default_noise_targets(std::size_t num_modalities) {
  std::vector<std::vector<std::size_t>> sets;
  std::vector<std::size_t> all;
  for (std::size_t m = 0; m < num_modalities; ++m) {
    sets.push_back({m});
    all.push_back(m);
  }
  sets.push_back(all);
  return sets;
}

std::vector<NoiseRow> noise_sweep(const ClassifierParams& baseline, const ClassifierParams& cml, const Dataset& test_set,
                                  std::span<const double> epsilons,
                                  std::span<const std::vector<std::size_t>> target_sets, std::uint64_t seed,
                                  bool epsilon_is_std, Exec exec) {
  if (!(baseline.spec == cml.spec)) throw SpecError("noise sweep: baseline and CML models have different specs");
  check_compatible(baseline.spec, test_set, "noise sweep test set");
  if (test_set.empty()) throw EmptyInputError("noise sweep on an empty test set");
  const SubsetMask full = SubsetMask::full(baseline.spec.num_modalities());

  auto acc = [&](const ClassifierParams& params, const Dataset& ds) {
    const auto preds = predict_all(params, ds, full, exec);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].predicted_class == ds.samples[i].label;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.size());
  };

  std::vector<NoiseRow> rows;
  for (double eps : epsilons)
    for (const auto& targets : target_sets) {
      const Dataset noisy = corrupt_gaussian(test_set, {targets, eps, seed, epsilon_is_std});
      NoiseRow row{eps, targets, acc(baseline, noisy), acc(cml, noisy), 0.0};
      row.delta = row.acc_cml - row.acc_baseline;
      rows.push_back(std::move(row));
    }
  return rows;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, std);
  return buf;
}

MetricSummary summarize(const std::string& name, std::span<const double> values) {
  MetricSummary s;
  s.name = name;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

ReplicateResult replicate(const TrainConfig& config, std::size_t num_seeds, const Dataset& train_set,
                          const Dataset& test_set, std::size_t jobs) {
  if (num_seeds < 2) throw ConfigError("replicate needs at least 2 seeds");
  std::vector<std::optional<MetricsReport>> reports(num_seeds);
  std::vector<std::string> errors(num_seeds);
  const auto count = static_cast<std::ptrdiff_t>(num_seeds);
#pragma omp parallel for schedule(dynamic) num_threads(std::max<std::size_t>(jobs, 1))
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    TrainConfig cfg = config;
    cfg.seed = config.seed + static_cast<std::uint64_t>(i);
    try {
      const RunResult run = train(cfg, train_set);
      reports[static_cast<std::size_t>(i)] = evaluate(run.params, test_set, cfg).report;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }

  ReplicateResult out;
  for (std::size_t i = 0; i < num_seeds; ++i) {
    if (reports[i]) {
      out.reports.push_back(*reports[i]);
    } else {
      ++out.failed;
      out.errors.push_back("seed " + std::to_string(config.seed + i) + ": " + errors[i]);
    }
  }
  auto collect = [&](const char* name, auto field) {
    std::vector<double> values;
    for (const MetricsReport& r : out.reports) values.push_back(r.*field);
    out.metrics.push_back(summarize(name, values));
  };
  collect("accuracy_pct", &MetricsReport::accuracy_pct);
  collect("nll_scaled", &MetricsReport::nll_scaled);
  collect("aurc_scaled", &MetricsReport::aurc_scaled);
  collect("e_aurc_scaled", &MetricsReport::e_aurc_scaled);
  collect("vrr_pct", &MetricsReport::vrr_pct);
  collect("mean_confidence_full", &MetricsReport::mean_confidence_full);
  return out;
}

}  // namespace cml
