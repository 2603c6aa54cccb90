#include "cml/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "cml/errors.hpp"
#include "cml/metrics.hpp"
#include "cml/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cml {

namespace fs = std::filesystem;

namespace {

std::string output_dir(const CliOptions& options, const ExperimentConfig& config) {
  const std::string dir = options.out_dir.empty() ? config.output_dir : options.out_dir;
  if (dir.empty()) throw ConfigError("no output directory: set output_dir in the config or pass --out");
  return dir;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    nlohmann::json j;
    f >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

TrainConfig train_config_for(const ExperimentConfig& config, const Dataset& data) {
  TrainConfig tc = config.train;
  tc.model.modality_dims = data.modality_dims;
  tc.model.num_classes = data.num_classes;
  return tc;
}

std::string join_indices(const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? "+" : "") + std::to_string(idx[i]);
  return s;
}

}  // namespace

ExperimentConfig resolve_config(const CliOptions& options) {
  if (options.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig config = load_experiment_config(options.config_path);
  if (const char* env = std::getenv("CML_SEED"); env != nullptr && *env != '\0') {
    try {
      config.train.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("CML_SEED is not an integer: ") + env);
    }
  }
  if (options.seed) config.train.seed = *options.seed;
  return config;
}

RawSplit load_and_split(const ExperimentConfig& config) {
  Dataset data;
  if (config.synthetic) {
    data = generate_synthetic(*config.synthetic);
  } else {
    if (!fs::exists(config.manifest)) throw IoError("dataset manifest not found: " + config.manifest);
    data = load_csv_dataset(config.manifest);
  }
  data.validate();
  SplitResult s = split(data, config.split.train_fraction, config.split.seed);
  return {std::move(s.train), std::move(s.test)};
}

int cmd_generate(const CliOptions& options, std::ostream& out, std::ostream&) {
  const ExperimentConfig config = resolve_config(options);
  if (!config.synthetic) throw ConfigError("generate needs data.synthetic in the config");
  const Dataset data = generate_synthetic(*config.synthetic);
  const std::string manifest = write_csv_dataset(data, output_dir(options, config));
  out << "wrote " << manifest << '\n';
  const auto counts = data.class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k) out << "class " << k << ": " << counts[k] << '\n';
  return 0;
}

int cmd_train(const CliOptions& options, std::ostream& out, std::ostream&) {
  const ExperimentConfig config = resolve_config(options);
  const fs::path dir = output_dir(options, config);
  RawSplit raw = load_and_split(config);
  ensure_dir(dir);

  // Evaluate on the test split exactly as persisted, so `compare` can
  // reproduce these numbers from the run directory.
  const Dataset test_raw = load_csv_dataset(write_csv_dataset(raw.test, (dir / "test_split").string()));
  const Standardizer standardizer = Standardizer::fit(raw.train);
  const Dataset train_set = standardizer.apply(raw.train);
  const Dataset test_set = standardizer.apply(test_raw);

  const TrainConfig tc = train_config_for(config, train_set);
  ExperimentConfig snapshot = config;
  snapshot.train = tc;
  write_text(dir / "config.json", to_json(snapshot).dump(2) + "\n");
  write_text(dir / "standardizer.json", standardizer.to_json().dump() + "\n");

  const RunResult run = train(tc, train_set);
  const Evaluation ev = evaluate(run.params, test_set, tc);

  save_checkpoint((dir / "model.ckpt").string(), run.params);
  std::string history = "epoch,cls_loss,cml_loss,train_acc\n";
  for (std::size_t e = 0; e < run.history.size(); ++e)
    history += std::to_string(e + 1) + ',' + format_real(run.history[e].cls_loss) + ',' +
               format_real(run.history[e].cml_loss) + ',' + format_real(run.history[e].train_acc) + '\n';
  write_text(dir / "history.csv", history);
  write_records_csv((dir / "records.csv").string(), ev.records);
  std::string attribution = "removed_modality,violations\n";
  for (std::size_t m = 0; m < ev.violations_by_removed.size(); ++m)
    attribution += std::to_string(m) + ',' + std::to_string(ev.violations_by_removed[m]) + '\n';
  write_text(dir / "attribution.csv", attribution);
  write_text(dir / "metrics.json", to_json(ev.report).dump(2) + "\n");

  const MetricsReport& r = ev.report;
  out << "acc=" << fixed2(r.accuracy_pct) << " vrr=" << fixed2(r.vrr_pct) << " nll=" << fixed2(r.nll_scaled)
      << " aurc=" << fixed2(r.aurc_scaled) << '\n';
  return 0;
}

int cmd_compare(const CliOptions& options, std::ostream& out, std::ostream&) {
  const ExperimentConfig config = resolve_config(options);
  const fs::path base_run = options.baseline_run.empty() ? config.compare.baseline_run : options.baseline_run;
  const fs::path cml_run = options.cml_run.empty() ? config.compare.cml_run : options.cml_run;
  if (base_run.empty() || cml_run.empty()) throw ConfigError("compare needs baseline and CML run directories");
  std::string manifest = options.test_manifest.empty() ? config.compare.test_manifest : options.test_manifest;
  if (manifest.empty()) manifest = (base_run / "test_split" / "manifest.json").string();

  const ClassifierParams base = load_checkpoint((base_run / "model.ckpt").string());
  const ClassifierParams cml = load_checkpoint((cml_run / "model.ckpt").string());
  if (!(base.spec == cml.spec)) throw SpecError("runs use different model specs");
  const nlohmann::json base_std = read_json(base_run / "standardizer.json");
  if (base_std != read_json(cml_run / "standardizer.json"))
    throw SpecError("runs were trained on differently standardized data");
  const Standardizer standardizer = Standardizer::from_json(base_std);
  const Dataset test_set = standardizer.apply(load_csv_dataset(manifest));

  // Both models are scored with the baseline's evaluation settings so the
  // VRR chains are identical.
  const nlohmann::json snap = read_json(base_run / "config.json");
  TrainConfig tc = train_config_from_json(snap.value("train", nlohmann::json::object()),
                                          snap.value("model", nlohmann::json::object()));
  tc.model = base.spec;
  const Evaluation eb = evaluate(base, test_set, tc);
  const Evaluation ec = evaluate(cml, test_set, tc);
  const std::vector<SubsetMask> full{SubsetMask::full(base.spec.num_modalities())};
  const double shift = mean_abs_conf_shift(base, cml, test_set, full);

  const fs::path dir = output_dir(options, config);
  ensure_dir(dir);
  nlohmann::json cmp = {{"vrr_delta_pct", ec.report.vrr_pct - eb.report.vrr_pct},
                        {"accuracy_delta_pct", ec.report.accuracy_pct - eb.report.accuracy_pct},
                        {"mean_abs_conf_shift_full", shift},
                        {"baseline", to_json(eb.report)},
                        {"cml", to_json(ec.report)}};
  write_text(dir / "comparison.json", cmp.dump(2) + "\n");

  std::string curve = "subset_size,conf_baseline,conf_cml,delta\n";
  for (std::size_t size = 1; size <= base.spec.num_modalities(); ++size) {
    const double a = eb.report.mean_confidence_by_subset_size.at(size);
    const double b = ec.report.mean_confidence_by_subset_size.at(size);
    curve += std::to_string(size) + ',' + format_real(a) + ',' + format_real(b) + ',' + format_real(b - a) + '\n';
  }
  write_text(dir / "confidence_by_size.csv", curve);

  out << "vrr_delta=" << fixed2(cmp["vrr_delta_pct"].get<double>())
      << " acc_delta=" << fixed2(cmp["accuracy_delta_pct"].get<double>()) << " conf_shift=" << format_real(shift)
      << '\n';
  return 0;
}

int cmd_sweep(const CliOptions& options, std::ostream& out, std::ostream&) {
  const ExperimentConfig config = resolve_config(options);
  if (options.sweep_kind != "lambda" && options.sweep_kind != "noise")
    throw ConfigError("sweep --kind must be 'lambda' or 'noise'");
  const fs::path dir = output_dir(options, config);
  const RawSplit raw = load_and_split(config);

  if (options.sweep_kind == "lambda") {
    if (config.sweep.lambdas.empty()) throw ConfigError("sweep.lambdas is empty");
    SplitResult inner = split(raw.train, 1.0 - config.split.validation_fraction, config.split.seed + 1);
    const Standardizer st = Standardizer::fit(inner.train);
    const Dataset fit_set = st.apply(inner.train);
    const Dataset val_set = st.apply(inner.test);
    const LambdaSweepResult res =
        lambda_sweep(train_config_for(config, fit_set), config.sweep.lambdas, fit_set, val_set, options.jobs);
    std::string csv = "lambda,val_acc,val_vrr\n";
    for (const LambdaRow& row : res.rows) {
      if (row.failed) csv += format_real(row.lambda) + ",failed,failed\n";
      else csv += format_real(row.lambda) + ',' + format_real(row.val_acc) + ',' + format_real(row.val_vrr) + '\n';
    }
    ensure_dir(dir);
    write_text(dir / "lambda_sweep.csv", csv);
    out << "best_lambda=" << format_real(res.best_lambda) << '\n';
    return 0;
  }

  if (config.sweep.epsilons.empty()) throw ConfigError("sweep.epsilons is empty");
  const Standardizer st = Standardizer::fit(raw.train);
  const Dataset train_set = st.apply(raw.train);
  const Dataset test_set = st.apply(raw.test);
  TrainConfig cml_cfg = train_config_for(config, train_set);
  TrainConfig base_cfg = cml_cfg;
  base_cfg.lambda = 0.0;
  const RunResult base = train(base_cfg, train_set);
  const RunResult cml = train(cml_cfg, train_set);
  const auto targets = config.sweep.noise_targets.empty() ? default_noise_targets(train_set.num_modalities())
                                                          : config.sweep.noise_targets;
  const auto rows = noise_sweep(base.params, cml.params, test_set, config.sweep.epsilons, targets,
                                config.sweep.noise_seed, config.sweep.epsilon_is_std);
  std::string csv = "param,acc_baseline,acc_cml,delta\n";
  for (const NoiseRow& row : rows)
    csv += "eps=" + format_real(row.epsilon) + "/on=" + join_indices(row.targets) + ',' + format_real(row.acc_baseline) +
           ',' + format_real(row.acc_cml) + ',' + format_real(row.delta) + '\n';
  ensure_dir(dir);
  write_text(dir / "noise_sweep.csv", csv);
  out << "rows=" << rows.size() << '\n';
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Confidence-ranking calibration for multimodal classifiers"};
  app.require_subcommand(1);
  CliOptions options;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", options.out_dir, "output directory (overrides config.output_dir)");
    sub->add_option("--jobs", options.jobs, "parallel workers")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "training seed (overrides CML_SEED and config)");
  };
  CLI::App* gen = app.add_subcommand("generate", "write a synthetic dataset as manifest + CSV");
  CLI::App* trn = app.add_subcommand("train", "train, evaluate and write a run directory");
  CLI::App* cmp = app.add_subcommand("compare", "compare a baseline run with a CML run");
  CLI::App* swp = app.add_subcommand("sweep", "lambda or noise sweep");
  for (CLI::App* sub : {gen, trn, cmp, swp}) add_common(sub);
  cmp->add_option("--baseline", options.baseline_run, "baseline run directory");
  cmp->add_option("--cml", options.cml_run, "CML run directory");
  cmp->add_option("--manifest", options.test_manifest, "test dataset manifest");
  swp->add_option("--kind", options.sweep_kind, "lambda | noise")->required()->check(CLI::IsMember({"lambda", "noise"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  for (CLI::App* sub : {gen, trn, cmp, swp})
    if (sub->parsed() && sub->count("--seed") > 0) options.seed = seed;

#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(options.jobs));
#endif

  try {
    if (gen->parsed()) return cmd_generate(options, out, err);
    if (trn->parsed()) return cmd_train(options, out, err);
    if (cmp->parsed()) return cmd_compare(options, out, err);
    return cmd_sweep(options, out, err);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " [epoch " << e.epoch() << ", batch " << e.batch() << "]\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace cml
