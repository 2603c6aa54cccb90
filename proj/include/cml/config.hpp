#pragma once

// JSON experiment configuration shared by every CLI subcommand.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cml/data.hpp"
#include "cml/trainer.hpp"
#include "json.hpp"

namespace cml {

struct SplitSettings {
  double train_fraction = 0.8;
  // Share of the training split held out for lambda selection.
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SweepSettings {
  std::vector<double> lambdas = default_lambda_grid();
  std::vector<double> epsilons = default_noise_grid();
  std::vector<std::vector<std::size_t>> noise_targets;  // empty: default_noise_targets(M)
  std::uint64_t noise_seed = 0;
  bool epsilon_is_std = false;
};

struct CompareSettings {
  std::string baseline_run;
  std::string cml_run;
  std::string test_manifest;  // empty: the baseline run's saved test split
};

struct ExperimentConfig {
  // Exactly one data source.
  std::optional<SyntheticSpec> synthetic;
  std::string manifest;
  SplitSettings split;
  TrainConfig train;  // model.modality_dims / num_classes are filled from the data
  SweepSettings sweep;
  CompareSettings compare;
  std::string output_dir;
};

// Relative paths inside the config resolve against `base_dir`. Throws
// ConfigError on any schema violation.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
// Reads the "train" block; model hidden/latent dims come from the "model" block.
TrainConfig train_config_from_json(const nlohmann::json& train, const nlohmann::json& model);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace cml
