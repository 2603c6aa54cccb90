#include "cml/config.hpp"

#include <filesystem>
#include <fstream>

#include "cml/errors.hpp"

namespace cml {

namespace fs = std::filesystem;

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

}  // namespace

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"num_classes", s.num_classes},           {"modality_dims", s.modality_dims},
          {"samples_per_class", s.samples_per_class}, {"class_separation", s.class_separation},
          {"noise_std", s.noise_std},                 {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.modality_dims = j.at("modality_dims").get<std::vector<std::size_t>>();
    const auto& spc = j.at("samples_per_class");
    s.samples_per_class = spc.is_array() ? spc.get<std::vector<std::size_t>>()
                                         : std::vector<std::size_t>(s.num_classes, spc.get<std::size_t>());
    s.class_separation = j.at("class_separation").get<std::vector<double>>();
    const auto& ns = j.contains("noise_std") ? j.at("noise_std") : nlohmann::json(1.0);
    s.noise_std = ns.is_array() ? ns.get<std::vector<double>>()
                                : std::vector<double>(s.modality_dims.size(), ns.get<double>());
    s.seed = get_or<std::uint64_t>(j, "seed", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  try {
    s.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.optimizer.learning_rate},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"epsilon", c.optimizer.epsilon},
          {"epochs", c.optimizer.epochs},
          {"batch_size", c.optimizer.batch_size},
          {"lambda", c.lambda},
          {"regularizer", to_string(c.variant)},
          {"skip_on_wrong_full", c.skip_on_wrong_full},
          {"detach_superset", c.detach_superset},
          {"seed", c.seed},
          {"vrr_mode", to_string(c.vrr_mode)},
          {"vrr_repeats", c.vrr_repeats},
          {"hidden_dim", c.model.hidden_dim},
          {"latent_dim", c.model.latent_dim},
          {"head_hidden_dim", c.model.head_hidden_dim}};
}

TrainConfig train_config_from_json(const nlohmann::json& t, const nlohmann::json& model) {
  TrainConfig c;
  c.optimizer.learning_rate = get_or(t, "learning_rate", c.optimizer.learning_rate);
  c.optimizer.beta1 = get_or(t, "beta1", c.optimizer.beta1);
  c.optimizer.beta2 = get_or(t, "beta2", c.optimizer.beta2);
  c.optimizer.epsilon = get_or(t, "epsilon", c.optimizer.epsilon);
  c.optimizer.epochs = get_or(t, "epochs", c.optimizer.epochs);
  c.optimizer.batch_size = get_or(t, "batch_size", c.optimizer.batch_size);
  c.lambda = get_or(t, "lambda", c.lambda);
  c.variant = parse_regularizer(get_or<std::string>(t, "regularizer", to_string(c.variant)));
  c.skip_on_wrong_full = get_or(t, "skip_on_wrong_full", c.skip_on_wrong_full);
  c.detach_superset = get_or(t, "detach_superset", c.detach_superset);
  c.seed = get_or(t, "seed", c.seed);
  c.vrr_mode = parse_vrr_mode(get_or<std::string>(t, "vrr_mode", to_string(c.vrr_mode)));
  c.vrr_repeats = get_or(t, "vrr_repeats", c.vrr_repeats);
  // Older snapshots keep the widths next to the optimizer settings.
  c.model.hidden_dim = get_or(model, "hidden_dim", get_or(t, "hidden_dim", c.model.hidden_dim));
  c.model.latent_dim = get_or(model, "latent_dim", get_or(t, "latent_dim", c.model.latent_dim));
  c.model.head_hidden_dim = get_or(model, "head_hidden_dim", get_or(t, "head_hidden_dim", c.model.head_hidden_dim));
  if (c.optimizer.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (c.optimizer.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (c.lambda < 0) throw ConfigError("train.lambda must be >= 0");
  return c;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  const nlohmann::json data = j.value("data", nlohmann::json::object());
  const bool has_synth = data.contains("synthetic");
  const bool has_manifest = data.contains("manifest");
  if (has_synth == has_manifest) throw ConfigError("config.data needs exactly one of 'synthetic' or 'manifest'");
  if (has_synth) c.synthetic = synthetic_spec_from_json(data.at("synthetic"));
  if (has_manifest) c.manifest = resolve(base_dir, get_or<std::string>(data, "manifest", ""));

  const nlohmann::json split = j.value("split", nlohmann::json::object());
  c.split.train_fraction = get_or(split, "train_fraction", c.split.train_fraction);
  c.split.validation_fraction = get_or(split, "validation_fraction", c.split.validation_fraction);
  c.split.seed = get_or(split, "seed", c.split.seed);

  c.train = train_config_from_json(j.value("train", nlohmann::json::object()),
                                   j.value("model", nlohmann::json::object()));

  const nlohmann::json sweep = j.value("sweep", nlohmann::json::object());
  c.sweep.lambdas = get_or(sweep, "lambdas", c.sweep.lambdas);
  c.sweep.epsilons = get_or(sweep, "epsilons", c.sweep.epsilons);
  c.sweep.noise_targets = get_or(sweep, "noise_targets", c.sweep.noise_targets);
  c.sweep.noise_seed = get_or(sweep, "noise_seed", c.sweep.noise_seed);
  c.sweep.epsilon_is_std = get_or(sweep, "epsilon_is_std", c.sweep.epsilon_is_std);

  const nlohmann::json cmp = j.value("compare", nlohmann::json::object());
  c.compare.baseline_run = resolve(base_dir, get_or<std::string>(cmp, "baseline_run", ""));
  c.compare.cml_run = resolve(base_dir, get_or<std::string>(cmp, "cml_run", ""));
  c.compare.test_manifest = resolve(base_dir, get_or<std::string>(cmp, "test_manifest", ""));

  c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", ""));
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  const fs::path parent = fs::path(path).parent_path();
  return parse_experiment_config(j, parent.empty() ? "." : parent.string());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.synthetic) j["data"]["synthetic"] = to_json(*c.synthetic);
  else j["data"]["manifest"] = c.manifest;
  j["split"] = {{"train_fraction", c.split.train_fraction},
                {"validation_fraction", c.split.validation_fraction},
                {"seed", c.split.seed}};
  j["model"] = {{"hidden_dim", c.train.model.hidden_dim},
                {"latent_dim", c.train.model.latent_dim},
                {"head_hidden_dim", c.train.model.head_hidden_dim}};
  j["train"] = to_json(c.train);
  j["train"].erase("hidden_dim");
  j["train"].erase("latent_dim");
  j["train"].erase("head_hidden_dim");
  j["sweep"] = {{"lambdas", c.sweep.lambdas},
                {"epsilons", c.sweep.epsilons},
                {"noise_targets", c.sweep.noise_targets},
                {"noise_seed", c.sweep.noise_seed},
                {"epsilon_is_std", c.sweep.epsilon_is_std}};
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace cml
