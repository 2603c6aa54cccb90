#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace cml {

struct Sample {
  std::vector<std::vector<double>> modalities;
  std::size_t label = 0;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::size_t> modality_dims;
  std::size_t num_classes = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t num_modalities() const { return modality_dims.size(); }
  // Throws SpecError when a sample disagrees with the declared shape.
  void validate() const;
  std::vector<std::size_t> class_counts() const;
  bool operator==(const Dataset&) const = default;
};

// Gaussian class-conditional generator. Separation is the distance between
// any two class means of a modality, in units of that modality's noise_std.
struct SyntheticSpec {
  std::size_t num_classes = 2;
  std::vector<std::size_t> modality_dims;
  std::vector<std::size_t> samples_per_class;
  std::vector<double> class_separation;
  std::vector<double> noise_std;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Class mean of (class, modality) as placed by generate_synthetic.
std::vector<std::vector<std::vector<double>>> synthetic_class_means(const SyntheticSpec& spec);

// Manifest: {"num_classes": K, "modalities": [{"path": p, "dim": d}, ...],
// "labels": p}. Relative paths resolve against the manifest's directory.
// Modality files are headerless CSV (one sample per row); the labels file
// holds one 0-based integer per line. Errors name the file and line.
Dataset load_csv_dataset(const std::string& manifest_path);

// Writes manifest.json, modality_<m>.csv and labels.csv into `dir` (created
// if missing) with 9 significant digits. Returns the manifest path.
std::string write_csv_dataset(const Dataset& dataset, const std::string& dir);

// Formats a real with 9 significant digits, the on-disk precision.
std::string format_real(double v);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// Stratified by class. Throws SplitError for a class with < 2 samples and
// ConfigError unless 0 < train_fraction < 1.
SplitResult split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

// Per-feature z-scoring fitted on one dataset and applied to others.
struct Standardizer {
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> scale;

  static Standardizer fit(const Dataset& dataset);
  Dataset apply(const Dataset& dataset) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

struct CorruptionSpec {
  std::vector<std::size_t> target_modalities;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  // By default epsilon is the noise variance (std = sqrt(epsilon)); set to
  // read it as the standard deviation instead.
  bool epsilon_is_std = false;
};

// Adds i.i.d. zero-mean Gaussian noise to every feature of the targeted
// modalities. Labels and other modalities are copied bit for bit.
Dataset corrupt_gaussian(const Dataset& dataset, const CorruptionSpec& spec);

}  // namespace cml
