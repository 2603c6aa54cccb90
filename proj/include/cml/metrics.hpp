#pragma once

// Selective-prediction and likelihood metrics, and the report that carries
// them at their conventional table scales.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cml/data.hpp"
#include "cml/exec.hpp"
#include "cml/model.hpp"
#include "json.hpp"

namespace cml {

struct ScoredPrediction {
  double confidence = 0.0;
  bool correct = false;
  double nll_term = 0.0;  // -ln p(true class)
};

ScoredPrediction score(const Prediction& prediction, std::size_t label);

// All of these throw EmptyInputError on an empty list.
double accuracy(std::span<const ScoredPrediction> preds);  // percent
double mean_nll(std::span<const ScoredPrediction> preds);
// Risk-coverage area: sort by confidence descending (stable, so equal
// confidences keep input order), r(i) = errors in the top i / i,
// AURC = mean of r(i) over i = 1..n.
double aurc(std::span<const ScoredPrediction> preds);
// AURC minus the AURC of the same correctness multiset ordered correct-first.
double e_aurc(std::span<const ScoredPrediction> preds);

// Mean over samples and masks of |conf_a - conf_b|. Throws SpecError when
// the models' specs differ.
double mean_abs_conf_shift(const ClassifierParams& model_a, const ClassifierParams& model_b, const Dataset& dataset,
                           std::span<const SubsetMask> masks, Exec exec = Exec::kParallel);

struct MetricsReport {
  std::size_t num_samples = 0;
  // raw values
  double accuracy = 0.0;  // fraction in [0, 1]
  double nll = 0.0;
  double aurc = 0.0;
  double e_aurc = 0.0;
  double vrr = 0.0;
  // table scales
  double accuracy_pct = 0.0;
  double nll_scaled = 0.0;     // mean NLL x 10
  double aurc_scaled = 0.0;    // x 1e3
  double e_aurc_scaled = 0.0;  // x 1e3
  double vrr_pct = 0.0;
  double mean_confidence_full = 0.0;
  std::map<std::size_t, double> mean_confidence_by_subset_size;
};

// Inputs to build_report; every field must be set.
struct EvalArtifacts {
  std::optional<std::size_t> num_samples;
  std::optional<double> accuracy_pct;
  std::optional<double> mean_nll;
  std::optional<double> aurc;
  std::optional<double> e_aurc;
  std::optional<double> vrr;
  std::optional<double> mean_confidence_full;
  std::optional<std::map<std::size_t, double>> mean_confidence_by_subset_size;
};

// Throws StateError naming the first missing constituent.
MetricsReport build_report(const EvalArtifacts& artifacts);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

std::string summary_csv_header();
std::string summary_csv_row(const std::string& label, const MetricsReport& report);

}  // namespace cml
