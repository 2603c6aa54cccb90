#include "cml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cml/errors.hpp"
#include "cml/kernels.hpp"

namespace cml {

namespace {

void require_nonempty(std::span<const ScoredPrediction> preds, const char* what) {
  if (preds.empty()) throw EmptyInputError(std::string(what) + " of an empty prediction list");
}

// Mean of r(i) = errors(top i) / i for a correctness sequence already in
// coverage order.
template <typename Correct>
double risk_coverage_area(std::size_t n, Correct&& correct_at) {
  double area = 0.0;
  std::size_t errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!correct_at(i)) ++errors;
    area += static_cast<double>(errors) / static_cast<double>(i + 1);
  }
  return area / static_cast<double>(n);
}

}  // namespace

ScoredPrediction score(const Prediction& prediction, std::size_t label) {
  return {prediction.confidence, prediction.predicted_class == label, nll_loss(prediction.probs, label)};
}

double accuracy(std::span<const ScoredPrediction> preds) {
  require_nonempty(preds, "accuracy");
  const auto correct = std::count_if(preds.begin(), preds.end(), [](const ScoredPrediction& p) { return p.correct; });
  return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.size());
}

double mean_nll(std::span<const ScoredPrediction> preds) {
  require_nonempty(preds, "mean NLL");
  double total = 0.0;
  for (const ScoredPrediction& p : preds) total += p.nll_term;
  return total / static_cast<double>(preds.size());
}

double aurc(std::span<const ScoredPrediction> preds) {
  require_nonempty(preds, "AURC");
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  return risk_coverage_area(order.size(), [&](std::size_t i) { return preds[order[i]].correct; });
}

double e_aurc(std::span<const ScoredPrediction> preds) {
  const double observed = aurc(preds);
  const auto n_correct = static_cast<std::size_t>(
      std::count_if(preds.begin(), preds.end(), [](const ScoredPrediction& p) { return p.correct; }));
  const double optimal = risk_coverage_area(preds.size(), [&](std::size_t i) { return i < n_correct; });
  return observed - optimal;
}

double mean_abs_conf_shift(const ClassifierParams& model_a, const ClassifierParams& model_b, const Dataset& dataset,
                           std::span<const SubsetMask> masks, Exec exec) {
  if (!(model_a.spec == model_b.spec)) throw SpecError("confidence shift between models with different specs");
  if (masks.empty()) throw EmptyInputError("confidence shift needs at least one mask");
  if (dataset.empty()) throw EmptyInputError("confidence shift on an empty dataset");
  const auto a = subset_confidences(model_a, dataset, masks, exec);
  const auto b = subset_confidences(model_b, dataset, masks, exec);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < masks.size(); ++j) total += std::abs(a[i][j] - b[i][j]);
  return total / static_cast<double>(a.size() * masks.size());
}

MetricsReport build_report(const EvalArtifacts& in) {
  auto need = [](const auto& field, const char* name) -> const auto& {
    if (!field) throw StateError(std::string("report is missing ") + name);
    return *field;
  };
  MetricsReport r;
  r.num_samples = need(in.num_samples, "num_samples");
  r.accuracy_pct = need(in.accuracy_pct, "accuracy");
  r.accuracy = r.accuracy_pct / 100.0;
  r.nll = need(in.mean_nll, "nll");
  r.aurc = need(in.aurc, "aurc");
  r.e_aurc = need(in.e_aurc, "e_aurc");
  r.vrr = need(in.vrr, "vrr");
  r.mean_confidence_full = need(in.mean_confidence_full, "mean_confidence_full");
  r.mean_confidence_by_subset_size = need(in.mean_confidence_by_subset_size, "mean_confidence_by_subset_size");
  r.nll_scaled = r.nll * 10.0;
  r.aurc_scaled = r.aurc * 1e3;
  r.e_aurc_scaled = r.e_aurc * 1e3;
  r.vrr_pct = r.vrr * 100.0;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json by_size = nlohmann::json::object();
  for (const auto& [size, conf] : r.mean_confidence_by_subset_size) by_size[std::to_string(size)] = conf;
  return {
      {"num_samples", r.num_samples},
      {"raw", {{"accuracy", r.accuracy}, {"nll", r.nll}, {"aurc", r.aurc}, {"e_aurc", r.e_aurc}, {"vrr", r.vrr}}},
      {"accuracy_pct", r.accuracy_pct},
      {"nll_scaled", r.nll_scaled},
      {"aurc_scaled", r.aurc_scaled},
      {"e_aurc_scaled", r.e_aurc_scaled},
      {"vrr_pct", r.vrr_pct},
      {"mean_confidence_full", r.mean_confidence_full},
      {"mean_confidence_by_subset_size", by_size},
  };
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.num_samples = j.at("num_samples").get<std::size_t>();
    const auto& raw = j.at("raw");
    r.accuracy = raw.at("accuracy").get<double>();
    r.nll = raw.at("nll").get<double>();
    r.aurc = raw.at("aurc").get<double>();
    r.e_aurc = raw.at("e_aurc").get<double>();
    r.vrr = raw.at("vrr").get<double>();
    r.accuracy_pct = j.at("accuracy_pct").get<double>();
    r.nll_scaled = j.at("nll_scaled").get<double>();
    r.aurc_scaled = j.at("aurc_scaled").get<double>();
    r.e_aurc_scaled = j.at("e_aurc_scaled").get<double>();
    r.vrr_pct = j.at("vrr_pct").get<double>();
    r.mean_confidence_full = j.at("mean_confidence_full").get<double>();
    for (const auto& [key, value] : j.at("mean_confidence_by_subset_size").items())
      r.mean_confidence_by_subset_size[std::stoul(key)] = value.get<double>();
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::string summary_csv_header() { return "run,accuracy_pct,nll_scaled,aurc_scaled,e_aurc_scaled,vrr_pct,mean_conf_full"; }

std::string summary_csv_row(const std::string& label, const MetricsReport& r) {
  return label + ',' + format_real(r.accuracy_pct) + ',' + format_real(r.nll_scaled) + ',' + format_real(r.aurc_scaled) +
         ',' + format_real(r.e_aurc_scaled) + ',' + format_real(r.vrr_pct) + ',' + format_real(r.mean_confidence_full);
}

}  // namespace cml
