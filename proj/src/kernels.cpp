#include "cml/kernels.hpp"

#include <exception>
#include <unordered_map>

#include "cml/errors.hpp"

namespace cml {

namespace {

// Runs body(i) for i in [0, n). Exceptions thrown inside the parallel region
// are captured per index and the lowest-index one is rethrown afterwards, so
// both policies report the same error.
template <typename Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  if (exec == Exec::kSerial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

BatchObjective batch_objective(const ClassifierParams& params, const Dataset& dataset,
                               std::span<const std::size_t> sample_indices, std::span<const MaskChain> chains,
                               const ObjectiveOptions& options, Exec exec) {
  if (chains.size() != sample_indices.size()) throw StateError("batch_objective: one chain per sample is required");
  std::vector<SampleObjective> per_sample(sample_indices.size());
  for_each_index(sample_indices.size(), exec, [&](std::size_t j) {
    per_sample[j] = sample_objective(params, dataset.samples.at(sample_indices[j]), chains[j], options, true);
  });

  BatchObjective out;
  out.grad.assign(params.layout.total(), 0.0);
  for (const SampleObjective& s : per_sample) {
    out.classification_loss += s.classification_loss;
    out.regularizer_loss += s.regularizer_loss;
    out.total_loss += s.total_loss;
    out.full_correct += s.full_correct ? 1 : 0;
    for (std::size_t p = 0; p < out.grad.size(); ++p) out.grad[p] += s.grad[p];
  }
  return out;
}

std::vector<Prediction> predict_all(const ClassifierParams& params, const Dataset& dataset, const SubsetMask& mask,
                                    Exec exec) {
  std::vector<Prediction> preds(dataset.size());
  for_each_index(dataset.size(), exec,
                 [&](std::size_t i) { preds[i] = predict(params, dataset.samples[i].modalities, mask); });
  return preds;
}

std::vector<std::vector<double>> subset_confidences(const ClassifierParams& params, const Dataset& dataset,
                                                    std::span<const SubsetMask> masks, Exec exec) {
  std::vector<std::vector<double>> conf(dataset.size(), std::vector<double>(masks.size()));
  for_each_index(dataset.size(), exec, [&](std::size_t i) {
    for (std::size_t j = 0; j < masks.size(); ++j)
      conf[i][j] = predict(params, dataset.samples[i].modalities, masks[j]).confidence;
  });
  return conf;
}

std::vector<std::vector<RankingRecord>> score_pairs(const ClassifierParams& params, const Dataset& dataset,
                                                    const std::function<std::vector<MaskPair>(std::size_t)>& pairs_for,
                                                    Exec exec) {
  std::vector<std::vector<RankingRecord>> records(dataset.size());
  for_each_index(dataset.size(), exec, [&](std::size_t i) {
    const Sample& sample = dataset.samples[i];
    std::unordered_map<std::uint64_t, double> cache;
    auto conf = [&](const SubsetMask& mask) {
      auto [it, inserted] = cache.try_emplace(mask.bits(), 0.0);
      if (inserted) it->second = predict(params, sample.modalities, mask).confidence;
      return it->second;
    };
    for (const MaskPair& pair : pairs_for(i)) {
      const double conf_t = conf(pair.t);
      const double conf_s = conf(pair.s);
      records[i].push_back({i, pair.t, pair.s, conf_t, conf_s, confidence_increment(conf_t, conf_s)});
    }
  });
  return records;
}

}  // namespace cml
