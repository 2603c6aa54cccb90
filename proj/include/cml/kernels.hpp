#pragma once

// Data-parallel inner loops. Every kernel writes per-sample results into
// preallocated slots and reduces them in sample-index order, so the serial
// and OpenMP variants agree bit for bit.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cml/calibration.hpp"
#include "cml/data.hpp"
#include "cml/exec.hpp"
#include "cml/model.hpp"

namespace cml {

struct BatchObjective {
  double classification_loss = 0.0;  // sums over the batch
  double regularizer_loss = 0.0;
  double total_loss = 0.0;
  std::size_t full_correct = 0;
  std::vector<double> grad;  // sum of per-sample gradients
};

// chains[j] belongs to dataset.samples[sample_indices[j]].
BatchObjective batch_objective(const ClassifierParams& params, const Dataset& dataset,
                               std::span<const std::size_t> sample_indices, std::span<const MaskChain> chains,
                               const ObjectiveOptions& options, Exec exec);

std::vector<Prediction> predict_all(const ClassifierParams& params, const Dataset& dataset, const SubsetMask& mask,
                                    Exec exec);

// result[i][j] = confidence of sample i under masks[j].
std::vector<std::vector<double>> subset_confidences(const ClassifierParams& params, const Dataset& dataset,
                                                    std::span<const SubsetMask> masks, Exec exec);

// Scores `pairs_for(i)` for every sample i; records come back grouped by
// sample in index order.
std::vector<std::vector<RankingRecord>> score_pairs(const ClassifierParams& params, const Dataset& dataset,
                                                    const std::function<std::vector<MaskPair>(std::size_t)>& pairs_for,
                                                    Exec exec);

}  // namespace cml
