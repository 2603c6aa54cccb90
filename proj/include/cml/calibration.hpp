#pragma once

// Confidence-ranking calibration: nested modality chains, the confidence
// increment between a subset and its superset, the ranking regularizers and
// the per-sample training objective, and the violating-ranking rate.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cml/data.hpp"
#include "cml/exec.hpp"
#include "cml/model.hpp"
#include "cml/rng.hpp"

namespace cml {

// masks[0] is the full set; each next mask drops exactly one index; the last
// mask is a singleton.
struct MaskChain {
  std::vector<SubsetMask> masks;

  std::size_t num_modalities() const { return masks.empty() ? 0 : masks.front().num_modalities(); }
  // Throws StateError if the chain is not a strict single-removal chain from
  // the full set down to one modality.
  void validate() const;
};

// Subset / superset pair, t ⊂ s with |s| - |t| = 1.
struct MaskPair {
  SubsetMask t;
  SubsetMask s;
  bool operator==(const MaskPair&) const = default;
};

// Throws SpecError when num_modalities == 0.
MaskChain sample_chain(std::size_t num_modalities, Rng& rng);
std::vector<MaskPair> enumerate_chain_pairs(const MaskChain& chain);
// Every (t, s) with t = s minus one index, over all s ⊆ full with |s| >= 2,
// ordered by s's bit pattern then by removed index.
std::vector<MaskPair> all_single_removal_pairs(std::size_t num_modalities);

// conf_s - conf_t. Throws DomainError unless both lie in [0, 1].
double confidence_increment(double conf_t, double conf_s);

struct PairLoss {
  double value = 0.0;
  double grad_t = 0.0;  // d value / d conf_t
  double grad_s = 0.0;  // d value / d conf_s
};

// max(0, conf_t - conf_s); zero loss and zero gradients at equality.
PairLoss hinge_pair_loss(double conf_t, double conf_s);
// conf_t - conf_s, gradients always (+1, -1).
PairLoss difference_pair_loss(double conf_t, double conf_s);

enum class RegularizerKind { kNone, kHinge, kDifference };

std::string to_string(RegularizerKind kind);
// Accepts "none", "hinge", "difference"; throws ConfigError otherwise.
RegularizerKind parse_regularizer(const std::string& name);

struct RankingRecord {
  std::size_t sample_id = 0;
  SubsetMask t_mask;
  SubsetMask s_mask;
  double conf_t = 0.0;
  double conf_s = 0.0;
  double ci = 0.0;
  bool operator==(const RankingRecord&) const = default;
};

struct ObjectiveOptions {
  RegularizerKind variant = RegularizerKind::kHinge;
  double lambda = 0.0;
  // Drop the regularizer for samples whose full-modality prediction is wrong.
  bool skip_on_wrong_full = true;
  // Treat conf_s as a constant in the pair loss (stop-gradient).
  bool detach_superset = false;
};

struct SampleObjective {
  double total_loss = 0.0;
  double classification_loss = 0.0;  // (1/M) * sum of NLL over the chain's masks
  double regularizer_loss = 0.0;     // unweighted sum of pair losses actually applied
  bool regularizer_applied = false;
  bool full_correct = false;
  std::vector<double> grad;  // empty unless requested
  std::vector<RankingRecord> records;
};

// loss = (1/M) * sum_{mask in chain} NLL(mask) + lambda * sum_{pairs} pair_loss.
// The confidence is differentiated through the argmax class probability.
// Throws ConfigError for lambda < 0 and StateError if the chain does not fit
// the sample/model.
SampleObjective sample_objective(const ClassifierParams& params, const Sample& sample, const MaskChain& chain,
                                 const ObjectiveOptions& options, bool want_grad = true);

// Fraction of records with ci < 0. Throws EmptyInputError for no records.
double compute_vrr(std::span<const RankingRecord> records);

enum class VrrMode { kSampled, kExhaustive };

std::string to_string(VrrMode mode);
VrrMode parse_vrr_mode(const std::string& name);

struct VrrEvaluation {
  double vrr = 0.0;
  std::vector<RankingRecord> records;
  // violations_by_removed[m]: single removals from the full set whose
  // confidence rose when modality m was dropped.
  std::vector<std::size_t> violations_by_removed;
};

// Sampled mode draws `repeats` chains per sample, keyed by (seed, repeat,
// sample index). Exhaustive mode scores every single-removal pair and is
// limited to M <= 5 (CapabilityError beyond that).
VrrEvaluation evaluate_vrr(const ClassifierParams& params, const Dataset& dataset, std::uint64_t seed, VrrMode mode,
                           std::size_t repeats = 1, Exec exec = Exec::kParallel);

// Chain used for sample `index` in sampled evaluation, repetition `repeat`.
MaskChain evaluation_chain(std::size_t num_modalities, std::uint64_t seed, std::size_t repeat, std::size_t index);

// CSV: sample_id,t_mask,s_mask,conf_t,conf_s,ci (9 significant digits).
void write_records_csv(const std::string& path, std::span<const RankingRecord> records);

inline constexpr std::size_t kMaxExhaustiveModalities = 5;

}  // namespace cml
