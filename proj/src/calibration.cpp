#include "cml/calibration.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <random>

#include "cml/errors.hpp"
#include "cml/kernels.hpp"

namespace cml {

void MaskChain::validate() const {
  if (masks.empty()) throw StateError("mask chain is empty");
  const std::size_t m = masks.front().num_modalities();
  if (!(masks.front() == SubsetMask::full(m))) throw StateError("mask chain does not start at the full set");
  if (masks.size() != m) throw StateError("mask chain has " + std::to_string(masks.size()) + " masks for " +
                                          std::to_string(m) + " modalities");
  for (std::size_t i = 1; i < masks.size(); ++i)
    if (!masks[i].is_proper_subset_of(masks[i - 1]) || masks[i - 1].size() - masks[i].size() != 1)
      throw StateError("mask chain step " + std::to_string(i) + " is not a single removal");
}

MaskChain sample_chain(std::size_t num_modalities, Rng& rng) {
  if (num_modalities == 0) throw SpecError("cannot build a mask chain over 0 modalities");
  MaskChain chain;
  chain.masks.push_back(SubsetMask::full(num_modalities));
  while (chain.masks.back().size() > 1) {
    const SubsetMask& current = chain.masks.back();
    std::uniform_int_distribution<std::size_t> pick(0, current.size() - 1);
    const std::size_t removed = current.indices()[pick(rng)];
    chain.masks.push_back(current.without(removed));
  }
  return chain;
}

std::vector<MaskPair> enumerate_chain_pairs(const MaskChain& chain) {
  std::vector<MaskPair> pairs;
  for (std::size_t i = 0; i + 1 < chain.masks.size(); ++i) pairs.push_back({chain.masks[i + 1], chain.masks[i]});
  return pairs;
}

std::vector<MaskPair> all_single_removal_pairs(std::size_t num_modalities) {
  if (num_modalities == 0 || num_modalities > 63) throw SpecError("unsupported modality count");
  std::vector<MaskPair> pairs;
  const std::uint64_t limit = std::uint64_t{1} << num_modalities;
  for (std::uint64_t bits = 1; bits < limit; ++bits) {
    if (std::popcount(bits) < 2) continue;
    std::vector<std::size_t> members;
    for (std::size_t m = 0; m < num_modalities; ++m)
      if (bits >> m & 1u) members.push_back(m);
    const SubsetMask s(members, num_modalities);
    for (std::size_t m : members) pairs.push_back({s.without(m), s});
  }
  return pairs;
}

namespace {

void check_confidence(double c, const char* name) {
  if (!(c >= 0.0 && c <= 1.0)) throw DomainError(std::string(name) + " = " + std::to_string(c) + " is outside [0, 1]");
}

}  // namespace

double confidence_increment(double conf_t, double conf_s) {
  check_confidence(conf_t, "conf_t");
  check_confidence(conf_s, "conf_s");
  return conf_s - conf_t;
}

PairLoss hinge_pair_loss(double conf_t, double conf_s) {
  check_confidence(conf_t, "conf_t");
  check_confidence(conf_s, "conf_s");
  if (conf_t > conf_s) return {conf_t - conf_s, 1.0, -1.0};
  return {};
}

PairLoss difference_pair_loss(double conf_t, double conf_s) {
  check_confidence(conf_t, "conf_t");
  check_confidence(conf_s, "conf_s");
  return {conf_t - conf_s, 1.0, -1.0};
}

std::string to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::kNone: return "none";
    case RegularizerKind::kHinge: return "hinge";
    case RegularizerKind::kDifference: return "difference";
  }
  return "none";
}

RegularizerKind parse_regularizer(const std::string& name) {
  if (name == "none") return RegularizerKind::kNone;
  if (name == "hinge") return RegularizerKind::kHinge;
  if (name == "difference") return RegularizerKind::kDifference;
  throw ConfigError("unknown regularizer '" + name + "' (expected none, hinge or difference)");
}

SampleObjective sample_objective(const ClassifierParams& params, const Sample& sample, const MaskChain& chain,
                                 const ObjectiveOptions& options, bool want_grad) {
  if (!(options.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  const std::size_t m_count = params.spec.num_modalities();
  chain.validate();
  if (chain.num_modalities() != m_count || sample.modalities.size() != m_count)
    throw StateError("mask chain / sample cover " + std::to_string(chain.num_modalities()) + " / " +
                     std::to_string(sample.modalities.size()) + " modalities, model has " + std::to_string(m_count));
  if (sample.label >= params.spec.num_classes) throw StateError("sample label out of range for the model");

  std::vector<ForwardResult> passes;
  passes.reserve(chain.masks.size());
  for (const SubsetMask& mask : chain.masks) passes.push_back(forward(params, sample.modalities, mask));

  SampleObjective out;
  const double inv_m = 1.0 / static_cast<double>(m_count);
  double nll_sum = 0.0;
  for (const ForwardResult& p : passes) nll_sum += nll_loss(p.prediction.probs, sample.label);
  out.classification_loss = inv_m * nll_sum;
  out.full_correct = passes.front().prediction.predicted_class == sample.label;

  const std::vector<MaskPair> pairs = enumerate_chain_pairs(chain);
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const double conf_s = passes[j].prediction.confidence;
    const double conf_t = passes[j + 1].prediction.confidence;
    out.records.push_back({0, pairs[j].t, pairs[j].s, conf_t, conf_s, confidence_increment(conf_t, conf_s)});
  }

  out.regularizer_applied =
      options.variant != RegularizerKind::kNone && !(options.skip_on_wrong_full && !out.full_correct);
  // d(lambda * regularizer) / d(confidence of mask i)
  std::vector<double> conf_coef(passes.size(), 0.0);
  if (out.regularizer_applied) {
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      const RankingRecord& r = out.records[j];
      const PairLoss pl = options.variant == RegularizerKind::kHinge ? hinge_pair_loss(r.conf_t, r.conf_s)
                                                                     : difference_pair_loss(r.conf_t, r.conf_s);
      out.regularizer_loss += pl.value;
      conf_coef[j + 1] += options.lambda * pl.grad_t;
      if (!options.detach_superset) conf_coef[j] += options.lambda * pl.grad_s;
    }
  }
  const bool regularize_loss = out.regularizer_applied && options.lambda > 0.0;
  out.total_loss = out.classification_loss + (regularize_loss ? options.lambda * out.regularizer_loss : 0.0);

  if (!want_grad) return out;
  out.grad.assign(params.layout.total(), 0.0);
  for (std::size_t i = 0; i < passes.size(); ++i) {
    const Prediction& pred = passes[i].prediction;
    std::vector<double> logit_grad = nll_grad_logits(pred.probs, sample.label);
    for (double& g : logit_grad) g *= inv_m;
    if (regularize_loss && conf_coef[i] != 0.0) {
      // d p_c / d z_j = p_c (1[j == c] - p_j) for the argmax class c.
      const std::size_t c = pred.predicted_class;
      const double scale = conf_coef[i] * pred.confidence;
      for (std::size_t j = 0; j < logit_grad.size(); ++j)
        logit_grad[j] += scale * ((j == c ? 1.0 : 0.0) - pred.probs[j]);
    }
    backward_accumulate(params, passes[i].cache, logit_grad, chain.masks[i], out.grad);
  }
  return out;
}

double compute_vrr(std::span<const RankingRecord> records) {
  if (records.empty()) throw EmptyInputError("VRR of an empty record list");
  const auto violations = std::count_if(records.begin(), records.end(), [](const RankingRecord& r) { return r.ci < 0.0; });
  return static_cast<double>(violations) / static_cast<double>(records.size());
}

std::string to_string(VrrMode mode) { return mode == VrrMode::kSampled ? "sampled" : "exhaustive"; }

VrrMode parse_vrr_mode(const std::string& name) {
  if (name == "sampled") return VrrMode::kSampled;
  if (name == "exhaustive") return VrrMode::kExhaustive;
  throw ConfigError("unknown VRR mode '" + name + "' (expected sampled or exhaustive)");
}

MaskChain evaluation_chain(std::size_t num_modalities, std::uint64_t seed, std::size_t repeat, std::size_t index) {
  Rng rng = derive_rng(seed, Stream::kEvalChain, {repeat, index});
  return sample_chain(num_modalities, rng);
}

VrrEvaluation evaluate_vrr(const ClassifierParams& params, const Dataset& dataset, std::uint64_t seed, VrrMode mode,
                           std::size_t repeats, Exec exec) {
  if (dataset.empty()) throw EmptyInputError("VRR evaluation on an empty dataset");
  const std::size_t m_count = params.spec.num_modalities();
  if (dataset.num_modalities() != m_count) throw SpecError("dataset and model disagree on modality count");
  if (repeats == 0) throw ConfigError("VRR repeat count must be >= 1");

  std::function<std::vector<MaskPair>(std::size_t)> pairs_for;
  if (mode == VrrMode::kExhaustive) {
    if (m_count > kMaxExhaustiveModalities)
      throw CapabilityError("exhaustive VRR is limited to " + std::to_string(kMaxExhaustiveModalities) +
                            " modalities, dataset has " + std::to_string(m_count));
    pairs_for = [all = all_single_removal_pairs(m_count)](std::size_t) { return all; };
  } else {
    pairs_for = [m_count, seed, repeats](std::size_t i) {
      std::vector<MaskPair> pairs;
      for (std::size_t r = 0; r < repeats; ++r) {
        const auto chain_pairs = enumerate_chain_pairs(evaluation_chain(m_count, seed, r, i));
        pairs.insert(pairs.end(), chain_pairs.begin(), chain_pairs.end());
      }
      return pairs;
    };
  }

  VrrEvaluation ev;
  ev.violations_by_removed.assign(m_count, 0);
  const SubsetMask full = SubsetMask::full(m_count);
  for (auto& per_sample : score_pairs(params, dataset, pairs_for, exec))
    for (RankingRecord& r : per_sample) {
      if (r.ci < 0.0 && r.s_mask == full) {
        const std::uint64_t removed = r.s_mask.bits() & ~r.t_mask.bits();
        ++ev.violations_by_removed[static_cast<std::size_t>(std::countr_zero(removed))];
      }
      ev.records.push_back(std::move(r));
    }
  ev.vrr = compute_vrr(ev.records);
  return ev;
}

void write_records_csv(const std::string& path, std::span<const RankingRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "sample_id,t_mask,s_mask,conf_t,conf_s,ci\n";
  for (const RankingRecord& r : records)
    out << r.sample_id << ',' << r.t_mask.to_string() << ',' << r.s_mask.to_string() << ',' << format_real(r.conf_t)
        << ',' << format_real(r.conf_s) << ',' << format_real(r.ci) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace cml
