#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "cml/calibration.hpp"
#include "cml/errors.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace cml;

namespace {

MaskChain chain_of(std::initializer_list<std::vector<std::size_t>> sets, std::size_t m) {
  MaskChain c;
  for (const auto& s : sets) c.masks.emplace_back(s, m);
  return c;
}

RankingRecord record_with_ci(double ci) {
  RankingRecord r;
  r.ci = ci;
  return r;
}

// A random model/sample/chain triple whose chain confidences are pairwise at
// least `margin` apart and whose argmax classes are unambiguous, so the
// hinge is differentiable in a neighbourhood of the parameters.
struct SmoothCase {
  ClassifierParams params;
  Sample sample;
  MaskChain chain;
};

SmoothCase smooth_case(std::uint64_t seed, double margin = 1e-3) {
  const ModelSpec spec = test::small_spec({3, 4, 2}, 3);
  for (std::uint64_t s = seed;; ++s) {
    SmoothCase c{init_params(spec, s), {}, {}};
    // Larger weights give more spread between subset confidences.
    for (double& v : c.params.values) v *= 3.0;
    const Dataset ds = test::random_dataset(spec.modality_dims, 3, 1, s);
    c.sample = ds.samples.front();
    Rng rng = derive_rng(s, Stream::kTrainChain, {});
    c.chain = sample_chain(3, rng);
    std::vector<Prediction> preds;
    for (const auto& mask : c.chain.masks) preds.push_back(predict(c.params, c.sample.modalities, mask));
    c.sample.label = preds.front().predicted_class;
    bool ok = true;
    for (std::size_t i = 0; i + 1 < preds.size(); ++i)
      ok = ok && std::abs(preds[i].confidence - preds[i + 1].confidence) > margin;
    for (const auto& p : preds) {
      std::vector<double> sorted = p.probs;
      std::sort(sorted.rbegin(), sorted.rend());
      ok = ok && sorted[0] - sorted[1] > margin;
    }
    if (ok) return c;
  }
}

ObjectiveFn objective_fn(const SmoothCase& c, const ObjectiveOptions& opts) {
  return [&c, opts](std::span<const double> theta, std::vector<double>* grad) {
    ClassifierParams p = c.params;
    p.values.assign(theta.begin(), theta.end());
    SampleObjective r = sample_objective(p, c.sample, c.chain, opts, grad != nullptr);
    if (grad) *grad = std::move(r.grad);
    return r.total_loss;
  };
}

}  // namespace

TEST_CASE("sample_chain structure") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const MaskChain c = sample_chain(3, rng);
    REQUIRE(c.masks.size() == 3);
    CHECK(c.masks[0] == SubsetMask::full(3));
    CHECK(c.masks[1].size() == 2);
    CHECK(c.masks[2].size() == 1);
    CHECK(c.masks[1].is_proper_subset_of(c.masks[0]));
    CHECK(c.masks[2].is_proper_subset_of(c.masks[1]));
    CHECK(enumerate_chain_pairs(c).size() == 2);
    CHECK_NOTHROW(c.validate());
  }
  const MaskChain one = sample_chain(1, rng);
  CHECK(one.masks.size() == 1);
  CHECK(enumerate_chain_pairs(one).empty());
  CHECK_THROWS_AS(sample_chain(0, rng), SpecError);

  Rng a(77), b(77);
  CHECK(sample_chain(4, a).masks == sample_chain(4, b).masks);
}

TEST_CASE("sample_chain removes indices uniformly") {
  Rng rng(3);
  std::vector<int> first_removed(4, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const MaskChain c = sample_chain(4, rng);
    for (std::size_t m = 0; m < 4; ++m)
      if (!c.masks[1].contains(m)) ++first_removed[m];
  }
  for (int count : first_removed) CHECK(std::abs(count / double(n) - 0.25) < 0.01);
}

TEST_CASE("chain validation rejects malformed chains") {
  CHECK_THROWS_AS(chain_of({{0, 1}, {1}}, 3).validate(), StateError);        // not starting at full
  CHECK_THROWS_AS(chain_of({{0, 1, 2}, {0}}, 3).validate(), StateError);     // removes two
  CHECK_THROWS_AS(chain_of({{0, 1, 2}, {0, 1}}, 3).validate(), StateError);  // stops early
  CHECK_THROWS_AS(chain_of({{0, 1, 2}, {0, 1}, {2}}, 3).validate(), StateError);
  CHECK_NOTHROW(chain_of({{0, 1, 2}, {0, 2}, {2}}, 3).validate());
}

TEST_CASE("enumerate_chain_pairs") {
  const auto pairs = enumerate_chain_pairs(chain_of({{0, 1, 2}, {0, 2}, {2}}, 3));
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == MaskPair{SubsetMask({0, 2}, 3), SubsetMask({0, 1, 2}, 3)});
  CHECK(pairs[1] == MaskPair{SubsetMask({2}, 3), SubsetMask({0, 2}, 3)});
  CHECK(enumerate_chain_pairs(chain_of({{0, 1}, {1}}, 2)).size() == 1);
}

TEST_CASE("all_single_removal_pairs matches a brute-force enumeration") {
  for (std::size_t m = 1; m <= 5; ++m) {
    std::set<std::pair<std::uint64_t, std::uint64_t>> oracle;
    for (std::uint64_t s = 1; s < (1u << m); ++s)
      for (std::uint64_t t = 1; t < (1u << m); ++t)
        if ((t & s) == t && std::popcount(s) - std::popcount(t) == 1) oracle.insert({t, s});
    const auto pairs = all_single_removal_pairs(m);
    std::set<std::pair<std::uint64_t, std::uint64_t>> got;
    for (const auto& p : pairs) got.insert({p.t.bits(), p.s.bits()});
    CHECK(got == oracle);
    CHECK(pairs.size() == oracle.size());
  }
  CHECK(all_single_removal_pairs(3).size() == 9);
  CHECK(all_single_removal_pairs(2).size() == 2);
}

TEST_CASE("confidence increment and pair losses") {
  CHECK(confidence_increment(0.7, 0.9) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(confidence_increment(0.8, 0.8) == 0.0);
  CHECK(confidence_increment(0.8, 0.6) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK_THROWS_AS(confidence_increment(1.1, 0.5), DomainError);
  CHECK_THROWS_AS(confidence_increment(0.5, -0.1), DomainError);
  CHECK_THROWS_AS(hinge_pair_loss(std::nan(""), 0.5), DomainError);

  const PairLoss h1 = hinge_pair_loss(0.8, 0.6);
  CHECK(h1.value == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(h1.grad_t == 1.0);
  CHECK(h1.grad_s == -1.0);
  const PairLoss h2 = hinge_pair_loss(0.5, 0.7);
  CHECK(h2.value == 0.0);
  CHECK(h2.grad_t == 0.0);
  CHECK(h2.grad_s == 0.0);
  const PairLoss h3 = hinge_pair_loss(0.6, 0.6);
  CHECK(h3.value == 0.0);
  CHECK(h3.grad_t == 0.0);
  CHECK(h3.grad_s == 0.0);

  CHECK(difference_pair_loss(0.8, 0.6).value == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(difference_pair_loss(0.5, 0.7).value == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(difference_pair_loss(0.4, 0.4).value == 0.0);
  CHECK(difference_pair_loss(0.4, 0.4).grad_t == 1.0);
  CHECK(difference_pair_loss(0.4, 0.4).grad_s == -1.0);

  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(rng), s = u(rng);
    const double ci = confidence_increment(t, s);
    CHECK(hinge_pair_loss(t, s).value == std::max(0.0, -ci));
    CHECK(difference_pair_loss(t, s).value == -ci);
  }
}

TEST_CASE("regularizer names") {
  for (auto k : {RegularizerKind::kNone, RegularizerKind::kHinge, RegularizerKind::kDifference})
    CHECK(parse_regularizer(to_string(k)) == k);
  CHECK_THROWS_AS(parse_regularizer("focal"), ConfigError);
  CHECK(parse_vrr_mode("exhaustive") == VrrMode::kExhaustive);
  CHECK_THROWS_AS(parse_vrr_mode("all"), ConfigError);
}

TEST_CASE("sample_objective classification term and records") {
  const SmoothCase c = smooth_case(10);
  ObjectiveOptions opts;
  opts.lambda = 0.0;
  const SampleObjective r = sample_objective(c.params, c.sample, c.chain, opts);

  double oracle = 0.0;
  for (const auto& mask : c.chain.masks)
    oracle += -std::log(predict(c.params, c.sample.modalities, mask).probs[c.sample.label]);
  CHECK(r.classification_loss == doctest::Approx(oracle / 3.0).epsilon(1e-14));
  CHECK(r.total_loss == r.classification_loss);
  REQUIRE(r.records.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    const RankingRecord& rec = r.records[j];
    CHECK(rec.s_mask == c.chain.masks[j]);
    CHECK(rec.t_mask == c.chain.masks[j + 1]);
    CHECK(rec.conf_s == predict(c.params, c.sample.modalities, rec.s_mask).confidence);
    CHECK(rec.conf_t == predict(c.params, c.sample.modalities, rec.t_mask).confidence);
    CHECK(rec.ci == rec.conf_s - rec.conf_t);
  }

  opts.lambda = -1.0;
  CHECK_THROWS_AS(sample_objective(c.params, c.sample, c.chain, opts), ConfigError);
  opts.lambda = 1.0;
  CHECK_THROWS_AS(sample_objective(c.params, c.sample, chain_of({{0, 1}, {1}}, 2), opts), StateError);
}

TEST_CASE("lambda 0 and variant none are bit-identical") {
  for (std::uint64_t seed : {20u, 21u, 22u}) {
    const SmoothCase c = smooth_case(seed);
    ObjectiveOptions zero;
    zero.variant = RegularizerKind::kHinge;
    zero.lambda = 0.0;
    ObjectiveOptions none;
    none.variant = RegularizerKind::kNone;
    none.lambda = 10.0;
    const auto a = sample_objective(c.params, c.sample, c.chain, zero);
    const auto b = sample_objective(c.params, c.sample, c.chain, none);
    CHECK(a.total_loss == b.total_loss);
    CHECK(a.grad == b.grad);
  }
}

TEST_CASE("skip rule removes the regularizer for wrong full-set predictions") {
  const SmoothCase base = smooth_case(30);
  SmoothCase c = base;
  c.sample.label = (base.sample.label + 1) % 3;  // full-set prediction is now wrong

  ObjectiveOptions reg;
  reg.variant = RegularizerKind::kDifference;  // nonzero for any confidences
  reg.lambda = 10.0;
  ObjectiveOptions plain = reg;
  plain.lambda = 0.0;

  const auto skipped = sample_objective(c.params, c.sample, c.chain, reg);
  const auto oracle = sample_objective(c.params, c.sample, c.chain, plain);
  CHECK_FALSE(skipped.full_correct);
  CHECK_FALSE(skipped.regularizer_applied);
  CHECK(skipped.regularizer_loss == 0.0);
  CHECK(skipped.total_loss == oracle.total_loss);
  CHECK(skipped.grad == oracle.grad);

  reg.skip_on_wrong_full = false;
  const auto kept = sample_objective(c.params, c.sample, c.chain, reg);
  CHECK(kept.regularizer_applied);
  CHECK(kept.grad != oracle.grad);
}

TEST_CASE("composite objective passes grad_check") {
  for (std::uint64_t seed : {40u, 41u, 42u, 43u}) {
    const SmoothCase c = smooth_case(seed);
    for (auto variant : {RegularizerKind::kHinge, RegularizerKind::kDifference}) {
      ObjectiveOptions opts;
      opts.variant = variant;
      opts.lambda = 10.0;
      opts.skip_on_wrong_full = false;
      const auto r = grad_check(objective_fn(c, opts), c.params.values);
      INFO("seed " << seed << " variant " << to_string(variant) << " err " << r.max_relative_error);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("detached superset drops the superset confidence gradient") {
  // With conf_s held constant the objective equals the undetached one minus
  // lambda * (pair terms depending on conf_s); check against finite
  // differences of an objective in which the superset confidences are frozen.
  const SmoothCase c = smooth_case(50);
  ObjectiveOptions opts;
  opts.variant = RegularizerKind::kDifference;
  opts.lambda = 5.0;
  opts.skip_on_wrong_full = false;
  opts.detach_superset = true;

  std::vector<double> frozen_s;
  for (const auto& rec : sample_objective(c.params, c.sample, c.chain, opts, false).records)
    frozen_s.push_back(rec.conf_s);
  const ObjectiveFn frozen = [&](std::span<const double> theta, std::vector<double>* grad) {
    ClassifierParams p = c.params;
    p.values.assign(theta.begin(), theta.end());
    const auto r = sample_objective(p, c.sample, c.chain, opts, grad != nullptr);
    if (grad) *grad = r.grad;
    double loss = r.classification_loss;
    for (std::size_t j = 0; j < r.records.size(); ++j) loss += opts.lambda * (r.records[j].conf_t - frozen_s[j]);
    return loss;
  };
  const auto check = grad_check(frozen, c.params.values);
  CHECK(check.max_relative_error < 1e-4);
}

TEST_CASE("compute_vrr") {
  std::vector<RankingRecord> recs;
  for (double ci : {0.1, -0.2, 0.3, -0.05}) recs.push_back(record_with_ci(ci));
  CHECK(compute_vrr(recs) == 0.5);
  std::vector<RankingRecord> doubled = recs;
  doubled.insert(doubled.end(), recs.begin(), recs.end());
  CHECK(compute_vrr(doubled) == 0.5);
  std::reverse(recs.begin(), recs.end());
  CHECK(compute_vrr(recs) == 0.5);

  CHECK(compute_vrr(std::vector{record_with_ci(0.0), record_with_ci(0.2)}) == 0.0);
  CHECK(compute_vrr(std::vector{record_with_ci(-1e-12), record_with_ci(-0.2)}) == 1.0);
  CHECK_THROWS_AS(compute_vrr(std::vector<RankingRecord>{}), EmptyInputError);
}

TEST_CASE("evaluate_vrr") {
  SUBCASE("constant model has no violations") {
    const ModelSpec spec = test::small_spec({3, 4, 2}, 3);
    const ClassifierParams zero(spec);
    const Dataset ds = test::random_dataset(spec.modality_dims, 3, 20, 1);
    for (auto mode : {VrrMode::kSampled, VrrMode::kExhaustive}) {
      const auto ev = evaluate_vrr(zero, ds, 1, mode);
      CHECK(ev.vrr == 0.0);
      for (const auto& r : ev.records) CHECK(r.ci == 0.0);
    }
  }
  SUBCASE("exhaustive M=3 against a brute-force oracle") {
    const ModelSpec spec = test::small_spec({3, 4, 2}, 3);
    ClassifierParams p = init_params(spec, 2);
    for (double& v : p.values) v *= 3.0;
    const Dataset ds = test::random_dataset(spec.modality_dims, 3, 50, 2);
    const auto ev = evaluate_vrr(p, ds, 9, VrrMode::kExhaustive);
    CHECK(ev.records.size() == 50 * 9);

    std::size_t violations = 0, total = 0;
    std::vector<std::size_t> by_removed(3, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (unsigned s = 1; s < 8; ++s) {
        for (unsigned t = 1; t < 8; ++t) {
          if ((t & s) != t || std::popcount(s) - std::popcount(t) != 1) continue;
          auto to_mask = [](unsigned bits) {
            std::vector<std::size_t> idx;
            for (std::size_t m = 0; m < 3; ++m)
              if (bits >> m & 1u) idx.push_back(m);
            return SubsetMask(idx, 3);
          };
          const double ct = predict(p, ds.samples[i].modalities, to_mask(t)).confidence;
          const double cs = predict(p, ds.samples[i].modalities, to_mask(s)).confidence;
          ++total;
          if (cs - ct < 0) {
            ++violations;
            if (s == 7u) ++by_removed[std::countr_zero(s ^ t)];
          }
        }
      }
    }
    CHECK(total == ev.records.size());
    CHECK(ev.vrr == static_cast<double>(violations) / static_cast<double>(total));
    CHECK(ev.violations_by_removed == by_removed);
    CHECK(ev.vrr > 0.0);
  }
  SUBCASE("sampled records at M=2 are exhaustive records") {
    const ModelSpec spec = test::small_spec({3, 4}, 3);
    ClassifierParams p = init_params(spec, 3);
    for (double& v : p.values) v *= 3.0;
    const Dataset ds = test::random_dataset(spec.modality_dims, 3, 40, 3);
    const auto ex = evaluate_vrr(p, ds, 4, VrrMode::kExhaustive);
    const auto sa = evaluate_vrr(p, ds, 4, VrrMode::kSampled);
    CHECK(ex.records.size() == 2 * ds.size());
    CHECK(sa.records.size() == ds.size());
    for (const auto& r : sa.records) {
      const auto it = std::find_if(ex.records.begin(), ex.records.end(), [&](const RankingRecord& e) {
        return e.sample_id == r.sample_id && e.t_mask == r.t_mask;
      });
      REQUIRE(it != ex.records.end());
      CHECK(*it == r);
    }
    CHECK(ex.vrr >= 0.0);
  }
  SUBCASE("repeats and capability limit") {
    const ModelSpec spec = test::small_spec({2, 2, 2}, 2);
    const ClassifierParams p = init_params(spec, 4);
    const Dataset ds = test::random_dataset(spec.modality_dims, 2, 10, 4);
    CHECK(evaluate_vrr(p, ds, 1, VrrMode::kSampled, 3).records.size() == 10 * 2 * 3);
    CHECK(evaluate_vrr(p, ds, 1, VrrMode::kSampled).records ==
          evaluate_vrr(p, ds, 1, VrrMode::kSampled).records);
    CHECK_THROWS_AS(evaluate_vrr(p, Dataset{{}, {2, 2, 2}, 2}, 1, VrrMode::kSampled), EmptyInputError);

    const ModelSpec wide = test::small_spec({1, 1, 1, 1, 1, 1}, 2);
    const Dataset wds = test::random_dataset(wide.modality_dims, 2, 4, 5);
    CHECK_THROWS_AS(evaluate_vrr(init_params(wide, 1), wds, 1, VrrMode::kExhaustive), CapabilityError);
    CHECK(evaluate_vrr(init_params(wide, 1), wds, 1, VrrMode::kSampled).records.size() == 4 * 5);
  }
}
