#include "cml/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cml/errors.hpp"
#include "cml/rng.hpp"

namespace cml {

void ModelSpec::validate() const {
  if (modality_dims.size() < 2)
    throw SpecError("model needs at least 2 modalities, got " + std::to_string(modality_dims.size()));
  if (modality_dims.size() > 63) throw SpecError("at most 63 modalities are supported");
  if (num_classes < 2) throw SpecError("model needs at least 2 classes, got " + std::to_string(num_classes));
  if (hidden_dim == 0 || latent_dim == 0) throw SpecError("hidden and latent dims must be >= 1");
  for (std::size_t m = 0; m < modality_dims.size(); ++m)
    if (modality_dims[m] == 0) throw SpecError("modality " + std::to_string(m) + " has dimension 0");
}

SubsetMask::SubsetMask(std::vector<std::size_t> indices, std::size_t num_modalities)
    : present_(std::move(indices)), num_modalities_(num_modalities) {
  if (present_.empty()) throw MaskError("modality mask is empty");
  std::sort(present_.begin(), present_.end());
  if (std::adjacent_find(present_.begin(), present_.end()) != present_.end())
    throw MaskError("modality mask has a duplicate index");
  if (present_.back() >= num_modalities)
    throw MaskError("modality index " + std::to_string(present_.back()) + " out of range for " +
                    std::to_string(num_modalities) + " modalities");
}

SubsetMask SubsetMask::full(std::size_t num_modalities) {
  std::vector<std::size_t> all(num_modalities);
  for (std::size_t m = 0; m < num_modalities; ++m) all[m] = m;
  return SubsetMask(std::move(all), num_modalities);
}

bool SubsetMask::contains(std::size_t m) const { return std::binary_search(present_.begin(), present_.end(), m); }

bool SubsetMask::is_proper_subset_of(const SubsetMask& other) const {
  return size() < other.size() && std::includes(other.present_.begin(), other.present_.end(), present_.begin(), present_.end());
}

SubsetMask SubsetMask::without(std::size_t m) const {
  std::vector<std::size_t> rest;
  for (std::size_t i : present_)
    if (i != m) rest.push_back(i);
  return SubsetMask(std::move(rest), num_modalities_);
}

std::uint64_t SubsetMask::bits() const {
  std::uint64_t b = 0;
  for (std::size_t i : present_) b |= std::uint64_t{1} << i;
  return b;
}

std::string SubsetMask::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < present_.size(); ++i) {
    if (i) s += '+';
    s += std::to_string(present_[i]);
  }
  return s;
}

ParamLayout::ParamLayout(const ModelSpec& spec) {
  std::size_t offset = 0;
  auto place = [&](std::size_t rows, std::size_t cols) {
    AffineSlot slot{offset, rows, cols, offset + rows * cols};
    offset += rows * cols + cols;
    return slot;
  };
  for (std::size_t d : spec.modality_dims) {
    encoders_.push_back(place(d, spec.hidden_dim));
    encoders_.push_back(place(spec.hidden_dim, spec.latent_dim));
  }
  has_head_hidden_ = spec.head_hidden_dim > 0;
  if (has_head_hidden_) head_hidden_ = place(spec.latent_dim, spec.head_hidden_dim);
  head_ = place(has_head_hidden_ ? spec.head_hidden_dim : spec.latent_dim, spec.num_classes);
  total_ = offset;
}

std::size_t ParamLayout::encoder_end(std::size_t modality) const {
  const AffineSlot& last = encoder(modality, 1);
  return last.bias_offset + last.cols;
}

std::vector<AffineSlot> ParamLayout::slots() const {
  std::vector<AffineSlot> all = encoders_;
  if (has_head_hidden_) all.push_back(head_hidden_);
  all.push_back(head_);
  return all;
}

ClassifierParams::ClassifierParams(ModelSpec s) : spec(std::move(s)) {
  spec.validate();
  layout = ParamLayout(spec);
  values.assign(layout.total(), 0.0);
}

Prediction prediction_from_probs(std::vector<double> probs) {
  Prediction p;
  p.predicted_class = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  p.confidence = probs[p.predicted_class];
  p.probs = std::move(probs);
  return p;
}

ClassifierParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  ClassifierParams params(spec);
  Rng rng = derive_rng(seed, Stream::kInit);
  for (const AffineSlot& slot : params.layout.slots()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(slot.rows + slot.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : slot.weights(std::span<double>(params.values)).data) w = dist(rng);
  }
  return params;
}

ForwardResult forward(const ClassifierParams& params, std::span<const std::vector<double>> features,
                      const SubsetMask& mask) {
  const ModelSpec& spec = params.spec;
  if (mask.size() == 0) throw MaskError("forward: empty modality mask");
  if (mask.num_modalities() != spec.num_modalities())
    throw MaskError("forward: mask built for " + std::to_string(mask.num_modalities()) + " modalities, model has " +
                    std::to_string(spec.num_modalities()));
  if (features.size() != spec.num_modalities())
    throw DimensionError("forward: sample has " + std::to_string(features.size()) + " modalities, model expects " +
                         std::to_string(spec.num_modalities()));

  const std::span<const double> theta(params.values);
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.mask = mask;
  cache.fused = Matrix(1, spec.latent_dim);
  for (std::size_t m : mask.indices()) {
    if (features[m].size() != spec.modality_dims[m])
      throw DimensionError("forward: modality " + std::to_string(m) + " has " + std::to_string(features[m].size()) +
                           " features, expected " + std::to_string(spec.modality_dims[m]));
    const AffineSlot& l1 = params.layout.encoder(m, 0);
    const AffineSlot& l2 = params.layout.encoder(m, 1);
    ForwardCache::Encoder enc;
    enc.modality = m;
    enc.input = Matrix::row_vector(features[m]);
    enc.pre_activation = affine_forward(enc.input, l1.weights(theta), l1.bias(theta));
    enc.hidden = relu(enc.pre_activation);
    enc.latent = affine_forward(enc.hidden, l2.weights(theta), l2.bias(theta));
    for (std::size_t j = 0; j < spec.latent_dim; ++j) cache.fused(0, j) += enc.latent(0, j);
    cache.encoders.push_back(std::move(enc));
  }
  const double count = static_cast<double>(mask.size());
  for (double& v : cache.fused.values()) v /= count;

  const Matrix* head_input = &cache.fused;
  if (params.layout.has_head_hidden()) {
    const AffineSlot& hh = params.layout.head_hidden();
    cache.head_pre_activation = affine_forward(cache.fused, hh.weights(theta), hh.bias(theta));
    cache.head_hidden = relu(cache.head_pre_activation);
    head_input = &cache.head_hidden;
  }
  const AffineSlot& head = params.layout.head();
  cache.logits = affine_forward(*head_input, head.weights(theta), head.bias(theta));
  result.prediction = prediction_from_probs(softmax(cache.logits.values()));
  return result;
}

Prediction predict(const ClassifierParams& params, std::span<const std::vector<double>> features,
                   const SubsetMask& mask) {
  return forward(params, features, mask).prediction;
}

void backward_accumulate(const ClassifierParams& params, const ForwardCache& cache,
                         std::span<const double> logit_grad, const SubsetMask& mask, std::span<double> grad) {
  if (!(cache.mask == mask) || cache.encoders.size() != mask.size())
    throw StateError("backward: cache was produced for mask " + cache.mask.to_string() + ", not " + mask.to_string());
  if (grad.size() != params.layout.total())
    throw DimensionError("backward: gradient buffer has " + std::to_string(grad.size()) + " entries, expected " +
                         std::to_string(params.layout.total()));
  if (logit_grad.size() != params.spec.num_classes)
    throw DimensionError("backward: logit gradient has wrong length");

  const std::span<const double> theta(params.values);
  const AffineSlot& head = params.layout.head();
  const Matrix upstream = Matrix::row_vector(logit_grad);
  Matrix fused_grad;
  if (params.layout.has_head_hidden()) {
    const AffineSlot& hh = params.layout.head_hidden();
    Matrix hidden_grad;
    affine_backward_accumulate(cache.head_hidden, head.weights(theta), upstream, head.weights(grad), head.bias(grad),
                               &hidden_grad);
    const Matrix pre_grad = relu_backward(cache.head_pre_activation, hidden_grad);
    affine_backward_accumulate(cache.fused, hh.weights(theta), pre_grad, hh.weights(grad), hh.bias(grad),
                               &fused_grad);
  } else {
    affine_backward_accumulate(cache.fused, head.weights(theta), upstream, head.weights(grad), head.bias(grad),
                               &fused_grad);
  }

  // The mean fusion hands each present encoder 1/|mask| of the fused gradient.
  const double share = 1.0 / static_cast<double>(mask.size());
  Matrix latent_grad = fused_grad;
  for (double& v : latent_grad.values()) v *= share;

  for (const ForwardCache::Encoder& enc : cache.encoders) {
    const AffineSlot& l1 = params.layout.encoder(enc.modality, 0);
    const AffineSlot& l2 = params.layout.encoder(enc.modality, 1);
    Matrix hidden_grad;
    affine_backward_accumulate(enc.hidden, l2.weights(theta), latent_grad, l2.weights(grad), l2.bias(grad),
                               &hidden_grad);
    const Matrix pre_grad = relu_backward(enc.pre_activation, hidden_grad);
    affine_backward_accumulate(enc.input, l1.weights(theta), pre_grad, l1.weights(grad), l1.bias(grad), nullptr);
  }
}

std::vector<double> backward(const ClassifierParams& params, const ForwardCache& cache,
                             std::span<const double> logit_grad, const SubsetMask& mask) {
  std::vector<double> grad(params.layout.total(), 0.0);
  backward_accumulate(params, cache, logit_grad, mask, grad);
  return grad;
}

Confidence confidence_of(const ClassifierParams& params, std::span<const std::vector<double>> features,
                         const SubsetMask& mask) {
  const Prediction p = predict(params, features, mask);
  return {p.confidence, p.predicted_class};
}

}  // namespace cml
