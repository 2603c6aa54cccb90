#pragma once

// Multimodal classifier that accepts any nonempty subset of modalities.
//
// Each modality m has its own encoder  x_m -> affine -> ReLU -> affine -> z_m
// (d_m -> hidden -> latent). The latents of the modalities present in the mask
// are averaged and a shared head maps the fused latent to K logits. The head is
// linear by default; a positive head_hidden_dim inserts affine -> ReLU before
// the output layer.
// Absent modalities are never zero-filled; they simply do not take part.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cml/numerics.hpp"

namespace cml {

struct ModelSpec {
  std::vector<std::size_t> modality_dims;
  std::size_t hidden_dim = 128;
  std::size_t latent_dim = 64;
  std::size_t num_classes = 2;
  std::size_t head_hidden_dim = 0;  // 0: linear head

  std::size_t num_modalities() const { return modality_dims.size(); }
  // Throws SpecError: needs M >= 2, K >= 2 and every dimension >= 1.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

// Sorted set of modality indices presented to the model.
class SubsetMask {
 public:
  SubsetMask() = default;
  // Throws MaskError if empty, duplicated, or any index >= num_modalities.
  SubsetMask(std::vector<std::size_t> indices, std::size_t num_modalities);
  static SubsetMask full(std::size_t num_modalities);

  const std::vector<std::size_t>& indices() const { return present_; }
  std::size_t size() const { return present_.size(); }
  std::size_t num_modalities() const { return num_modalities_; }
  bool contains(std::size_t m) const;
  // Strict inclusion: every index of *this is in `other` and other is larger.
  bool is_proper_subset_of(const SubsetMask& other) const;
  SubsetMask without(std::size_t m) const;
  std::uint64_t bits() const;
  // Sorted indices joined by '+', e.g. "0+2".
  std::string to_string() const;

  bool operator==(const SubsetMask&) const = default;

 private:
  std::vector<std::size_t> present_;
  std::size_t num_modalities_ = 0;
};

// Location of one affine layer inside the flat parameter vector.
struct AffineSlot {
  std::size_t weight_offset = 0;
  std::size_t rows = 0;  // fan in
  std::size_t cols = 0;  // fan out
  std::size_t bias_offset = 0;

  ConstMatrixView weights(std::span<const double> flat) const { return {flat.subspan(weight_offset, rows * cols), rows, cols}; }
  MatrixView weights(std::span<double> flat) const { return {flat.subspan(weight_offset, rows * cols), rows, cols}; }
  std::span<const double> bias(std::span<const double> flat) const { return flat.subspan(bias_offset, cols); }
  std::span<double> bias(std::span<double> flat) const { return flat.subspan(bias_offset, cols); }
};

// Declaration order: for each modality {W1, b1, W2, b2}, then the optional
// head hidden layer {W, b}, then the head output layer {W, b}.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const ModelSpec& spec);

  const AffineSlot& encoder(std::size_t modality, std::size_t layer) const { return encoders_[2 * modality + layer]; }
  // Output layer of the head (fused latent or head hidden -> logits).
  const AffineSlot& head() const { return head_; }
  bool has_head_hidden() const { return has_head_hidden_; }
  const AffineSlot& head_hidden() const { return head_hidden_; }
  // Half-open range [begin, end) of modality m's encoder parameters.
  std::size_t encoder_begin(std::size_t modality) const { return encoder(modality, 0).weight_offset; }
  std::size_t encoder_end(std::size_t modality) const;
  std::size_t total() const { return total_; }
  // All slots in declaration order.
  std::vector<AffineSlot> slots() const;

 private:
  std::vector<AffineSlot> encoders_;
  AffineSlot head_hidden_;
  bool has_head_hidden_ = false;
  AffineSlot head_;
  std::size_t total_ = 0;
};

struct ClassifierParams {
  ModelSpec spec;
  ParamLayout layout;
  std::vector<double> values;

  ClassifierParams() = default;
  // Zero-initialised parameters with the shapes implied by spec.
  explicit ClassifierParams(ModelSpec s);
  bool operator==(const ClassifierParams& other) const { return spec == other.spec && values == other.values; }
};

struct Prediction {
  std::vector<double> probs;
  std::size_t predicted_class = 0;
  double confidence = 0.0;
};

// Argmax with ties to the lowest class index.
Prediction prediction_from_probs(std::vector<double> probs);

// Activations retained by forward() for the matching backward() call.
struct ForwardCache {
  struct Encoder {
    std::size_t modality = 0;
    Matrix input;
    Matrix pre_activation;
    Matrix hidden;
    Matrix latent;
  };
  SubsetMask mask;
  std::vector<Encoder> encoders;
  Matrix fused;
  Matrix head_pre_activation;  // empty for a linear head
  Matrix head_hidden;
  Matrix logits;
};

struct ForwardResult {
  Prediction prediction;
  ForwardCache cache;
};

// Glorot-uniform weights, zero biases; deterministic given seed.
ClassifierParams init_params(const ModelSpec& spec, std::uint64_t seed);

// `features` holds one vector per modality (all M of them); only the masked
// ones are read. Throws MaskError / DimensionError.
ForwardResult forward(const ClassifierParams& params, std::span<const std::vector<double>> features,
                      const SubsetMask& mask);
Prediction predict(const ClassifierParams& params, std::span<const std::vector<double>> features,
                   const SubsetMask& mask);

// Adds d(loss)/d(params) into grad (length layout.total()). Absent encoders are
// untouched. Throws StateError if the cache was not produced for `mask`.
void backward_accumulate(const ClassifierParams& params, const ForwardCache& cache,
                         std::span<const double> logit_grad, const SubsetMask& mask, std::span<double> grad);
std::vector<double> backward(const ClassifierParams& params, const ForwardCache& cache,
                             std::span<const double> logit_grad, const SubsetMask& mask);

struct Confidence {
  double value = 0.0;
  std::size_t predicted_class = 0;
};

Confidence confidence_of(const ClassifierParams& params, std::span<const std::vector<double>> features,
                         const SubsetMask& mask);

// Binary checkpoint; see README for the byte layout. Round trip is bit-exact.
void save_checkpoint(const std::string& path, const ClassifierParams& params);
ClassifierParams load_checkpoint(const std::string& path);

}  // namespace cml
