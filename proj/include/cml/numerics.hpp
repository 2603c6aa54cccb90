#pragma once

// Dense row-major linear algebra and the layer primitives the classifier is
// assembled from. Everything is double precision and pure: identical inputs
// give bit-identical outputs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cml {

// Non-owning read-only view of a row-major matrix.
struct ConstMatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return data.subspan(r * cols, cols); }
};

// Non-owning writable view of a row-major matrix.
struct MatrixView {
  std::span<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  operator ConstMatrixView() const { return {data, rows, cols}; }
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws DimensionError unless values.size() == rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  // Convenience for literals in tests: {{1, 2}, {3, 4}}.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  ConstMatrixView view() const { return {data_, rows_, cols_}; }
  MatrixView view() { return {data_, rows_, cols_}; }
  operator ConstMatrixView() const { return view(); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out[i,j] = sum_k input[i,k] * weights[k,j] + bias[j]
Matrix affine_forward(ConstMatrixView input, ConstMatrixView weights, std::span<const double> bias);

struct AffineGrads {
  Matrix grad_input;
  Matrix grad_weights;
  std::vector<double> grad_bias;
};

AffineGrads affine_backward(ConstMatrixView input, ConstMatrixView weights, ConstMatrixView upstream);

// Accumulating form used by the model: adds into grad_weights / grad_bias and,
// when grad_input is non-null, overwrites it with the input gradient.
void affine_backward_accumulate(ConstMatrixView input, ConstMatrixView weights, ConstMatrixView upstream,
                                MatrixView grad_weights, std::span<double> grad_bias, Matrix* grad_input);

Matrix relu(ConstMatrixView input);
// upstream * 1[input > 0]; the subgradient at exactly 0 is 0.
Matrix relu_backward(ConstMatrixView input, ConstMatrixView upstream);

// Max-subtracted softmax. Throws NumericError on a non-finite logit and
// DimensionError when fewer than two logits are given.
std::vector<double> softmax(std::span<const double> logits);

// -ln probs[label]. Throws IndexError for an out-of-range label.
double nll_loss(std::span<const double> probs, std::size_t label);
// Gradient of nll_loss(softmax(z), label) with respect to z: probs - onehot(label).
std::vector<double> nll_grad_logits(std::span<const double> probs, std::size_t label);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_parameters(std::size_t count, double learning_rate = 1e-3);
};

// Bias-corrected Adam step, in place. Throws DimensionError on shape mismatch.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state);

// Objective for gradient checking: returns the loss at `params` and, when
// `grad` is non-null, writes the analytic gradient into it (resized as needed).
using ObjectiveFn = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Above this many parameters a random subsample of `sample_size` is checked.
  std::size_t full_check_limit = 10000;
  std::size_t sample_size = 2000;
  std::uint64_t seed = 0;
};

// Central differences against the analytic gradient. Relative error per
// parameter is |a - n| / max(1, |a| + |n|). Throws NumericError if any probe
// loss is non-finite.
GradCheckResult grad_check(const ObjectiveFn& objective, std::span<const double> params,
                           const GradCheckOptions& options = {});

bool all_finite(std::span<const double> values);

}  // namespace cml
