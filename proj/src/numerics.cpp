#include "cml/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cml/errors.hpp"
#include "cml/rng.hpp"

namespace cml {

namespace {

std::string shape_str(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  require(data_.size() == rows * cols, "matrix data length " + std::to_string(data_.size()) + " != " +
                                           shape_str(rows, cols));
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.front().size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, "ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix affine_forward(ConstMatrixView input, ConstMatrixView weights, std::span<const double> bias) {
  require(input.cols == weights.rows, "affine_forward: input " + shape_str(input.rows, input.cols) +
                                          " vs weights " + shape_str(weights.rows, weights.cols));
  require(bias.size() == weights.cols, "affine_forward: bias length " + std::to_string(bias.size()) +
                                           " vs " + std::to_string(weights.cols) + " outputs");
  Matrix out(input.rows, weights.cols);
  for (std::size_t i = 0; i < input.rows; ++i) {
    double* o = &out(i, 0);
    std::copy(bias.begin(), bias.end(), o);
    for (std::size_t k = 0; k < input.cols; ++k) {
      const double a = input(i, k);
      const double* w = &weights.data[k * weights.cols];
      for (std::size_t j = 0; j < weights.cols; ++j) o[j] += a * w[j];
    }
  }
  return out;
}

void affine_backward_accumulate(ConstMatrixView input, ConstMatrixView weights, ConstMatrixView upstream,
                                MatrixView grad_weights, std::span<double> grad_bias, Matrix* grad_input) {
  require(input.cols == weights.rows && upstream.rows == input.rows && upstream.cols == weights.cols,
          "affine_backward: input " + shape_str(input.rows, input.cols) + ", weights " +
              shape_str(weights.rows, weights.cols) + ", upstream " + shape_str(upstream.rows, upstream.cols));
  require(grad_weights.rows == weights.rows && grad_weights.cols == weights.cols && grad_bias.size() == weights.cols,
          "affine_backward: gradient buffers do not match weights");

  for (std::size_t i = 0; i < input.rows; ++i) {
    const std::span<const double> up = upstream.row(i);
    for (std::size_t j = 0; j < up.size(); ++j) grad_bias[j] += up[j];
    for (std::size_t k = 0; k < input.cols; ++k) {
      const double a = input(i, k);
      double* gw = &grad_weights.data[k * grad_weights.cols];
      for (std::size_t j = 0; j < up.size(); ++j) gw[j] += a * up[j];
    }
  }
  if (grad_input == nullptr) return;
  *grad_input = Matrix(input.rows, input.cols);
  for (std::size_t i = 0; i < input.rows; ++i) {
    const std::span<const double> up = upstream.row(i);
    for (std::size_t k = 0; k < input.cols; ++k) {
      const double* w = &weights.data[k * weights.cols];
      double acc = 0.0;
      for (std::size_t j = 0; j < up.size(); ++j) acc += w[j] * up[j];
      (*grad_input)(i, k) = acc;
    }
  }
}

AffineGrads affine_backward(ConstMatrixView input, ConstMatrixView weights, ConstMatrixView upstream) {
  AffineGrads g;
  g.grad_weights = Matrix(weights.rows, weights.cols);
  g.grad_bias.assign(weights.cols, 0.0);
  affine_backward_accumulate(input, weights, upstream, g.grad_weights.view(), g.grad_bias, &g.grad_input);
  return g;
}

Matrix relu(ConstMatrixView input) {
  Matrix out(input.rows, input.cols);
  for (std::size_t i = 0; i < input.data.size(); ++i) out.values()[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
  return out;
}

Matrix relu_backward(ConstMatrixView input, ConstMatrixView upstream) {
  require(input.rows == upstream.rows && input.cols == upstream.cols, "relu_backward: shape mismatch");
  Matrix out(input.rows, input.cols);
  for (std::size_t i = 0; i < input.data.size(); ++i) out.values()[i] = input.data[i] > 0.0 ? upstream.data[i] : 0.0;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw DimensionError("softmax needs at least two logits");
  if (!all_finite(logits)) throw NumericError("softmax: non-finite logit");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - peak);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

double nll_loss(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size())
    throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(probs.size()) +
                     " classes");
  return -std::log(probs[label]);
}

std::vector<double> nll_grad_logits(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size())
    throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(probs.size()) +
                     " classes");
  std::vector<double> g(probs.begin(), probs.end());
  g[label] -= 1.0;
  return g;
}

AdamState AdamState::for_parameters(std::size_t count, double learning_rate) {
  AdamState s;
  s.first_moment.assign(count, 0.0);
  s.second_moment.assign(count, 0.0);
  s.learning_rate = learning_rate;
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw DimensionError("adam_update: params " + std::to_string(params.size()) + ", grads " +
                         std::to_string(grads.size()) + ", moments " + std::to_string(state.first_moment.size()));
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

GradCheckResult grad_check(const ObjectiveFn& objective, std::span<const double> params,
                           const GradCheckOptions& options) {
  std::vector<double> theta(params.begin(), params.end());
  std::vector<double> analytic;
  const double base = objective(theta, &analytic);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss at the base point");
  if (analytic.size() != theta.size())
    throw DimensionError("grad_check: analytic gradient has " + std::to_string(analytic.size()) + " entries for " +
                         std::to_string(theta.size()) + " parameters");

  std::vector<std::size_t> indices(theta.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (theta.size() > options.full_check_limit) {
    Rng rng = derive_rng(options.seed, Stream::kGradCheck);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(std::min(options.sample_size, indices.size()));
    std::sort(indices.begin(), indices.end());
  }

  GradCheckResult result;
  for (std::size_t i : indices) {
    const double saved = theta[i];
    theta[i] = saved + options.step;
    const double up = objective(theta, nullptr);
    theta[i] = saved - options.step;
    const double down = objective(theta, nullptr);
    theta[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("grad_check: non-finite loss probing parameter " + std::to_string(i));
    const double numeric = (up - down) / (2.0 * options.step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]) + std::abs(numeric));
    if (result.checked == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
    ++result.checked;
  }
  result.passed = result.max_relative_error < options.tolerance;
  return result;
}

}  // namespace cml
