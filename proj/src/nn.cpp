#include "foresight/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace foresight::nn {

Tensors zeros_like(const Tensors& like) {
  Tensors out;
  out.reserve(like.size());
  for (const auto& t : like) out.push_back(Matrix::Zero(t.rows(), t.cols()));
  return out;
}

Matrix he_init(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  const double scale = std::sqrt(2.0 / std::max(cols, 1));
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = scale * standard_normal(rng);
  return m;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - mx);
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Adam::Adam(const Tensors& params, AdamOptions options)
    : options_(options), m_(zeros_like(params)), v_(zeros_like(params)) {}

void Adam::step(Tensors& params, const Tensors& grads) {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
    if (options_.weight_decay > 0.0) params[i] *= 1.0 - options_.learning_rate * options_.weight_decay;
    params[i].array() -= options_.learning_rate * (m_[i].array() / c1) /
                         ((v_[i].array() / c2).sqrt() + options_.epsilon);
  }
}

bool all_finite(const Tensors& t) {
  return std::all_of(t.begin(), t.end(), [](const Matrix& m) { return m.allFinite(); });
}

std::vector<std::vector<int>> batches(int n, int batch_size, Rng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += batch_size)
    out.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
  return out;
}

Split split_indices(int n, double validation_fraction, Rng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  int n_val = static_cast<int>(std::lround(n * validation_fraction));
  n_val = std::clamp(n_val, n > 1 ? 1 : 0, std::max(n - 1, 0));
  Split s;
  s.validation.assign(order.begin(), order.begin() + n_val);
  s.train.assign(order.begin() + n_val, order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace foresight::nn
