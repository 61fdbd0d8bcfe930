#pragma once

// Minimal dense-network toolkit shared by the policy, critic and trigger.
// Parameters are held as an ordered list of Eigen matrices so that optimizers,
// finite-difference checks and checkpoints can treat every model uniformly.

#include <Eigen/Dense>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "foresight/rng.hpp"

namespace foresight {

// Raised when a training loss or gradient stops being finite.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace foresight

namespace foresight::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Tensors = std::vector<Matrix>;

// Same shapes as `like`, all zeros.
Tensors zeros_like(const Tensors& like);

// He-style Gaussian initialization scaled by fan-in.
Matrix he_init(int rows, int cols, Rng& rng);

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }
inline Matrix relu_mask(const Matrix& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }

// Numerically stable softmax / log-softmax of a vector.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(sigmoid(x)) and log(1 - sigmoid(x)) without cancellation.
inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
inline double log_one_minus_sigmoid(double x) { return log_sigmoid(-x); }

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled (AdamW-style) decay; 0 gives plain Adam.
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(const Tensors& params, AdamOptions options);
  void step(Tensors& params, const Tensors& grads);

 private:
  AdamOptions options_;
  Tensors m_, v_;
  long t_ = 0;
};

bool all_finite(const Tensors& t);

// Mini-batch index plan for one epoch.
std::vector<std::vector<int>> batches(int n, int batch_size, Rng& rng);

// Deterministic train/validation split with the given validation fraction.
struct Split {
  std::vector<int> train;
  std::vector<int> validation;
};
Split split_indices(int n, double validation_fraction, Rng& rng);

}  // namespace foresight::nn
