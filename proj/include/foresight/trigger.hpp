#pragma once

// Early-exit trigger: a two-layer classifier over the policy's final hidden
// activation that estimates whether the greedy proposal is already correct.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "foresight/nn.hpp"
#include "foresight/policy.hpp"

namespace foresight {

struct TriggerExample {
  HiddenState hidden;
  int label = 0;  // 1 iff the proposal matched the expert action
};

struct TriggerTrainOptions {
  int max_epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  int patience = 10;
  // Weight on the y = 1 term of the loss. Unset: N0 / N1 of the training set.
  std::optional<double> positive_weight;
  std::uint64_t seed = 0;
};

struct TriggerTrainReport {
  std::vector<double> train_loss;           // per epoch
  std::vector<double> validation_accuracy;  // per epoch
  double positive_weight = 1.0;
  double best_validation_accuracy = 0.0;
  double validation_recall_incorrect = 0.0;  // recall on y = 0 at p < 0.5
  std::vector<int> validation_indices;       // into the training data
};

class TriggerModel {
 public:
  explicit TriggerModel(int input = 64, int hidden = 64, std::uint64_t seed = 0);
  static TriggerModel zeros(int input = 64, int hidden = 64);

  int input_size() const { return static_cast<int>(params_[0].cols()); }

  // sigma(ReLU(e W1 + b1) W2 + b2); throws on length mismatch.
  double confidence(std::span<const double> hidden) const;

  // -(1/N) sum(w y log p + (1 - y) log(1 - p)).
  double loss(std::span<const TriggerExample> batch, double positive_weight) const;
  double loss_and_gradient(std::span<const TriggerExample> batch, double positive_weight, nn::Tensors& grad) const;

  // Early-stops on validation accuracy. Throws std::invalid_argument when one
  // class is missing.
  TriggerTrainReport train(std::span<const TriggerExample> data, const TriggerTrainOptions& options);

  nn::Tensors& parameters() { return params_; }
  const nn::Tensors& parameters() const { return params_; }

 private:
  struct Empty {};
  explicit TriggerModel(Empty) {}
  double evaluate(std::span<const TriggerExample> batch, double positive_weight, nn::Tensors* grad) const;
  nn::Tensors params_;
};

// True iff reflection should run: confidence strictly below the threshold.
inline bool should_reflect(double confidence, double threshold) { return confidence < threshold; }

// Class-balancing weight N0 / N1 for the positive term.
double balancing_weight(std::span<const TriggerExample> data);

class UnachievableRecallError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Smallest threshold whose recall on incorrect proposals (y = 0 with
// confidence < threshold) reaches `min_recall`.
double calibrate_threshold(std::span<const double> confidences, std::span<const int> labels, double min_recall);

// Fraction of y = 0 samples with confidence < threshold.
double incorrect_recall(std::span<const double> confidences, std::span<const int> labels, double threshold);

}  // namespace foresight
