#pragma once

// Advantage critics. A learned regressor estimates the goal-distance
// reduction from (current, predicted future, goal) observations; the oracle
// variant reads exact distances from the expert using the shadow states.

#include <cstdint>
#include <span>
#include <vector>

#include "foresight/env.hpp"
#include "foresight/expert.hpp"
#include "foresight/nn.hpp"

namespace foresight {

struct CriticExample {
  Observation current{};
  Observation future{};
  Observation goal{};
  double label = 0.0;
};

struct CriticTrainOptions {
  int max_epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  int patience = 10;
  // Labels are clipped to [-label_clip, label_clip]; the default matches 2H
  // for H = 5.
  double label_clip = 10.0;
  std::uint64_t seed = 0;
};

struct CriticTrainReport {
  std::vector<double> train_mse;       // per epoch
  std::vector<double> validation_mse;  // per epoch
  double best_validation_mse = 0.0;
  int best_epoch = -1;                 // -1: initial parameters were best
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  double validation_label_variance = 0.0;
};

class CriticModel {
 public:
  explicit CriticModel(int hidden = 64, std::uint64_t seed = 0);
  static CriticModel zeros(int hidden = 64);

  int hidden() const { return static_cast<int>(params_[0].rows()); }

  double predict(const Observation& current, const Observation& future, const Observation& goal) const;
  // Span overload; throws std::invalid_argument unless every span has
  // kObservationSize entries.
  double predict(std::span<const double> current, std::span<const double> future,
                 std::span<const double> goal) const;

  // Mean squared error over `batch` (labels clipped by `label_clip`).
  double loss(std::span<const CriticExample> batch, double label_clip) const;
  double loss_and_gradient(std::span<const CriticExample> batch, double label_clip, nn::Tensors& grad) const;

  CriticTrainReport train(std::span<const CriticExample> data, const CriticTrainOptions& options);

  nn::Tensors& parameters() { return params_; }
  const nn::Tensors& parameters() const { return params_; }

 private:
  struct Empty {};
  explicit CriticModel(Empty) {}
  double evaluate(std::span<const CriticExample> batch, double label_clip, nn::Tensors* grad) const;
  nn::Tensors params_;
};

// Everything a critic may look at when scoring one imagined trajectory.
struct CriticQuery {
  const Observation& current;
  const Observation& predicted;
  const Observation& goal;
  const PuzzleState& start_state;
  const PuzzleState& end_state;
};

class Critic {
 public:
  virtual ~Critic() = default;
  virtual double estimate(const CriticQuery& q) const = 0;
};

class LearnedCritic final : public Critic {
 public:
  explicit LearnedCritic(const CriticModel& model) : model_(&model) {}
  double estimate(const CriticQuery& q) const override {
    return model_->predict(q.current, q.predicted, q.goal);
  }

 private:
  const CriticModel* model_;
};

class OracleCritic final : public Critic {
 public:
  explicit OracleCritic(const Expert& expert) : expert_(&expert) {}
  double estimate(const CriticQuery& q) const override {
    return oracle_advantage(q.start_state, q.end_state);
  }
  int oracle_advantage(const PuzzleState& from, const PuzzleState& to) const {
    return advantage(expert_->goal_distance(from), expert_->goal_distance(to));
  }

 private:
  const Expert* expert_;
};

}  // namespace foresight
