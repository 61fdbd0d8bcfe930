#pragma once

// Token-level stochastic action policy.
//
// An action is decoded as two tokens: a verb (position 0) and then an object
// (position 1) conditioned on the chosen verb through a learned verb
// embedding. The same network serves two context kinds: Propose, which sees
// the current and goal observations, and Reflect, which additionally sees one
// candidate plan and its estimated advantage.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "foresight/env.hpp"
#include "foresight/nn.hpp"

namespace foresight {

enum class ContextKind : std::uint8_t { kPropose = 0, kReflect = 1 };

struct PolicyContext {
  ContextKind kind = ContextKind::kPropose;
  Observation current{};
  Observation goal{};
  int num_pieces = 0;
  // Reflect only: advantage estimate for `plan` and the plan itself (at most
  // `horizon` actions; shorter plans are zero-padded in the encoding).
  double advantage = 0.0;
  std::vector<Action> plan;
};

struct PolicyShape {
  int hidden = 64;
  int verb_embedding = 8;
  int horizon = 5;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

using HiddenState = std::vector<double>;

struct Proposal {
  Action action;
  double log_probability = 0.0;
  HiddenState hidden;
};

struct ScoredAction {
  Action action;
  double log_probability = 0.0;
};

struct PolicyExample {
  PolicyContext context;
  Action target;
};

struct PolicyTrainOptions {
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct PolicyTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;  // full-dataset loss after each epoch
};

// Number of policy forward evaluations (one per decoded position per
// context) performed by the calling thread since it started.
std::uint64_t policy_forward_passes();

class PolicyModel {
 public:
  PolicyModel() : PolicyModel(PolicyShape{}, 0) {}
  // Trunk initialized randomly from `seed`; output heads start at zero so the
  // initial policy is uniform.
  PolicyModel(PolicyShape shape, std::uint64_t seed);
  static PolicyModel zeros(PolicyShape shape);

  const PolicyShape& shape() const { return shape_; }
  int input_size() const;

  // Raw scores at `position` given the already generated `prefix` (verb ids).
  // Position 0 returns kNumVerbs values, position 1 returns num_pieces values.
  std::vector<double> logits(const PolicyContext& ctx, std::span<const int> prefix, int position) const;

  // Greedy decode: argmax verb, then argmax object given that verb.
  Proposal propose(const PolicyContext& ctx) const;

  // Hidden activation of the object branch for a given verb.
  HiddenState hidden_state(const PolicyContext& ctx, Verb verb) const;

  // The w most probable (verb, object) pairs by joint probability, ties broken
  // by action order. Length min(w, kNumVerbs * num_pieces).
  std::vector<ScoredAction> top_w(const PolicyContext& ctx, int w) const;

  // Mean over examples of CE(verb) + CE(object | target verb).
  double loss(std::span<const PolicyExample> batch) const;
  double loss_and_gradient(std::span<const PolicyExample> batch, nn::Tensors& grad) const;

  PolicyTrainReport train(std::span<const PolicyExample> data, const PolicyTrainOptions& options);

  nn::Tensors& parameters() { return params_; }
  const nn::Tensors& parameters() const { return params_; }

  // Feature vector fed to the trunk.
  nn::Vector features(const PolicyContext& ctx) const;

 private:
  struct Empty {};
  explicit PolicyModel(Empty) {}
  struct Trunk {
    nn::Vector h2;
  };
  Trunk trunk(const PolicyContext& ctx) const;
  double evaluate(std::span<const PolicyExample> batch, nn::Tensors* grad_out) const;
  nn::Vector verb_scores(const Trunk& t) const;
  nn::Vector object_hidden(const Trunk& t, int verb) const;
  nn::Vector object_scores(const nn::Vector& g, int num_pieces) const;

  PolicyShape shape_;
  nn::Tensors params_;
};

}  // namespace foresight
