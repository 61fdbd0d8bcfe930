#pragma once

// Multi-path reflection.
//
// 1. beam_futures imagines W trajectories of up to H steps, expanding the
//    policy's top-W actions per beam and keeping the W best continuations by
//    cumulative log-probability.
// 2. score_and_stratify scores each trajectory with a critic and splits the
//    streams into a base set (top N), promising references (advantage >= sigma)
//    and suboptimal references.
// 3. reflect_decide decodes one revised action token by token. Every stream
//    conditions on its own (advantage, plan) reflect context; per position the
//    base logits are combined with each reference by complementary
//    (f_k + a1 f_l) or contrastive ((1 + a2) f_k - a2 f_l) decoding, the choice
//    for suboptimal references being gated by the Jensen-Shannon divergence of
//    the two streams' distributions, and all pair distributions are averaged.

#include <cstdint>
#include <span>
#include <vector>

#include "foresight/critic.hpp"
#include "foresight/dynamics.hpp"
#include "foresight/env.hpp"
#include "foresight/policy.hpp"

namespace foresight {

enum class SelectionRule : std::uint8_t { kArgmax = 0, kSample = 1 };

struct ReflectConfig {
  int horizon = 5;
  int beam_width = 3;
  int base_size = 2;
  double sigma = 0.5;   // advantage threshold between promising and suboptimal refs
  double gamma = 0.3;   // divergence threshold for suboptimal refs
  double alpha1 = 0.5;  // complementary weight
  double alpha2 = 0.5;  // contrastive weight
  SelectionRule selection = SelectionRule::kArgmax;
};

// Throws std::invalid_argument when a field is out of range.
void validate(const ReflectConfig& cfg);

struct ImaginedTrajectory {
  // At most H actions; fewer when the goal was reached in imagination.
  std::vector<Action> actions;
  std::vector<Observation> predicted;
  PuzzleState final_state;
  double log_probability = 0.0;
  double advantage = 0.0;
  bool reached_goal = false;
};

struct BeamStart {
  const TaskInstance& task;
  const PuzzleState& state;
  const Observation& current;
  const Observation& goal;
};

// Leaves sorted by cumulative log-probability (descending, stable).
std::vector<ImaginedTrajectory> beam_futures(const BeamStart& start, const PolicyModel& policy,
                                             const ImaginationConfig& dynamics, int width, int horizon,
                                             std::uint64_t seed);

struct StreamSets {
  std::vector<int> base;        // in rank order
  std::vector<int> promising;   // in rank order
  std::vector<int> suboptimal;  // in rank order
};

// Ranks by advantage (descending, index tie-break) and partitions.
StreamSets stratify(std::span<const double> advantages, int base_size, double sigma);

// Fills each trajectory's advantage from `critic`, then stratifies.
StreamSets score_and_stratify(std::vector<ImaginedTrajectory>& trajectories, const BeamStart& start,
                              const Critic& critic, int base_size, double sigma);

// Base-2 Jensen-Shannon divergence; throws on mismatched lengths.
double jsd(std::span<const double> p, std::span<const double> q);

using Logits = std::vector<double>;

struct Aggregation {
  std::vector<double> distribution;
  std::vector<double> divergences;  // one per (base, suboptimal) pair
  int contrastive_pairs = 0;
};

Aggregation aggregate_position(std::span<const Logits> base, std::span<const Logits> promising,
                               std::span<const Logits> suboptimal, const ReflectConfig& cfg);

struct ReflectDiagnostics {
  int streams = 0;
  std::vector<double> advantages;  // per stream, in beam order
  int base = 0;
  int promising = 0;
  int suboptimal = 0;
  std::vector<double> divergences;
  int contrastive_pairs = 0;
  bool legal = true;  // decoded action was valid in the current state
};

struct ReflectOutcome {
  Action action;
  ReflectDiagnostics diagnostics;
  std::vector<ImaginedTrajectory> trajectories;
};

// Token-by-token aggregated decoding over already scored trajectories.
ReflectOutcome decode_reflection(const BeamStart& start, std::vector<ImaginedTrajectory> trajectories,
                                 const StreamSets& sets, const PolicyModel& policy, const ReflectConfig& cfg,
                                 std::uint64_t seed);

// Full pipeline: beam_futures -> score_and_stratify -> decode_reflection.
ReflectOutcome reflect_decide(const BeamStart& start, const PolicyModel& policy, const Critic& critic,
                              const ImaginationConfig& dynamics, const ReflectConfig& cfg, std::uint64_t seed);

// First action of the highest-probability trajectory.
Action select_best_of_n(std::span<const ImaginedTrajectory> trajectories);
// Most frequent first action; ties go to the larger summed log-probability.
Action select_majority(std::span<const ImaginedTrajectory> trajectories);

}  // namespace foresight
