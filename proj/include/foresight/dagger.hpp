#pragma once

// Interactive post-training (DAgger with advantage relabeling).
//
// Rollouts execute the learner's greedy action with probability `mix` and the
// expert's otherwise; every visited state is labeled with the expert action.
// After a rollout terminates, each window t..t+H of executed actions is
// relabeled with its goal-distance reduction d_t - d_{t+H}, producing reflect
// examples for the policy and training data for the critic. Learner/expert
// agreement at each step labels the trigger data.

#include <cstdint>
#include <functional>
#include <vector>

#include "foresight/critic.hpp"
#include "foresight/env.hpp"
#include "foresight/expert.hpp"
#include "foresight/policy.hpp"
#include "foresight/trigger.hpp"

namespace foresight {

// Episode budget used throughout: T = 4 d0 + 8.
inline int episode_budget(int initial_distance) { return 4 * initial_distance + 8; }

struct RolloutOptions {
  // Fixed episode length; <= 0 selects episode_budget(d0) per task.
  int episode_length = 0;
  double mix = 0.5;  // probability of executing the learner action
  double failure_rate = 0.0;
};

struct StepRecord {
  PuzzleState state;
  Observation observation{};
  Observation goal{};
  Action executed;
  Action learner;
  Action expert;
  HiddenState hidden;
  int distance = 0;
};

struct RolloutRecord {
  int task_id = 0;
  int num_pieces = 0;
  std::vector<StepRecord> steps;
  bool reached_goal = false;
  Observation final_observation{};  // after the last step
};

RolloutRecord rollout(const PolicyModel& policy, const Expert& expert, const RolloutOptions& options, Rng& rng);

struct RelabeledData {
  std::vector<PolicyExample> propose;
  std::vector<PolicyExample> reflect;
  std::vector<CriticExample> critic;
  std::vector<TriggerExample> trigger;

  void append(RelabeledData&& other);
};

// Windows need t + H inside the record. With `goal_windows`, a record that
// reached the goal also yields the windows cut short by it, ending at the
// goal with fewer than H actions, as imagined trajectories do.
RelabeledData relabel(const RolloutRecord& record, int horizon, bool goal_windows = false);

// Propose-context examples along the expert's own (failure-free) trajectory.
std::vector<PolicyExample> expert_demonstration(const Expert& expert);

struct PostTrainConfig {
  int iters = 1;
  int trajectories = 200;  // per iteration
  int horizon = 5;
  bool goal_windows = false;  // see relabel
  RolloutOptions rollout;
  PolicyTrainOptions finetune;
  std::uint64_t seed = 0;
};

void validate(const PostTrainConfig& cfg);

struct IterationStats {
  int rollouts = 0;
  int steps = 0;
  int successes = 0;
  int learner_matches = 0;  // learner action equal to the expert action
  std::size_t dataset_size = 0;  // |D| after aggregation
  double finetune_loss = 0.0;
};

struct PostTrainResult {
  std::vector<PolicyExample> dataset;  // aggregated D, including the demonstrations
  std::vector<CriticExample> critic_data;
  std::vector<TriggerExample> trigger_data;
  std::vector<IterationStats> iterations;
};

// Returns task number `index` of the post-training distribution.
using TaskSampler = std::function<TaskInstance(int index)>;

// Runs `cfg.iters` rounds of collection, relabeling, aggregation and
// fine-tuning. `policy` must already be trained on `demonstrations`.
PostTrainResult posttrain(PolicyModel& policy, std::vector<PolicyExample> demonstrations,
                          const TaskSampler& sampler, const PostTrainConfig& cfg);

}  // namespace foresight
