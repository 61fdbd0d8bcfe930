#include "foresight/dagger.hpp"

#include <stdexcept>

namespace foresight {

RolloutRecord rollout(const PolicyModel& policy, const Expert& expert, const RolloutOptions& options, Rng& rng) {
  const TaskInstance& task = expert.task();
  auto start = reset(task);
  RolloutRecord record;
  record.task_id = task.task_id;
  record.num_pieces = task.num_pieces;
  PuzzleState state = start.state;
  Observation obs = start.observation;
  int distance = expert.goal_distance(state);
  const int budget = options.episode_length > 0 ? options.episode_length : episode_budget(distance);

  for (int t = 0; t < budget && distance > 0; ++t) {
    PolicyContext ctx;
    ctx.current = obs;
    ctx.goal = start.goal;
    ctx.num_pieces = task.num_pieces;
    Proposal learner = policy.propose(ctx);
    const Action expert_action = expert.expert_action(state);
    const bool use_learner = uniform01(rng) < options.mix;
    const Action executed = use_learner ? learner.action : expert_action;

    record.steps.push_back(StepRecord{state, obs, start.goal, executed, learner.action, expert_action,
                                      std::move(learner.hidden), distance});
    StepResult r = step(state, task, executed, rng, options.failure_rate);
    state = r.next_state;
    obs = r.observation;
    distance = expert.goal_distance(state);
  }
  record.reached_goal = distance == 0;
  record.final_observation = obs;
  return record;
}

void RelabeledData::append(RelabeledData&& other) {
  auto move_into = [](auto& dst, auto& src) {
    dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
  };
  move_into(propose, other.propose);
  move_into(reflect, other.reflect);
  move_into(critic, other.critic);
  move_into(trigger, other.trigger);
}

RelabeledData relabel(const RolloutRecord& record, int horizon, bool goal_windows) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  RelabeledData out;
  const auto& steps = record.steps;
  const int len = static_cast<int>(steps.size());
  for (int t = 0; t < len; ++t) {
    const StepRecord& s = steps[t];
    PolicyContext ctx;
    ctx.current = s.observation;
    ctx.goal = s.goal;
    ctx.num_pieces = record.num_pieces;
    out.propose.push_back(PolicyExample{ctx, s.expert});
    out.trigger.push_back(TriggerExample{s.hidden, s.learner == s.expert ? 1 : 0});

    const bool full = t + horizon < len;
    if (!full && !(goal_windows && record.reached_goal)) continue;
    const int end = full ? t + horizon : len;
    const int later_distance = full ? steps[end].distance : 0;
    const Observation& later_obs = full ? steps[end].observation : record.final_observation;
    const int delta = advantage(s.distance, later_distance);
    PolicyContext rctx = ctx;
    rctx.kind = ContextKind::kReflect;
    rctx.advantage = delta;
    for (int j = t; j < end; ++j) rctx.plan.push_back(steps[j].executed);
    out.reflect.push_back(PolicyExample{std::move(rctx), s.expert});
    out.critic.push_back(CriticExample{s.observation, later_obs, s.goal, static_cast<double>(delta)});
  }
  return out;
}

std::vector<PolicyExample> expert_demonstration(const Expert& expert) {
  const TaskInstance& task = expert.task();
  auto start = reset(task);
  std::vector<PolicyExample> out;
  PuzzleState state = start.state;
  while (expert.goal_distance(state) > 0) {
    PolicyContext ctx;
    ctx.current = encode(state, task);
    ctx.goal = start.goal;
    ctx.num_pieces = task.num_pieces;
    const Action a = expert.expert_action(state);
    out.push_back(PolicyExample{std::move(ctx), a});
    state = apply_action(state, task, a);
  }
  return out;
}

void validate(const PostTrainConfig& cfg) {
  if (cfg.iters < 0) throw std::invalid_argument("iters must be >= 0");
  if (cfg.trajectories < 1) throw std::invalid_argument("trajectories per iteration must be >= 1");
  if (cfg.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(cfg.rollout.mix >= 0.0 && cfg.rollout.mix <= 1.0)) throw std::invalid_argument("mix must be in [0,1]");
  if (!(cfg.rollout.failure_rate >= 0.0 && cfg.rollout.failure_rate <= 1.0))
    throw std::invalid_argument("failure rate must be in [0,1]");
  if (cfg.rollout.episode_length > 0 && cfg.rollout.episode_length < cfg.horizon)
    throw std::invalid_argument("episode length must be >= horizon");
}

PostTrainResult posttrain(PolicyModel& policy, std::vector<PolicyExample> demonstrations,
                          const TaskSampler& sampler, const PostTrainConfig& cfg) {
  validate(cfg);
  PostTrainResult result;
  result.dataset = std::move(demonstrations);
  for (int iter = 0; iter < cfg.iters; ++iter) {
    IterationStats stats;
    RelabeledData collected;
    for (int n = 0; n < cfg.trajectories; ++n) {
      const TaskInstance task = sampler(iter * cfg.trajectories + n);
      Expert expert(task);
      Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(iter), static_cast<std::uint64_t>(n)}));
      const RolloutRecord rec = rollout(policy, expert, cfg.rollout, rng);
      ++stats.rollouts;
      stats.steps += static_cast<int>(rec.steps.size());
      stats.successes += rec.reached_goal;
      for (const auto& s : rec.steps) stats.learner_matches += s.learner == s.expert;
      collected.append(relabel(rec, cfg.horizon, cfg.goal_windows));
    }
    auto& d = result.dataset;
    d.insert(d.end(), std::make_move_iterator(collected.propose.begin()),
             std::make_move_iterator(collected.propose.end()));
    d.insert(d.end(), std::make_move_iterator(collected.reflect.begin()),
             std::make_move_iterator(collected.reflect.end()));
    result.critic_data.insert(result.critic_data.end(), collected.critic.begin(), collected.critic.end());
    result.trigger_data.insert(result.trigger_data.end(), collected.trigger.begin(), collected.trigger.end());
    stats.dataset_size = d.size();

    PolicyTrainOptions opts = cfg.finetune;
    opts.seed = derive_seed(cfg.seed, {0xF17E, static_cast<std::uint64_t>(iter)});
    stats.finetune_loss = policy.train(d, opts).final_loss;
    result.iterations.push_back(stats);
  }
  return result;
}

}  // namespace foresight
