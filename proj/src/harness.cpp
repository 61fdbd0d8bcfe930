#include "foresight/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "foresight/dagger.hpp"
#include "foresight/expert.hpp"
#include "foresight/io.hpp"

namespace foresight {

namespace {

constexpr std::pair<AgentKind, std::string_view> kKindNames[] = {
    {AgentKind::kExpert, "expert"},
    {AgentKind::kRandom, "random"},
    {AgentKind::kProposal, "bc"},
    {AgentKind::kSingleTraj, "single_traj"},
    {AgentKind::kBestOfN, "best_of_n"},
    {AgentKind::kMajorityVote, "majority_vote"},
    {AgentKind::kMultiPath, "multipath"},
    {AgentKind::kMultiPathTrigger, "multipath_trigger"},
};

bool uses_policy(AgentKind kind) { return kind != AgentKind::kExpert && kind != AgentKind::kRandom; }

bool uses_beam(AgentKind kind) {
  return kind == AgentKind::kSingleTraj || kind == AgentKind::kBestOfN || kind == AgentKind::kMajorityVote ||
         kind == AgentKind::kMultiPath || kind == AgentKind::kMultiPathTrigger;
}

bool uses_critic(AgentKind kind) {
  return kind == AgentKind::kSingleTraj || kind == AgentKind::kMultiPath || kind == AgentKind::kMultiPathTrigger;
}

// One-step oracle advantage of `a` in `state`; invalid actions leave the
// configuration unchanged and so score 0.
int one_step_advantage(const Expert& expert, const PuzzleState& state, const Action& a) {
  if (!is_valid(state, expert.task(), a)) return 0;
  const PuzzleState next = apply_action(state, expert.task(), a);
  return advantage(expert.goal_distance(state), expert.goal_distance(next));
}

void check_models(const Models& models, const AgentMode& mode) {
  if (uses_policy(mode.kind) && models.policy == nullptr)
    throw std::invalid_argument("mode '" + mode.label + "' needs a policy");
  if (uses_critic(mode.kind) && mode.critic == CriticMode::kLearned && models.critic == nullptr)
    throw std::invalid_argument("mode '" + mode.label + "' needs a critic");
  if (mode.kind == AgentKind::kMultiPathTrigger && models.trigger == nullptr)
    throw std::invalid_argument("mode '" + mode.label + "' needs a trigger");
  if (uses_beam(mode.kind)) {
    validate(mode.reflect);
    validate(mode.dynamics);
  }
}

}  // namespace

std::string_view agent_kind_name(AgentKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  throw std::invalid_argument("unknown agent kind");
}

AgentKind parse_agent_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown agent kind: " + std::string(name));
}

EpisodeRecord run_episode(const TaskInstance& task, const Models& models, const AgentMode& mode,
                          const EpisodeOptions& options) {
  check_models(models, mode);
  const Expert expert(task);
  const OracleCritic oracle(expert);
  std::optional<LearnedCritic> learned;
  if (models.critic != nullptr) learned.emplace(*models.critic);
  const Critic* critic = mode.critic == CriticMode::kOracle ? static_cast<const Critic*>(&oracle)
                                                            : (learned ? &*learned : nullptr);

  ReflectConfig reflect = mode.reflect;
  if (mode.kind == AgentKind::kSingleTraj) {
    reflect.beam_width = 1;
    reflect.base_size = 1;
  }

  const auto episode_seed =
      derive_seed(options.seed, {static_cast<std::uint64_t>(task.task_id), static_cast<std::uint64_t>(options.repetition)});
  Rng env_rng(derive_seed(episode_seed, {0}));
  Rng agent_rng(derive_seed(episode_seed, {1}));

  const ResetResult start = reset(task);
  PuzzleState state = start.state;
  Observation obs = start.observation;

  EpisodeRecord rec;
  rec.task_id = task.task_id;
  rec.repetition = options.repetition;
  rec.num_pieces = task.num_pieces;
  rec.initial_distance = expert.goal_distance(state);
  rec.budget = episode_budget(rec.initial_distance);
  const std::uint64_t passes_before = policy_forward_passes();

  while (rec.steps < rec.budget && !is_goal(state, task)) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t decision_seed = derive_seed(episode_seed, {2, static_cast<std::uint64_t>(rec.steps)});
    Action action;
    if (mode.kind == AgentKind::kExpert) {
      action = expert.expert_action(state);
    } else if (mode.kind == AgentKind::kRandom) {
      action.verb = static_cast<Verb>(uniform_int(agent_rng, kNumVerbs));
      action.object = uniform_int(agent_rng, task.num_pieces);
    } else {
      PolicyContext ctx;
      ctx.current = obs;
      ctx.goal = start.goal;
      ctx.num_pieces = task.num_pieces;
      const Proposal proposal = models.policy->propose(ctx);
      action = proposal.action;

      bool reflect_now = mode.kind != AgentKind::kProposal;
      if (mode.kind == AgentKind::kMultiPathTrigger)
        reflect_now = should_reflect(models.trigger->confidence(proposal.hidden), mode.tau);

      if (reflect_now) {
        ++rec.reflections;
        const BeamStart bs{task, state, obs, start.goal};
        ImaginationConfig dyn = mode.dynamics;
        dyn.seed = derive_seed(decision_seed, {dyn.seed});
        if (mode.kind == AgentKind::kBestOfN || mode.kind == AgentKind::kMajorityVote) {
          const auto trajs = beam_futures(bs, *models.policy, dyn, reflect.beam_width, reflect.horizon,
                                          derive_seed(decision_seed, {1}));
          action = mode.kind == AgentKind::kBestOfN ? select_best_of_n(trajs) : select_majority(trajs);
        } else {
          action = reflect_decide(bs, *models.policy, *critic, dyn, reflect, decision_seed).action;
        }
      }
      const int proposal_adv = one_step_advantage(expert, state, proposal.action);
      rec.proposal_optimal += proposal_adv == 1;
      if (action != proposal.action) {
        ++rec.revisions;
        rec.revised_proposal_advantages.push_back(proposal_adv);
      }
    }
    rec.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    rec.invalid_actions += !is_valid(state, task, action);
    const StepResult r = step(state, task, action, env_rng, options.failure_rate);
    state = r.next_state;
    obs = r.observation;
    ++rec.steps;
  }
  rec.success = is_goal(state, task);
  rec.policy_forward_passes = policy_forward_passes() - passes_before;
  return rec;
}

ModeSummary summarize(const std::string& label, AgentKind kind, const std::vector<EpisodeRecord>& episodes) {
  ModeSummary s;
  s.label = label;
  s.kind = std::string(agent_kind_name(kind));
  s.episodes = static_cast<int>(episodes.size());
  long long steps = 0;
  long long reflections = 0;
  long long optimal = 0;
  long long revised_sum = 0;
  double passes = 0.0;
  double seconds = 0.0;
  for (const auto& e : episodes) {
    s.successes += e.success;
    steps += e.steps;
    reflections += e.reflections;
    optimal += e.proposal_optimal;
    for (int a : e.revised_proposal_advantages) revised_sum += a;
    s.revised_count += static_cast<int>(e.revised_proposal_advantages.size());
    passes += static_cast<double>(e.policy_forward_passes);
    seconds += e.wall_seconds;
  }
  s.decisions = static_cast<int>(steps);
  if (s.episodes > 0) {
    const double n = s.episodes;
    s.success_rate = s.successes / n;
    s.success_stderr = std::sqrt(s.success_rate * (1.0 - s.success_rate) / n);
    s.mean_steps = static_cast<double>(steps) / n;
    s.mean_forward_passes = passes / n;
  }
  if (steps > 0) {
    const double d = static_cast<double>(steps);
    s.reflection_rate = static_cast<double>(reflections) / d;
    s.proposal_optimal_fraction = static_cast<double>(optimal) / d;
    s.mean_decision_ms = 1000.0 * seconds / d;
  }
  if (s.revised_count > 0) s.mean_revised_advantage = static_cast<double>(revised_sum) / s.revised_count;
  return s;
}

Summary evaluate(const std::vector<TaskInstance>& suite, const Models& models, const std::vector<AgentMode>& modes,
                 const EvaluateOptions& options) {
  if (options.repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (options.workers < 1) throw std::invalid_argument("workers must be >= 1");
  for (const auto& m : modes) check_models(models, m);

  const std::size_t per_mode = suite.size() * static_cast<std::size_t>(options.repetitions);
  const std::size_t jobs = per_mode * modes.size();
  std::vector<EpisodeRecord> results(jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t m = j / per_mode;
      const std::size_t k = j % per_mode;
      const std::size_t task = k / options.repetitions;
      EpisodeOptions eo;
      eo.failure_rate = options.failure_rate;
      eo.seed = options.seed;
      eo.repetition = static_cast<int>(k % options.repetitions);
      try {
        results[j] = run_episode(suite[task], models, modes[m], eo);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs;
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(options.workers, std::max<std::size_t>(jobs, 1)));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  Summary summary;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    std::vector<EpisodeRecord> eps(std::make_move_iterator(results.begin() + m * per_mode),
                                   std::make_move_iterator(results.begin() + (m + 1) * per_mode));
    summary.modes.push_back(summarize(modes[m].label, modes[m].kind, eps));
    summary.episodes.push_back(std::move(eps));
  }
  return summary;
}

void write_report(const Summary& summary, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (std::size_t m = 0; m < summary.modes.size(); ++m)
    for (const auto& e : summary.episodes[m]) lines += io::to_json(e, summary.modes[m].label).dump() + "\n";
  io::write_text(dir / "episodes.jsonl", lines);

  io::json modes = io::json::array();
  for (const auto& s : summary.modes) modes.push_back(io::to_json(s));
  io::json root = {{"v", io::kSchemaVersion}, {"modes", modes}};
  io::write_text(dir / "summary.json", root.dump(2) + "\n");
  io::write_text(dir / "summary.txt", format_table(summary));
}

std::string format_table(const Summary& summary) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %6s %8s %7s %8s %8s %8s %8s %9s %9s\n", "mode", "n", "success", "stderr",
                "steps", "reflect", "prop_opt", "rev_adv", "passes", "ms/dec");
  out += line;
  for (const auto& s : summary.modes) {
    std::snprintf(line, sizeof line, "%-24s %6d %8.3f %7.3f %8.2f %8.3f %8.3f %8.3f %9.1f %9.3f\n",
                  s.label.c_str(), s.episodes, s.success_rate, s.success_stderr, s.mean_steps, s.reflection_rate,
                  s.proposal_optimal_fraction, s.mean_revised_advantage, s.mean_forward_passes, s.mean_decision_ms);
    out += line;
  }
  return out;
}

}  // namespace foresight
