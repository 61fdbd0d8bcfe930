#pragma once

// Episode execution and evaluation across agent modes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "foresight/critic.hpp"
#include "foresight/dynamics.hpp"
#include "foresight/env.hpp"
#include "foresight/policy.hpp"
#include "foresight/reflect.hpp"
#include "foresight/trigger.hpp"

namespace foresight {

enum class AgentKind : std::uint8_t {
  kExpert,            // full-state oracle, for harness validation
  kRandom,            // uniform over verb x object
  kProposal,          // greedy proposal only (BC)
  kSingleTraj,        // reflection on one greedy future, always
  kBestOfN,           // beam futures, highest-probability first action
  kMajorityVote,      // beam futures, most common first action
  kMultiPath,         // aggregated multi-path reflection, always
  kMultiPathTrigger,  // multi-path reflection gated by the trigger
};

enum class CriticMode : std::uint8_t { kLearned, kOracle };

std::string_view agent_kind_name(AgentKind kind);
AgentKind parse_agent_kind(std::string_view name);

struct AgentMode {
  std::string label;
  AgentKind kind = AgentKind::kProposal;
  ImaginationConfig dynamics;
  CriticMode critic = CriticMode::kLearned;
  ReflectConfig reflect;
  double tau = 1.0;  // trigger threshold, used by kMultiPathTrigger
};

struct Models {
  const PolicyModel* policy = nullptr;
  const CriticModel* critic = nullptr;
  const TriggerModel* trigger = nullptr;
};

struct EpisodeOptions {
  double failure_rate = 0.0;
  std::uint64_t seed = 0;
  int repetition = 0;
};

struct EpisodeRecord {
  int task_id = 0;
  int repetition = 0;
  int num_pieces = 0;
  int initial_distance = 0;
  int budget = 0;
  bool success = false;
  int steps = 0;
  int reflections = 0;
  int revisions = 0;
  int proposal_optimal = 0;  // decisions whose greedy proposal was optimal
  int invalid_actions = 0;
  std::uint64_t policy_forward_passes = 0;
  // One-step oracle advantage of each proposal the agent chose to revise.
  std::vector<int> revised_proposal_advantages;
  double wall_seconds = 0.0;  // total decision time; not serialized to JSONL
};

// Throws std::invalid_argument when a model the mode needs is missing.
EpisodeRecord run_episode(const TaskInstance& task, const Models& models, const AgentMode& mode,
                          const EpisodeOptions& options);

struct ModeSummary {
  std::string label;
  std::string kind;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double success_stderr = 0.0;
  double mean_steps = 0.0;
  int decisions = 0;
  double reflection_rate = 0.0;
  double proposal_optimal_fraction = 0.0;
  double mean_revised_advantage = 0.0;
  int revised_count = 0;
  double mean_forward_passes = 0.0;  // per episode
  double mean_decision_ms = 0.0;
};

struct Summary {
  std::vector<ModeSummary> modes;
  std::vector<std::vector<EpisodeRecord>> episodes;  // parallel to `modes`
};

ModeSummary summarize(const std::string& label, AgentKind kind, const std::vector<EpisodeRecord>& episodes);

struct EvaluateOptions {
  int repetitions = 1;
  double failure_rate = 0.0;
  std::uint64_t seed = 0;
  int workers = 1;
};

// Runs every mode on every task; results are merged in task order, so the
// output does not depend on the worker count.
Summary evaluate(const std::vector<TaskInstance>& suite, const Models& models, const std::vector<AgentMode>& modes,
                 const EvaluateOptions& options);

// Writes <dir>/episodes.jsonl, <dir>/summary.json and <dir>/summary.txt.
void write_report(const Summary& summary, const std::filesystem::path& dir);

std::string format_table(const Summary& summary);

}  // namespace foresight
