#pragma once

// JSON serialization: task suites, the model checkpoint container, JSONL
// datasets and evaluation records. Doubles are written with round-trip
// precision, so checkpoints reload bit-exactly.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "foresight/critic.hpp"
#include "foresight/dagger.hpp"
#include "foresight/env.hpp"
#include "foresight/harness.hpp"
#include "foresight/policy.hpp"
#include "foresight/trigger.hpp"

namespace foresight::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json to_json(const TaskInstance& task);
TaskInstance task_from_json(const json& j);

void save_tasks(const std::vector<TaskInstance>& tasks, const std::filesystem::path& path);
std::vector<TaskInstance> load_tasks(const std::filesystem::path& path);

json to_json(const nn::Tensors& tensors);
nn::Tensors tensors_from_json(const json& j);

json to_json(const PolicyModel& model);
PolicyModel policy_from_json(const json& j);
json to_json(const CriticModel& model);
CriticModel critic_from_json(const json& j);
json to_json(const TriggerModel& model);
TriggerModel trigger_from_json(const json& j);

// Checkpoint container: {"v":1, "policy":{...}, "critic":{...}, "trigger":{...}}.
// Every section is optional.
struct Checkpoint {
  std::optional<PolicyModel> policy;
  std::optional<CriticModel> critic;
  std::optional<TriggerModel> trigger;
};
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Loads `path` if it exists, otherwise returns an empty container.
Checkpoint load_checkpoint_or_empty(const std::filesystem::path& path);

json to_json(const Observation& obs);
Observation observation_from_json(const json& j);
json to_json(const Action& a);
Action action_from_json(const json& j);

json to_json(const PolicyExample& ex);
PolicyExample policy_example_from_json(const json& j);
json to_json(const CriticExample& ex);
CriticExample critic_example_from_json(const json& j);
json to_json(const TriggerExample& ex);
TriggerExample trigger_example_from_json(const json& j);

// JSONL: one {"v":1, ...} object per line.
void save_jsonl(const std::vector<PolicyExample>& rows, const std::filesystem::path& path);
void save_jsonl(const std::vector<CriticExample>& rows, const std::filesystem::path& path);
void save_jsonl(const std::vector<TriggerExample>& rows, const std::filesystem::path& path);
std::vector<CriticExample> load_critic_jsonl(const std::filesystem::path& path);
std::vector<TriggerExample> load_trigger_jsonl(const std::filesystem::path& path);
std::vector<PolicyExample> load_policy_jsonl(const std::filesystem::path& path);

json to_json(const EpisodeRecord& r, const std::string& mode);
EpisodeRecord episode_from_json(const json& j);
json to_json(const ModeSummary& s);
ModeSummary mode_summary_from_json(const json& j);

json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace foresight::io
