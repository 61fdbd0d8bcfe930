#pragma once

// Experiment configuration and the training/evaluation pipeline shared by the
// command-line tool and the acceptance suite.
//
// A run is a sequence of stages: task generation, behavior cloning, interactive
// post-training (which also collects critic and trigger data with the final
// policy), critic training, trigger training and calibration, and evaluation
// over a matrix of agent modes. Every stage is a pure function of the
// configuration and the run seed.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "foresight/critic.hpp"
#include "foresight/dagger.hpp"
#include "foresight/dynamics.hpp"
#include "foresight/env.hpp"
#include "foresight/harness.hpp"
#include "foresight/policy.hpp"
#include "foresight/reflect.hpp"
#include "foresight/trigger.hpp"

namespace foresight {

struct SuiteSpec {
  // Task seeds form the range [base_seed + seed * seed_stride, ... + tasks).
  std::uint64_t base_seed = 0;
  int tasks = 100;
  int configurations = 1;  // initial boards per latent task
  int min_pieces = 3;
  int max_pieces = 6;
  double dep_density = 0.5;
  double orient_frac = 0.4;
  double misplace_prob = 0.2;
};

struct SeedRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;  // exclusive
};

struct ModeSpec {
  std::string label;
  AgentKind kind = AgentKind::kProposal;
  CriticMode critic = CriticMode::kLearned;
  bool base_policy = false;  // evaluate the behavior-cloned policy instead of the final one
  std::optional<ImaginationConfig> dynamics;  // unset: the experiment default
  std::optional<double> tau;                  // unset: the calibrated threshold
};

struct ExperimentConfig {
  std::uint64_t seed_stride = 1'000'000;
  SuiteSpec train{0, 200, 3};
  SuiteSpec posttrain{500'000, 800, 1};  // the tail beyond the DAgger rollouts feeds the collection pass
  SuiteSpec eval{1'000'000'000, 300, 1};

  PolicyShape policy;
  PolicyTrainOptions bc{40, 64, 2e-3, 0.0, 0};
  PostTrainConfig dagger;

  int collect_trajectories = 200;  // final-policy rollouts for critic and trigger data
  double collect_mix = 1.0;        // learner share in those rollouts
  int critic_hidden = 64;
  CriticTrainOptions critic;
  int trigger_hidden = 64;
  TriggerTrainOptions trigger;
  double min_recall = 0.7;
  // Trailing share of the trigger data, in collection order, held out for
  // calibration. Trajectories stay contiguous, so the split is by episode.
  double calibration_fraction = 0.2;
  std::optional<double> tau;  // calibrated threshold, once known

  ReflectConfig reflect;
  ImaginationConfig dynamics = ImaginationConfig::corrupted(0.1, 0.05);
  double eval_failure_rate = 0.05;
  int repetitions = 1;
  int workers = 1;
  std::vector<ModeSpec> modes;

  ExperimentConfig();
};

// Default mode matrix: base and post-trained proposal-only agents and every
// reflection variant.
std::vector<ModeSpec> default_modes();

// Missing keys keep their defaults; unknown keys throw std::invalid_argument.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
// Applies "a.b.c=value" overrides; the value is parsed as JSON, falling back
// to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);
void validate(const ExperimentConfig& cfg);

SeedRange seed_range(const SuiteSpec& spec, std::uint64_t seed, std::uint64_t stride);
// Throws std::invalid_argument if any two suites' seed ranges intersect.
void check_disjoint(const ExperimentConfig& cfg, std::uint64_t seed);

// Task `i` of a suite uses seed begin + i / configurations; boards beyond the
// first are re-sampled with reconfigure. Task ids are begin-relative indices.
std::vector<TaskInstance> make_suite(const SuiteSpec& spec, std::uint64_t seed, std::uint64_t stride);

struct TaskSuites {
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> posttrain;
  std::vector<TaskInstance> eval;
};
TaskSuites make_suites(const ExperimentConfig& cfg, std::uint64_t seed);

using Log = std::function<void(const std::string&)>;

struct BcResult {
  PolicyModel policy;
  PolicyTrainReport report;
  std::size_t examples = 0;
};
BcResult train_bc(const ExperimentConfig& cfg, const std::vector<TaskInstance>& train, std::uint64_t seed);

struct PosttrainOutcome {
  PolicyModel policy;
  PostTrainResult result;
  // Collected with the final policy.
  std::vector<CriticExample> critic_data;  // post-training windows plus the collection pass
  std::vector<TriggerExample> trigger_data;
};
PosttrainOutcome run_posttrain(const ExperimentConfig& cfg, const PolicyModel& base,
                               const std::vector<TaskInstance>& train, const std::vector<TaskInstance>& posttrain,
                               std::uint64_t seed);

struct CriticResult {
  CriticModel model;
  CriticTrainReport report;
};
CriticResult train_critic(const ExperimentConfig& cfg, const std::vector<CriticExample>& data, std::uint64_t seed);

struct TriggerResult {
  TriggerModel model;
  TriggerTrainReport report;
  double tau = 1.0;
  double calibration_recall = 0.0;
  std::vector<TriggerExample> validation;  // the calibration split
};
TriggerResult train_trigger(const ExperimentConfig& cfg, const std::vector<TriggerExample>& data,
                            std::uint64_t seed);

// Smallest threshold meeting `min_recall` on `data`.
double calibrate(const TriggerModel& model, const std::vector<TriggerExample>& data, double min_recall,
                 double* achieved_recall = nullptr);

struct ModelSet {
  const PolicyModel* base = nullptr;
  const PolicyModel* policy = nullptr;
  const CriticModel* critic = nullptr;
  const TriggerModel* trigger = nullptr;
  std::optional<double> tau;
};

// Evaluates cfg.modes on `suite`, preserving the mode order.
Summary run_eval(const ExperimentConfig& cfg, const std::vector<TaskInstance>& suite, const ModelSet& models,
                 std::uint64_t seed);

struct PipelineResult {
  TaskSuites suites;
  BcResult bc;
  PosttrainOutcome posttrain;
  CriticResult critic;
  TriggerResult trigger;
  Summary summary;
};

// All stages end to end.
PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed, const Log& log = {});

}  // namespace foresight
