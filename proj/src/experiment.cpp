#include "foresight/experiment.hpp"

#include <algorithm>
#include <stdexcept>

#include "foresight/expert.hpp"

namespace foresight {

using nlohmann::json;

namespace {

std::string_view critic_mode_name(CriticMode m) { return m == CriticMode::kOracle ? "oracle" : "learned"; }

CriticMode parse_critic_mode(const std::string& s) {
  if (s == "learned") return CriticMode::kLearned;
  if (s == "oracle") return CriticMode::kOracle;
  throw std::invalid_argument("unknown critic mode: " + s);
}

json to_json(const SuiteSpec& s) {
  return {{"base_seed", s.base_seed},         {"tasks", s.tasks},
          {"configurations", s.configurations}, {"min_pieces", s.min_pieces},
          {"max_pieces", s.max_pieces},       {"dep_density", s.dep_density},
          {"orient_frac", s.orient_frac},     {"misplace_prob", s.misplace_prob}};
}

SuiteSpec suite_from_json(const json& j) {
  SuiteSpec s;
  s.base_seed = j.at("base_seed").get<std::uint64_t>();
  s.tasks = j.at("tasks").get<int>();
  s.configurations = j.at("configurations").get<int>();
  s.min_pieces = j.at("min_pieces").get<int>();
  s.max_pieces = j.at("max_pieces").get<int>();
  s.dep_density = j.at("dep_density").get<double>();
  s.orient_frac = j.at("orient_frac").get<double>();
  s.misplace_prob = j.at("misplace_prob").get<double>();
  return s;
}

json to_json(const PolicyTrainOptions& o) {
  return {{"epochs", o.epochs},
          {"batch_size", o.batch_size},
          {"learning_rate", o.learning_rate},
          {"weight_decay", o.weight_decay}};
}

PolicyTrainOptions policy_train_from_json(const json& j) {
  PolicyTrainOptions o;
  o.epochs = j.at("epochs").get<int>();
  o.batch_size = j.at("batch_size").get<int>();
  o.learning_rate = j.at("learning_rate").get<double>();
  o.weight_decay = j.at("weight_decay").get<double>();
  return o;
}

json to_json(const ImaginationConfig& d) {
  return {{"mode", d.mode == ImaginationMode::kExact ? "exact" : "corrupted"},
          {"obs_noise", d.obs_noise},
          {"transition_noise", d.transition_noise},
          {"seed", d.seed}};
}

ImaginationConfig dynamics_from_json(const json& j) {
  ImaginationConfig d;
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "exact")
    d.mode = ImaginationMode::kExact;
  else if (mode == "corrupted")
    d.mode = ImaginationMode::kCorrupted;
  else
    throw std::invalid_argument("unknown dynamics mode: " + mode);
  d.obs_noise = j.value("obs_noise", 0.0);
  d.transition_noise = j.value("transition_noise", 0.0);
  d.seed = j.value("seed", std::uint64_t{0});
  return d;
}

json to_json(const ReflectConfig& r) {
  return {{"horizon", r.horizon}, {"beam_width", r.beam_width}, {"base_size", r.base_size},
          {"sigma", r.sigma},     {"gamma", r.gamma},           {"alpha1", r.alpha1},
          {"alpha2", r.alpha2},   {"selection", r.selection == SelectionRule::kArgmax ? "argmax" : "sample"}};
}

ReflectConfig reflect_from_json(const json& j) {
  ReflectConfig r;
  r.horizon = j.at("horizon").get<int>();
  r.beam_width = j.at("beam_width").get<int>();
  r.base_size = j.at("base_size").get<int>();
  r.sigma = j.at("sigma").get<double>();
  r.gamma = j.at("gamma").get<double>();
  r.alpha1 = j.at("alpha1").get<double>();
  r.alpha2 = j.at("alpha2").get<double>();
  const auto sel = j.at("selection").get<std::string>();
  if (sel == "argmax")
    r.selection = SelectionRule::kArgmax;
  else if (sel == "sample")
    r.selection = SelectionRule::kSample;
  else
    throw std::invalid_argument("unknown selection rule: " + sel);
  return r;
}

json to_json(const ModeSpec& m) {
  json j = {{"label", m.label},
            {"kind", agent_kind_name(m.kind)},
            {"critic", critic_mode_name(m.critic)},
            {"base_policy", m.base_policy}};
  if (m.dynamics) j["dynamics"] = to_json(*m.dynamics);
  if (m.tau) j["tau"] = *m.tau;
  return j;
}

ModeSpec mode_from_json(const json& j) {
  static const std::vector<std::string> keys = {"label", "kind", "critic", "base_policy", "dynamics", "tau"};
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw std::invalid_argument("unknown mode key: " + k);
  ModeSpec m;
  m.kind = parse_agent_kind(j.at("kind").get<std::string>());
  m.label = j.value("label", std::string(agent_kind_name(m.kind)));
  m.critic = parse_critic_mode(j.value("critic", std::string("learned")));
  m.base_policy = j.value("base_policy", false);
  if (j.contains("dynamics") && !j["dynamics"].is_null()) m.dynamics = dynamics_from_json(j["dynamics"]);
  if (j.contains("tau") && !j["tau"].is_null()) m.tau = j["tau"].get<double>();
  return m;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

// Every key of `user` must exist in `defaults`; nested objects are checked
// recursively. Null defaults accept any value.
void check_keys(const json& user, const json& defaults, const std::string& prefix) {
  if (!user.is_object()) throw std::invalid_argument("config section '" + prefix + "' must be an object");
  for (const auto& [k, v] : user.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (!defaults.contains(k)) throw std::invalid_argument("unknown config key: " + path);
    const json& d = defaults.at(k);
    if (d.is_object() && k != "dynamics") check_keys(v, d, path);
  }
}

}  // namespace

std::vector<ModeSpec> default_modes() {
  std::vector<ModeSpec> m;
  m.push_back({"bc_base", AgentKind::kProposal, CriticMode::kLearned, true, {}, {}});
  m.push_back({"bc_posttrained", AgentKind::kProposal, CriticMode::kLearned, false, {}, {}});
  m.push_back({"single_traj", AgentKind::kSingleTraj, CriticMode::kLearned, false, {}, {}});
  m.push_back({"best_of_n", AgentKind::kBestOfN, CriticMode::kLearned, false, {}, {}});
  m.push_back({"majority_vote", AgentKind::kMajorityVote, CriticMode::kLearned, false, {}, {}});
  m.push_back({"multipath", AgentKind::kMultiPath, CriticMode::kLearned, false, {}, {}});
  m.push_back({"multipath_oracle", AgentKind::kMultiPath, CriticMode::kOracle, false, {}, {}});
  m.push_back({"multipath_trigger", AgentKind::kMultiPathTrigger, CriticMode::kLearned, false, {}, {}});
  return m;
}

ExperimentConfig::ExperimentConfig() : modes(default_modes()) {
  dagger.iters = 1;
  dagger.trajectories = 600;
  dagger.horizon = 5;
  dagger.rollout.mix = 0.5;
  dagger.rollout.failure_rate = 0.05;
  dagger.finetune = PolicyTrainOptions{40, 64, 2e-3, 0.0, 0};
  dagger.goal_windows = true;
}

json to_json(const ExperimentConfig& cfg) {
  json modes = json::array();
  for (const auto& m : cfg.modes) modes.push_back(to_json(m));
  return {
      {"seed_stride", cfg.seed_stride},
      {"suites", {{"train", to_json(cfg.train)}, {"posttrain", to_json(cfg.posttrain)}, {"eval", to_json(cfg.eval)}}},
      {"policy",
       {{"hidden", cfg.policy.hidden}, {"verb_embedding", cfg.policy.verb_embedding}, {"horizon", cfg.policy.horizon}}},
      {"bc", to_json(cfg.bc)},
      {"posttrain",
       {{"iters", cfg.dagger.iters},
        {"trajectories", cfg.dagger.trajectories},
        {"mix", cfg.dagger.rollout.mix},
        {"failure_rate", cfg.dagger.rollout.failure_rate},
        {"episode_length", cfg.dagger.rollout.episode_length},
        {"goal_windows", cfg.dagger.goal_windows},
        {"finetune", to_json(cfg.dagger.finetune)},
        {"collect_trajectories", cfg.collect_trajectories},
        {"collect_mix", cfg.collect_mix}}},
      {"critic",
       {{"hidden", cfg.critic_hidden},
        {"max_epochs", cfg.critic.max_epochs},
        {"batch_size", cfg.critic.batch_size},
        {"learning_rate", cfg.critic.learning_rate},
        {"validation_fraction", cfg.critic.validation_fraction},
        {"patience", cfg.critic.patience},
        {"label_clip", cfg.critic.label_clip}}},
      {"trigger",
       {{"hidden", cfg.trigger_hidden},
        {"max_epochs", cfg.trigger.max_epochs},
        {"batch_size", cfg.trigger.batch_size},
        {"learning_rate", cfg.trigger.learning_rate},
        {"validation_fraction", cfg.trigger.validation_fraction},
        {"patience", cfg.trigger.patience},
        {"positive_weight", optional_json(cfg.trigger.positive_weight)},
        {"min_recall", cfg.min_recall},
        {"calibration_fraction", cfg.calibration_fraction},
        {"tau", optional_json(cfg.tau)}}},
      {"reflect", to_json(cfg.reflect)},
      {"dynamics", to_json(cfg.dynamics)},
      {"eval", {{"failure_rate", cfg.eval_failure_rate}, {"repetitions", cfg.repetitions}, {"workers", cfg.workers}}},
      {"modes", modes},
  };
}

ExperimentConfig config_from_json(const json& user) {
  const json defaults = to_json(ExperimentConfig{});
  check_keys(user, defaults, "");
  json j = defaults;
  j.merge_patch(user);
  // merge_patch deletes keys set to null; restore optional sections.
  for (const char* k : {"positive_weight", "tau"})
    if (!j["trigger"].contains(k)) j["trigger"][k] = nullptr;

  ExperimentConfig cfg;
  try {
    cfg.seed_stride = j.at("seed_stride").get<std::uint64_t>();
    cfg.train = suite_from_json(j.at("suites").at("train"));
    cfg.posttrain = suite_from_json(j.at("suites").at("posttrain"));
    cfg.eval = suite_from_json(j.at("suites").at("eval"));
    const json& p = j.at("policy");
    cfg.policy = PolicyShape{p.at("hidden").get<int>(), p.at("verb_embedding").get<int>(), p.at("horizon").get<int>()};
    cfg.bc = policy_train_from_json(j.at("bc"));
    const json& d = j.at("posttrain");
    cfg.dagger.iters = d.at("iters").get<int>();
    cfg.dagger.trajectories = d.at("trajectories").get<int>();
    cfg.dagger.rollout.mix = d.at("mix").get<double>();
    cfg.dagger.rollout.failure_rate = d.at("failure_rate").get<double>();
    cfg.dagger.rollout.episode_length = d.at("episode_length").get<int>();
    cfg.dagger.goal_windows = d.at("goal_windows").get<bool>();
    cfg.dagger.finetune = policy_train_from_json(d.at("finetune"));
    cfg.collect_trajectories = d.at("collect_trajectories").get<int>();
    cfg.collect_mix = d.at("collect_mix").get<double>();
    const json& c = j.at("critic");
    cfg.critic_hidden = c.at("hidden").get<int>();
    cfg.critic.max_epochs = c.at("max_epochs").get<int>();
    cfg.critic.batch_size = c.at("batch_size").get<int>();
    cfg.critic.learning_rate = c.at("learning_rate").get<double>();
    cfg.critic.validation_fraction = c.at("validation_fraction").get<double>();
    cfg.critic.patience = c.at("patience").get<int>();
    cfg.critic.label_clip = c.at("label_clip").get<double>();
    const json& t = j.at("trigger");
    cfg.trigger_hidden = t.at("hidden").get<int>();
    cfg.trigger.max_epochs = t.at("max_epochs").get<int>();
    cfg.trigger.batch_size = t.at("batch_size").get<int>();
    cfg.trigger.learning_rate = t.at("learning_rate").get<double>();
    cfg.trigger.validation_fraction = t.at("validation_fraction").get<double>();
    cfg.trigger.patience = t.at("patience").get<int>();
    cfg.trigger.positive_weight = optional_from<double>(t.at("positive_weight"));
    cfg.min_recall = t.at("min_recall").get<double>();
    cfg.calibration_fraction = t.at("calibration_fraction").get<double>();
    cfg.tau = optional_from<double>(t.at("tau"));
    cfg.reflect = reflect_from_json(j.at("reflect"));
    cfg.dynamics = dynamics_from_json(j.at("dynamics"));
    const json& e = j.at("eval");
    cfg.eval_failure_rate = e.at("failure_rate").get<double>();
    cfg.repetitions = e.at("repetitions").get<int>();
    cfg.workers = e.at("workers").get<int>();
    cfg.modes.clear();
    for (const auto& m : j.at("modes")) cfg.modes.push_back(mode_from_json(m));
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("invalid config: ") + ex.what());
  }
  cfg.dagger.horizon = cfg.reflect.horizon;
  validate(cfg);
  return cfg;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("malformed override key: " + key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

void validate(const ExperimentConfig& cfg) {
  auto suite = [](const SuiteSpec& s, const char* name) {
    const std::string n(name);
    if (s.tasks < 0) throw std::invalid_argument(n + ": tasks must be >= 0");
    if (s.configurations < 1) throw std::invalid_argument(n + ": configurations must be >= 1");
    if (s.min_pieces < 2 || s.max_pieces > kMaxPieces || s.min_pieces > s.max_pieces)
      throw std::invalid_argument(n + ": piece range must lie in [2, " + std::to_string(kMaxPieces) + "]");
  };
  suite(cfg.train, "suites.train");
  suite(cfg.posttrain, "suites.posttrain");
  suite(cfg.eval, "suites.eval");
  if (cfg.seed_stride == 0) throw std::invalid_argument("seed_stride must be positive");
  if (cfg.policy.horizon != cfg.reflect.horizon)
    throw std::invalid_argument("policy.horizon must equal reflect.horizon");
  validate(cfg.reflect);
  validate(cfg.dynamics);
  validate(cfg.dagger);
  if (cfg.collect_trajectories < 0) throw std::invalid_argument("collect_trajectories must be >= 0");
  if (!(cfg.collect_mix >= 0.0 && cfg.collect_mix <= 1.0)) throw std::invalid_argument("collect_mix must be in [0,1]");
  if (!(cfg.min_recall >= 0.0 && cfg.min_recall <= 1.0)) throw std::invalid_argument("min_recall must be in [0,1]");
  if (!(cfg.calibration_fraction > 0.0 && cfg.calibration_fraction < 1.0))
    throw std::invalid_argument("calibration_fraction must be in (0,1)");
  if (!(cfg.eval_failure_rate >= 0.0 && cfg.eval_failure_rate <= 1.0))
    throw std::invalid_argument("eval.failure_rate must be in [0,1]");
  if (cfg.repetitions < 1) throw std::invalid_argument("eval.repetitions must be >= 1");
  if (cfg.workers < 1) throw std::invalid_argument("eval.workers must be >= 1");
  for (const auto& m : cfg.modes)
    if (m.dynamics) validate(*m.dynamics);
}

SeedRange seed_range(const SuiteSpec& spec, std::uint64_t seed, std::uint64_t stride) {
  const std::uint64_t begin = spec.base_seed + seed * stride;
  return {begin, begin + static_cast<std::uint64_t>(spec.tasks)};
}

void check_disjoint(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::pair<const char*, SeedRange> ranges[] = {
      {"train", seed_range(cfg.train, seed, cfg.seed_stride)},
      {"posttrain", seed_range(cfg.posttrain, seed, cfg.seed_stride)},
      {"eval", seed_range(cfg.eval, seed, cfg.seed_stride)},
  };
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) {
      const auto& ra = ranges[a].second;
      const auto& rb = ranges[b].second;
      if (ra.begin < rb.end && rb.begin < ra.end)
        throw std::invalid_argument(std::string("task seed ranges overlap: ") + ranges[a].first + " and " +
                                    ranges[b].first);
    }
}

std::vector<TaskInstance> make_suite(const SuiteSpec& spec, std::uint64_t seed, std::uint64_t stride) {
  const SeedRange range = seed_range(spec, seed, stride);
  const int span = spec.max_pieces - spec.min_pieces + 1;
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(spec.tasks) * spec.configurations);
  for (int i = 0; i < spec.tasks; ++i) {
    const std::uint64_t task_seed = range.begin + static_cast<std::uint64_t>(i);
    GeneratorParams g;
    g.num_pieces = spec.min_pieces + i % span;
    g.dep_density = spec.dep_density;
    g.orient_frac = spec.orient_frac;
    g.misplace_prob = spec.misplace_prob;
    const TaskInstance base = generate_task(task_seed, g, i * spec.configurations);
    out.push_back(base);
    for (int c = 1; c < spec.configurations; ++c)
      out.push_back(reconfigure(base, derive_seed(task_seed, {static_cast<std::uint64_t>(c)}), spec.misplace_prob,
                                i * spec.configurations + c));
  }
  return out;
}

TaskSuites make_suites(const ExperimentConfig& cfg, std::uint64_t seed) {
  check_disjoint(cfg, seed);
  return {make_suite(cfg.train, seed, cfg.seed_stride), make_suite(cfg.posttrain, seed, cfg.seed_stride),
          make_suite(cfg.eval, seed, cfg.seed_stride)};
}

namespace {

std::vector<PolicyExample> demonstrations(const std::vector<TaskInstance>& tasks) {
  std::vector<PolicyExample> out;
  for (const auto& t : tasks) {
    const Expert expert(t);
    auto demo = expert_demonstration(expert);
    out.insert(out.end(), std::make_move_iterator(demo.begin()), std::make_move_iterator(demo.end()));
  }
  return out;
}

enum Stage : std::uint64_t { kBcInit = 1, kBcTrain, kPosttrain, kCollect, kCritic, kTriggerInit, kTriggerTrain, kEval };

}  // namespace

BcResult train_bc(const ExperimentConfig& cfg, const std::vector<TaskInstance>& train, std::uint64_t seed) {
  const auto data = demonstrations(train);
  BcResult r{PolicyModel(cfg.policy, derive_seed(seed, {kBcInit})), {}, data.size()};
  PolicyTrainOptions opts = cfg.bc;
  opts.seed = derive_seed(seed, {kBcTrain});
  r.report = r.policy.train(data, opts);
  return r;
}

PosttrainOutcome run_posttrain(const ExperimentConfig& cfg, const PolicyModel& base,
                               const std::vector<TaskInstance>& train, const std::vector<TaskInstance>& post_suite,
                               std::uint64_t seed) {
  if (post_suite.empty()) throw std::invalid_argument("post-training suite is empty");
  PosttrainOutcome out{base, {}, {}, {}};
  PostTrainConfig pc = cfg.dagger;
  pc.seed = derive_seed(seed, {kPosttrain});
  const TaskSampler sampler = [&](int i) { return post_suite[static_cast<std::size_t>(i) % post_suite.size()]; };
  out.result = posttrain(out.policy, demonstrations(train), sampler, pc);
  out.critic_data = out.result.critic_data;

  RelabeledData collected;
  RolloutOptions ro = pc.rollout;
  ro.mix = cfg.collect_mix;
  // Tasks after those consumed by post-training, so that the trigger is
  // calibrated on boards the policy was not fine-tuned on.
  const std::size_t first = static_cast<std::size_t>(pc.iters) * static_cast<std::size_t>(pc.trajectories);
  for (int n = 0; n < cfg.collect_trajectories; ++n) {
    const TaskInstance& task = post_suite[(first + static_cast<std::size_t>(n)) % post_suite.size()];
    const Expert expert(task);
    Rng rng(derive_seed(seed, {kCollect, static_cast<std::uint64_t>(n)}));
    collected.append(relabel(rollout(out.policy, expert, ro, rng), pc.horizon, pc.goal_windows));
  }
  out.critic_data.insert(out.critic_data.end(), collected.critic.begin(), collected.critic.end());
  out.trigger_data = std::move(collected.trigger);
  return out;
}

CriticResult train_critic(const ExperimentConfig& cfg, const std::vector<CriticExample>& data, std::uint64_t seed) {
  CriticResult r{CriticModel(cfg.critic_hidden, derive_seed(seed, {kCritic, 0})), {}};
  CriticTrainOptions opts = cfg.critic;
  opts.seed = derive_seed(seed, {kCritic, 1});
  r.report = r.model.train(data, opts);
  return r;
}

double calibrate(const TriggerModel& model, const std::vector<TriggerExample>& data, double min_recall,
                 double* achieved_recall) {
  std::vector<double> conf;
  std::vector<int> labels;
  for (const auto& ex : data) {
    conf.push_back(model.confidence(ex.hidden));
    labels.push_back(ex.label);
  }
  const double tau = calibrate_threshold(conf, labels, min_recall);
  if (achieved_recall != nullptr) *achieved_recall = incorrect_recall(conf, labels, tau);
  return tau;
}

TriggerResult train_trigger(const ExperimentConfig& cfg, const std::vector<TriggerExample>& data,
                            std::uint64_t seed) {
  TriggerResult r{TriggerModel(cfg.policy.hidden, cfg.trigger_hidden, derive_seed(seed, {kTriggerInit})), {}, 1.0,
                  0.0, {}};
  TriggerTrainOptions opts = cfg.trigger;
  opts.seed = derive_seed(seed, {kTriggerTrain});
  const auto held = static_cast<std::size_t>(cfg.calibration_fraction * static_cast<double>(data.size()));
  if (held == 0 || held == data.size()) throw std::invalid_argument("too little trigger data to hold out a calibration split");
  const std::span<const TriggerExample> all(data);
  r.report = r.model.train(all.first(data.size() - held), opts);
  r.validation.assign(data.end() - static_cast<std::ptrdiff_t>(held), data.end());
  r.tau = calibrate(r.model, r.validation, cfg.min_recall, &r.calibration_recall);
  return r;
}

Summary run_eval(const ExperimentConfig& cfg, const std::vector<TaskInstance>& suite, const ModelSet& models,
                 std::uint64_t seed) {
  EvaluateOptions eo;
  eo.repetitions = cfg.repetitions;
  eo.failure_rate = cfg.eval_failure_rate;
  eo.seed = derive_seed(seed, {kEval});
  eo.workers = cfg.workers;

  Summary merged;
  merged.modes.resize(cfg.modes.size());
  merged.episodes.resize(cfg.modes.size());
  for (bool base : {true, false}) {
    std::vector<AgentMode> modes;
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < cfg.modes.size(); ++i) {
      const ModeSpec& m = cfg.modes[i];
      if (m.base_policy != base) continue;
      AgentMode am;
      am.label = m.label;
      am.kind = m.kind;
      am.dynamics = m.dynamics.value_or(cfg.dynamics);
      am.critic = m.critic;
      am.reflect = cfg.reflect;
      if (m.kind == AgentKind::kMultiPathTrigger) {
        const auto tau = m.tau ? m.tau : models.tau;
        if (!tau) throw std::invalid_argument("mode '" + m.label + "' needs a calibrated trigger threshold");
        am.tau = *tau;
      }
      modes.push_back(am);
      slots.push_back(i);
    }
    if (modes.empty()) continue;
    Models ms{base ? models.base : models.policy, models.critic, models.trigger};
    if (ms.policy == nullptr && std::any_of(modes.begin(), modes.end(), [](const AgentMode& a) {
          return a.kind != AgentKind::kExpert && a.kind != AgentKind::kRandom;
        }))
      throw std::invalid_argument(base ? "base policy checkpoint is missing" : "policy checkpoint is missing");
    Summary part = evaluate(suite, ms, modes, eo);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      merged.modes[slots[k]] = std::move(part.modes[k]);
      merged.episodes[slots[k]] = std::move(part.episodes[k]);
    }
  }
  return merged;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed, const Log& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  PipelineResult r;
  r.suites = make_suites(cfg, seed);
  say("tasks: train " + std::to_string(r.suites.train.size()) + ", posttrain " +
      std::to_string(r.suites.posttrain.size()) + ", eval " + std::to_string(r.suites.eval.size()));
  r.bc = train_bc(cfg, r.suites.train, seed);
  say("bc: " + std::to_string(r.bc.examples) + " examples, loss " + std::to_string(r.bc.report.initial_loss) +
      " -> " + std::to_string(r.bc.report.final_loss));
  r.posttrain = run_posttrain(cfg, r.bc.policy, r.suites.train, r.suites.posttrain, seed);
  for (const auto& it : r.posttrain.result.iterations)
    say("posttrain: " + std::to_string(it.rollouts) + " rollouts, " + std::to_string(it.successes) +
        " reached goal, |D| " + std::to_string(it.dataset_size) + ", loss " + std::to_string(it.finetune_loss));
  r.critic = train_critic(cfg, r.posttrain.critic_data, seed);
  say("critic: " + std::to_string(r.posttrain.critic_data.size()) + " examples, val mse " +
      std::to_string(r.critic.report.best_validation_mse) + " vs label variance " +
      std::to_string(r.critic.report.validation_label_variance));
  r.trigger = train_trigger(cfg, r.posttrain.trigger_data, seed);
  say("trigger: " + std::to_string(r.posttrain.trigger_data.size()) + " examples, val acc " +
      std::to_string(r.trigger.report.best_validation_accuracy) + ", tau " + std::to_string(r.trigger.tau) +
      " (recall " + std::to_string(r.trigger.calibration_recall) + ")");
  ModelSet ms{&r.bc.policy, &r.posttrain.policy, &r.critic.model, &r.trigger.model, cfg.tau.value_or(r.trigger.tau)};
  r.summary = run_eval(cfg, r.suites.eval, ms, seed);
  return r;
}

}  // namespace foresight
