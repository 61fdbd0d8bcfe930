#include "foresight/io.hpp"

#include <fstream>
#include <sstream>

namespace foresight::io {

namespace {

void check_version(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("v")) throw FormatError(std::string(what) + ": missing schema version");
  if (j.at("v").get<int>() != kSchemaVersion)
    throw FormatError(std::string(what) + ": unsupported schema version " + j.at("v").dump());
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

void check_shapes(const nn::Tensors& got, const nn::Tensors& want, const char* what) {
  if (got.size() != want.size()) throw FormatError(std::string(what) + ": wrong tensor count");
  for (std::size_t i = 0; i < got.size(); ++i)
    if (got[i].rows() != want[i].rows() || got[i].cols() != want[i].cols())
      throw FormatError(std::string(what) + ": tensor " + std::to_string(i) + " has the wrong shape");
}

template <typename T, typename F>
std::vector<T> load_lines(const std::filesystem::path& path, F&& parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void save_lines(const std::vector<T>& rows, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : rows) text += to_json(r).dump() + "\n";
  write_text(path, text);
}

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json to_json(const TaskInstance& task) {
  json slots = json::array();
  for (const auto& s : task.slots)
    slots.push_back({{"slot_id", s.slot_id},
                     {"accepts", s.accepts},
                     {"requires_orientation", s.requires_orientation},
                     {"prerequisites", s.prerequisites}});
  json pieces = json::array();
  for (const auto& p : task.pieces)
    pieces.push_back({{"piece_id", p.piece_id}, {"color_id", p.color_id}, {"initial_slot", p.initial_slot}});
  return {{"v", kSchemaVersion}, {"task_id", task.task_id}, {"num_pieces", task.num_pieces},
          {"seed", task.seed},   {"slots", slots},           {"pieces", pieces}};
}

TaskInstance task_from_json(const json& j) {
  check_version(j, "task");
  TaskInstance t = guarded("task", [&] {
    TaskInstance t;
    t.task_id = j.at("task_id").get<int>();
    t.num_pieces = j.at("num_pieces").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("slots"))
      t.slots.push_back(SlotSpec{s.at("slot_id").get<int>(), s.at("accepts").get<int>(),
                                 s.at("requires_orientation").get<bool>(),
                                 s.at("prerequisites").get<std::vector<int>>()});
    for (const auto& p : j.at("pieces"))
      t.pieces.push_back(
          PieceSpec{p.at("piece_id").get<int>(), p.at("color_id").get<int>(), p.at("initial_slot").get<int>()});
    return t;
  });
  validate_task(t);
  return t;
}

void save_tasks(const std::vector<TaskInstance>& tasks, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& t : tasks) arr.push_back(to_json(t));
  write_text(path, arr.dump(1) + "\n");
}

std::vector<TaskInstance> load_tasks(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.is_array()) throw FormatError(path.string() + ": expected an array of tasks");
  std::vector<TaskInstance> out;
  for (const auto& t : j) out.push_back(task_from_json(t));
  return out;
}

json to_json(const nn::Tensors& tensors) {
  json arr = json::array();
  for (const auto& m : tensors) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    arr.push_back({{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}});
  }
  return arr;
}

nn::Tensors tensors_from_json(const json& j) {
  return guarded("tensors", [&] {
    nn::Tensors out;
    for (const auto& t : j) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto data = t.at("data").get<std::vector<double>>();
      if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw FormatError("tensor data does not match its shape");
      nn::Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
      out.push_back(std::move(m));
    }
    return out;
  });
}

json to_json(const PolicyModel& model) {
  const auto& s = model.shape();
  return {{"hidden", s.hidden},
          {"verb_embedding", s.verb_embedding},
          {"horizon", s.horizon},
          {"max_pieces", kMaxPieces},
          {"tensors", to_json(model.parameters())}};
}

PolicyModel policy_from_json(const json& j) {
  return guarded("policy", [&] {
    if (j.at("max_pieces").get<int>() != kMaxPieces) throw FormatError("policy: max_pieces mismatch");
    PolicyShape shape;
    shape.hidden = j.at("hidden").get<int>();
    shape.verb_embedding = j.at("verb_embedding").get<int>();
    shape.horizon = j.at("horizon").get<int>();
    PolicyModel model = PolicyModel::zeros(shape);
    nn::Tensors params = tensors_from_json(j.at("tensors"));
    check_shapes(params, model.parameters(), "policy");
    model.parameters() = std::move(params);
    return model;
  });
}

json to_json(const CriticModel& model) {
  return {{"hidden", model.hidden()}, {"tensors", to_json(model.parameters())}};
}

CriticModel critic_from_json(const json& j) {
  return guarded("critic", [&] {
    CriticModel model = CriticModel::zeros(j.at("hidden").get<int>());
    nn::Tensors params = tensors_from_json(j.at("tensors"));
    check_shapes(params, model.parameters(), "critic");
    model.parameters() = std::move(params);
    return model;
  });
}

json to_json(const TriggerModel& model) {
  return {{"input", model.input_size()},
          {"hidden", model.parameters()[0].rows()},
          {"tensors", to_json(model.parameters())}};
}

TriggerModel trigger_from_json(const json& j) {
  return guarded("trigger", [&] {
    TriggerModel model = TriggerModel::zeros(j.at("input").get<int>(), j.at("hidden").get<int>());
    nn::Tensors params = tensors_from_json(j.at("tensors"));
    check_shapes(params, model.parameters(), "trigger");
    model.parameters() = std::move(params);
    return model;
  });
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json j = {{"v", kSchemaVersion}};
  if (ckpt.policy) j["policy"] = to_json(*ckpt.policy);
  if (ckpt.critic) j["critic"] = to_json(*ckpt.critic);
  if (ckpt.trigger) j["trigger"] = to_json(*ckpt.trigger);
  write_text(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json j = read_json(path);
  check_version(j, "checkpoint");
  Checkpoint c;
  if (j.contains("policy")) c.policy = policy_from_json(j["policy"]);
  if (j.contains("critic")) c.critic = critic_from_json(j["critic"]);
  if (j.contains("trigger")) c.trigger = trigger_from_json(j["trigger"]);
  return c;
}

Checkpoint load_checkpoint_or_empty(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return load_checkpoint(path);
}

json to_json(const Observation& obs) { return json(std::vector<double>(obs.begin(), obs.end())); }

Observation observation_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != static_cast<std::size_t>(kObservationSize)) throw FormatError("observation has the wrong length");
  Observation o{};
  std::copy(v.begin(), v.end(), o.begin());
  return o;
}

json to_json(const Action& a) { return json::array({static_cast<int>(a.verb), a.object}); }

Action action_from_json(const json& j) {
  const int verb = j.at(0).get<int>();
  if (verb < 0 || verb >= kNumVerbs) throw FormatError("verb out of range");
  return Action{static_cast<Verb>(verb), j.at(1).get<int>()};
}

json to_json(const PolicyExample& ex) {
  const auto& c = ex.context;
  json plan = json::array();
  for (const auto& a : c.plan) plan.push_back(to_json(a));
  return {{"v", kSchemaVersion},      {"kind", static_cast<int>(c.kind)}, {"current", to_json(c.current)},
          {"goal", to_json(c.goal)},  {"num_pieces", c.num_pieces},       {"advantage", c.advantage},
          {"plan", plan},             {"target", to_json(ex.target)}};
}

PolicyExample policy_example_from_json(const json& j) {
  check_version(j, "policy example");
  PolicyExample ex;
  auto& c = ex.context;
  c.kind = static_cast<ContextKind>(j.at("kind").get<int>());
  c.current = observation_from_json(j.at("current"));
  c.goal = observation_from_json(j.at("goal"));
  c.num_pieces = j.at("num_pieces").get<int>();
  c.advantage = j.at("advantage").get<double>();
  for (const auto& a : j.at("plan")) c.plan.push_back(action_from_json(a));
  ex.target = action_from_json(j.at("target"));
  return ex;
}

json to_json(const CriticExample& ex) {
  return {{"v", kSchemaVersion},
          {"current", to_json(ex.current)},
          {"future", to_json(ex.future)},
          {"goal", to_json(ex.goal)},
          {"label", ex.label}};
}

CriticExample critic_example_from_json(const json& j) {
  check_version(j, "critic example");
  return CriticExample{observation_from_json(j.at("current")), observation_from_json(j.at("future")),
                       observation_from_json(j.at("goal")), j.at("label").get<double>()};
}

json to_json(const TriggerExample& ex) {
  return {{"v", kSchemaVersion}, {"hidden", ex.hidden}, {"label", ex.label}};
}

TriggerExample trigger_example_from_json(const json& j) {
  check_version(j, "trigger example");
  return TriggerExample{j.at("hidden").get<std::vector<double>>(), j.at("label").get<int>()};
}

void save_jsonl(const std::vector<PolicyExample>& rows, const std::filesystem::path& path) { save_lines(rows, path); }
void save_jsonl(const std::vector<CriticExample>& rows, const std::filesystem::path& path) { save_lines(rows, path); }
void save_jsonl(const std::vector<TriggerExample>& rows, const std::filesystem::path& path) { save_lines(rows, path); }

std::vector<PolicyExample> load_policy_jsonl(const std::filesystem::path& path) {
  return load_lines<PolicyExample>(path, policy_example_from_json);
}
std::vector<CriticExample> load_critic_jsonl(const std::filesystem::path& path) {
  return load_lines<CriticExample>(path, critic_example_from_json);
}
std::vector<TriggerExample> load_trigger_jsonl(const std::filesystem::path& path) {
  return load_lines<TriggerExample>(path, trigger_example_from_json);
}

json to_json(const EpisodeRecord& r, const std::string& mode) {
  return {{"v", kSchemaVersion},
          {"mode", mode},
          {"task_id", r.task_id},
          {"repetition", r.repetition},
          {"num_pieces", r.num_pieces},
          {"initial_distance", r.initial_distance},
          {"budget", r.budget},
          {"success", r.success},
          {"steps", r.steps},
          {"reflections", r.reflections},
          {"revisions", r.revisions},
          {"proposal_optimal", r.proposal_optimal},
          {"invalid_actions", r.invalid_actions},
          {"policy_forward_passes", r.policy_forward_passes},
          {"revised_proposal_advantages", r.revised_proposal_advantages}};
}

EpisodeRecord episode_from_json(const json& j) {
  check_version(j, "episode");
  return guarded("episode", [&] {
    EpisodeRecord r;
    r.task_id = j.at("task_id").get<int>();
    r.repetition = j.at("repetition").get<int>();
    r.num_pieces = j.at("num_pieces").get<int>();
    r.initial_distance = j.at("initial_distance").get<int>();
    r.budget = j.at("budget").get<int>();
    r.success = j.at("success").get<bool>();
    r.steps = j.at("steps").get<int>();
    r.reflections = j.at("reflections").get<int>();
    r.revisions = j.at("revisions").get<int>();
    r.proposal_optimal = j.at("proposal_optimal").get<int>();
    r.invalid_actions = j.at("invalid_actions").get<int>();
    r.policy_forward_passes = j.at("policy_forward_passes").get<std::uint64_t>();
    r.revised_proposal_advantages = j.at("revised_proposal_advantages").get<std::vector<int>>();
    return r;
  });
}

json to_json(const ModeSummary& s) {
  return {{"label", s.label},
          {"kind", s.kind},
          {"episodes", s.episodes},
          {"successes", s.successes},
          {"success_rate", s.success_rate},
          {"success_stderr", s.success_stderr},
          {"mean_steps", s.mean_steps},
          {"decisions", s.decisions},
          {"reflection_rate", s.reflection_rate},
          {"proposal_optimal_fraction", s.proposal_optimal_fraction},
          {"mean_revised_advantage", s.mean_revised_advantage},
          {"revised_count", s.revised_count},
          {"mean_forward_passes", s.mean_forward_passes},
          {"mean_decision_ms", s.mean_decision_ms}};
}

ModeSummary mode_summary_from_json(const json& j) {
  return guarded("summary", [&] {
    ModeSummary s;
    s.label = j.at("label").get<std::string>();
    s.kind = j.at("kind").get<std::string>();
    s.episodes = j.at("episodes").get<int>();
    s.successes = j.at("successes").get<int>();
    s.success_rate = j.at("success_rate").get<double>();
    s.success_stderr = j.at("success_stderr").get<double>();
    s.mean_steps = j.at("mean_steps").get<double>();
    s.decisions = j.at("decisions").get<int>();
    s.reflection_rate = j.at("reflection_rate").get<double>();
    s.proposal_optimal_fraction = j.at("proposal_optimal_fraction").get<double>();
    s.mean_revised_advantage = j.at("mean_revised_advantage").get<double>();
    s.revised_count = j.at("revised_count").get<int>();
    s.mean_forward_passes = j.at("mean_forward_passes").get<double>();
    s.mean_decision_ms = j.at("mean_decision_ms").get<double>();
    return s;
  });
}

}  // namespace foresight::io
