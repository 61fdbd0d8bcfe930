// Command-line driver. Every stage reads and writes files in a run directory:
//
//   config.json            effective configuration (tau is added by calibration)
//   tasks/{train,posttrain,eval}.json
//   bc.json                behavior-cloned policy
//   checkpoint.json        post-trained policy, critic and trigger
//   data/*.jsonl           aggregated policy data, critic and trigger data
//   eval/, ablate/         evaluation reports

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "foresight/experiment.hpp"
#include "foresight/expert.hpp"
#include "foresight/io.hpp"

namespace fs = std::filesystem;
using namespace foresight;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string run_dir = "run";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::optional<int> workers;
};

void add_common(CLI::App* app, Common& c, bool needs_seed) {
  app->add_option("-c,--config", c.config, "JSON configuration (default: <run-dir>/config.json if present)");
  app->add_option("-r,--run-dir", c.run_dir, "Run directory")->capture_default_str();
  auto* seed = app->add_option("-s,--seed", c.seed, "Run seed");
  if (needs_seed) seed->required();
  app->add_option("--set", c.overrides, "Override a config key, e.g. --set reflect.beam_width=4");
  app->add_option("-j,--workers", c.workers, "Evaluation worker threads (eval.workers)");
}

fs::path run_path(const Common& c, const std::string& rel) { return fs::path(c.run_dir) / rel; }

ExperimentConfig load_config(const Common& c) {
  json j = json::object();
  if (!c.config.empty())
    j = io::read_json(c.config);
  else if (fs::exists(run_path(c, "config.json")))
    j = io::read_json(run_path(c, "config.json"));
  for (const auto& o : c.overrides) apply_override(j, o);
  if (c.workers) apply_override(j, "eval.workers=" + std::to_string(*c.workers));
  return config_from_json(j);
}

void save_config(const Common& c, const ExperimentConfig& cfg) {
  io::write_text(run_path(c, "config.json"), to_json(cfg).dump(2) + "\n");
}

void log(const std::string& s) { std::cerr << s << "\n"; }

std::vector<TaskInstance> load_suite(const Common& c, const std::string& name) {
  return io::load_tasks(run_path(c, "tasks/" + name + ".json"));
}

// Standalone suite: `count` tasks with seeds seed, seed + 1, ...
struct GenOptions {
  std::string out;
  int count = 100;
  std::optional<int> pieces;
  std::optional<double> dep_density, orient_frac, misplace_prob;
};

void gen_standalone(const Common& c, const GenOptions& g) {
  const ExperimentConfig cfg = load_config(c);
  GeneratorParams p;
  p.num_pieces = g.pieces.value_or(cfg.eval.max_pieces);
  p.dep_density = g.dep_density.value_or(cfg.eval.dep_density);
  p.orient_frac = g.orient_frac.value_or(cfg.eval.orient_frac);
  p.misplace_prob = g.misplace_prob.value_or(cfg.eval.misplace_prob);
  if (g.count < 0) throw std::invalid_argument("--count must be >= 0");
  std::vector<TaskInstance> tasks;
  for (int i = 0; i < g.count; ++i) tasks.push_back(generate_task(*c.seed + static_cast<std::uint64_t>(i), p, i));
  io::save_tasks(tasks, g.out);
  log("wrote " + std::to_string(tasks.size()) + " tasks to " + g.out);
}

void cmd_gen_tasks(const Common& c, const GenOptions& g) {
  if (!g.out.empty()) return gen_standalone(c, g);
  const ExperimentConfig cfg = load_config(c);
  const TaskSuites s = make_suites(cfg, *c.seed);
  io::save_tasks(s.train, run_path(c, "tasks/train.json"));
  io::save_tasks(s.posttrain, run_path(c, "tasks/posttrain.json"));
  io::save_tasks(s.eval, run_path(c, "tasks/eval.json"));
  save_config(c, cfg);
  log("wrote " + std::to_string(s.train.size()) + " train, " + std::to_string(s.posttrain.size()) +
      " posttrain and " + std::to_string(s.eval.size()) + " eval tasks");
}

void cmd_train_bc(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  BcResult r = train_bc(cfg, load_suite(c, "train"), *c.seed);
  io::Checkpoint ck;
  ck.policy = std::move(r.policy);
  io::save_checkpoint(ck, run_path(c, "bc.json"));
  log("bc: " + std::to_string(r.examples) + " examples, loss " + std::to_string(r.report.initial_loss) + " -> " +
      std::to_string(r.report.final_loss));
}

// Optional explicit paths; unset ones default to the run-directory layout.
struct PosttrainPaths {
  std::string in_policy, out_policy, critic_data, trigger_data;
};

fs::path or_default(const Common& c, const std::string& path, const std::string& rel) {
  return path.empty() ? run_path(c, rel) : fs::path(path);
}

void cmd_posttrain(const Common& c, const PosttrainPaths& paths) {
  const ExperimentConfig cfg = load_config(c);
  const fs::path in = or_default(c, paths.in_policy, "bc.json");
  io::Checkpoint bc = io::load_checkpoint(in);
  if (!bc.policy) throw std::runtime_error(in.string() + " holds no policy; run train-bc first");
  PosttrainOutcome r = run_posttrain(cfg, *bc.policy, load_suite(c, "train"), load_suite(c, "posttrain"), *c.seed);
  const fs::path out = or_default(c, paths.out_policy, "checkpoint.json");
  io::Checkpoint ck = io::load_checkpoint_or_empty(out);
  ck.policy = std::move(r.policy);
  io::save_checkpoint(ck, out);
  io::save_jsonl(r.result.dataset, run_path(c, "data/policy.jsonl"));
  io::save_jsonl(r.critic_data, or_default(c, paths.critic_data, "data/critic.jsonl"));
  io::save_jsonl(r.trigger_data, or_default(c, paths.trigger_data, "data/trigger.jsonl"));
  for (const auto& it : r.result.iterations)
    log("posttrain: " + std::to_string(it.rollouts) + " rollouts, " + std::to_string(it.successes) +
        " reached goal, |D| " + std::to_string(it.dataset_size) + ", loss " + std::to_string(it.finetune_loss));
}

void cmd_train_critic(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  const auto data = io::load_critic_jsonl(run_path(c, "data/critic.jsonl"));
  CriticResult r = train_critic(cfg, data, *c.seed);
  io::Checkpoint ck = io::load_checkpoint_or_empty(run_path(c, "checkpoint.json"));
  ck.critic = std::move(r.model);
  io::save_checkpoint(ck, run_path(c, "checkpoint.json"));
  log("critic: " + std::to_string(data.size()) + " examples, validation mse " +
      std::to_string(r.report.best_validation_mse) + ", label variance " +
      std::to_string(r.report.validation_label_variance));
}

void cmd_train_trigger(const Common& c) {
  ExperimentConfig cfg = load_config(c);
  const auto data = io::load_trigger_jsonl(run_path(c, "data/trigger.jsonl"));
  TriggerResult r = train_trigger(cfg, data, *c.seed);
  io::Checkpoint ck = io::load_checkpoint_or_empty(run_path(c, "checkpoint.json"));
  ck.trigger = std::move(r.model);
  io::save_checkpoint(ck, run_path(c, "checkpoint.json"));
  io::save_jsonl(r.validation, run_path(c, "data/trigger_val.jsonl"));
  cfg.tau = r.tau;
  save_config(c, cfg);
  log("trigger: validation accuracy " + std::to_string(r.report.best_validation_accuracy) + ", tau " +
      std::to_string(r.tau) + " (recall on incorrect proposals " + std::to_string(r.calibration_recall) + ")");
}

void cmd_calibrate(const Common& c, const std::string& data_path, std::optional<double> min_recall) {
  ExperimentConfig cfg = load_config(c);
  const io::Checkpoint ck = io::load_checkpoint(run_path(c, "checkpoint.json"));
  if (!ck.trigger) throw std::runtime_error("checkpoint.json holds no trigger; run train-trigger first");
  const fs::path path = data_path.empty() ? run_path(c, "data/trigger_val.jsonl") : fs::path(data_path);
  const auto data = io::load_trigger_jsonl(path);
  double recall = 0.0;
  cfg.tau = calibrate(*ck.trigger, data, min_recall.value_or(cfg.min_recall), &recall);
  save_config(c, cfg);
  std::printf("tau %.17g recall %.4f\n", *cfg.tau, recall);
}

ModelSet model_set(const io::Checkpoint& bc, const io::Checkpoint& ck, const ExperimentConfig& cfg) {
  ModelSet ms;
  if (bc.policy) ms.base = &*bc.policy;
  if (ck.policy) ms.policy = &*ck.policy;
  if (ck.critic) ms.critic = &*ck.critic;
  if (ck.trigger) ms.trigger = &*ck.trigger;
  ms.tau = cfg.tau;
  return ms;
}

void cmd_eval(const Common& c, const std::string& tasks_path, const std::string& out) {
  const ExperimentConfig cfg = load_config(c);
  const auto suite = tasks_path.empty() ? load_suite(c, "eval") : io::load_tasks(tasks_path);
  const io::Checkpoint bc = io::load_checkpoint_or_empty(run_path(c, "bc.json"));
  const io::Checkpoint ck = io::load_checkpoint_or_empty(run_path(c, "checkpoint.json"));
  const Summary s = run_eval(cfg, suite, model_set(bc, ck, cfg), *c.seed);
  const fs::path dir = out.empty() ? run_path(c, "eval") : fs::path(out);
  write_report(s, dir);
  std::cout << format_table(s);
}

void cmd_ablate(const Common& c, const std::string& sweep) {
  const auto eq = sweep.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("--sweep must look like key=v1,v2,...");
  const std::string key = sweep.substr(0, eq);
  std::vector<std::string> values;
  std::stringstream ss(sweep.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) values.push_back(v);
  if (values.empty()) throw std::invalid_argument("--sweep needs at least one value");

  const auto suite = load_suite(c, "eval");
  const io::Checkpoint bc = io::load_checkpoint_or_empty(run_path(c, "bc.json"));
  const io::Checkpoint ck = io::load_checkpoint_or_empty(run_path(c, "checkpoint.json"));
  Summary all;
  for (const auto& v : values) {
    Common cv = c;
    cv.overrides.push_back(key + "=" + v);
    const ExperimentConfig cfg = load_config(cv);
    Summary s = run_eval(cfg, suite, model_set(bc, ck, cfg), *c.seed);
    write_report(s, run_path(c, "ablate/" + key + "=" + v));
    for (std::size_t m = 0; m < s.modes.size(); ++m) {
      s.modes[m].label = key + "=" + v + " " + s.modes[m].label;
      all.modes.push_back(std::move(s.modes[m]));
      all.episodes.push_back(std::move(s.episodes[m]));
    }
  }
  io::write_text(run_path(c, "ablate/summary.txt"), format_table(all));
  std::cout << format_table(all);
}

void cmd_report(const std::string& input) {
  const fs::path dir(input);
  std::map<std::string, std::string> kinds;
  std::vector<std::string> order;
  if (fs::exists(dir / "summary.json"))
    for (const auto& m : io::read_json(dir / "summary.json").at("modes"))
      kinds[m.at("label").get<std::string>()] = m.at("kind").get<std::string>();

  std::map<std::string, std::vector<EpisodeRecord>> by_mode;
  std::ifstream in(dir / "episodes.jsonl");
  if (!in) throw std::runtime_error("cannot open " + (dir / "episodes.jsonl").string());
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto label = j.at("mode").get<std::string>();
    if (!by_mode.count(label)) order.push_back(label);
    by_mode[label].push_back(io::episode_from_json(j));
  }
  Summary s;
  for (const auto& label : order) {
    const auto kind = kinds.count(label) ? parse_agent_kind(kinds[label]) : AgentKind::kProposal;
    s.modes.push_back(summarize(label, kind, by_mode[label]));
    s.episodes.push_back(by_mode[label]);
  }
  std::cout << format_table(s);
}

void print_plan(const TaskInstance& t) {
  const Expert expert(t);
  const auto plan = expert.solve(initial_state(t));
  std::cout << "distance " << plan.size() << "\n";
  for (const auto& a : plan) std::cout << to_string(a) << "\n";
}

void cmd_expert_solve(const std::string& tasks_path, std::optional<int> task_id, std::optional<int> index) {
  const auto tasks = io::load_tasks(tasks_path);
  if (index) {
    if (*index < 0 || *index >= static_cast<int>(tasks.size()))
      throw std::invalid_argument("--index out of range (suite has " + std::to_string(tasks.size()) + " tasks)");
    return print_plan(tasks[*index]);
  }
  const int id = task_id.value_or(0);
  for (const auto& t : tasks)
    if (t.task_id == id) return print_plan(t);
  throw std::invalid_argument("no task with id " + std::to_string(id));
}

void cmd_pipeline(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  PipelineResult r = run_pipeline(cfg, *c.seed, log);
  io::save_tasks(r.suites.train, run_path(c, "tasks/train.json"));
  io::save_tasks(r.suites.posttrain, run_path(c, "tasks/posttrain.json"));
  io::save_tasks(r.suites.eval, run_path(c, "tasks/eval.json"));
  io::Checkpoint bc;
  bc.policy = r.bc.policy;
  io::save_checkpoint(bc, run_path(c, "bc.json"));
  io::Checkpoint ck;
  ck.policy = r.posttrain.policy;
  ck.critic = r.critic.model;
  ck.trigger = r.trigger.model;
  io::save_checkpoint(ck, run_path(c, "checkpoint.json"));
  ExperimentConfig out = cfg;
  if (!out.tau) out.tau = r.trigger.tau;
  save_config(c, out);
  write_report(r.summary, run_path(c, "eval"));
  std::cout << format_table(r.summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value-guided multi-path reflective planning on a symbolic assembly puzzle"};
  app.require_subcommand(1);

  Common common;
  auto* gen = app.add_subcommand("gen-tasks", "Generate the train, post-training and evaluation suites");
  add_common(gen, common, true);
  GenOptions gen_opts;
  gen->add_option("--out", gen_opts.out, "Write a single suite here instead of the run-directory suites");
  gen->add_option("--count", gen_opts.count, "Tasks in the standalone suite")->capture_default_str();
  gen->add_option("--pieces", gen_opts.pieces, "Pieces per task (default: eval.max_pieces)");
  gen->add_option("--dep-density", gen_opts.dep_density, "Prerequisite density (default: eval.dep_density)");
  gen->add_option("--orient-frac", gen_opts.orient_frac, "Fraction of slots needing reorientation");
  gen->add_option("--misplace-prob", gen_opts.misplace_prob, "Probability of a misplaced initial piece");
  auto* bc = app.add_subcommand("train-bc", "Behavior-clone the policy on expert demonstrations");
  add_common(bc, common, true);
  auto* post = app.add_subcommand("posttrain", "Interactive post-training; also collects critic and trigger data");
  add_common(post, common, true);
  PosttrainPaths post_paths;
  post->add_option("--in-policy", post_paths.in_policy, "Base policy checkpoint (default: bc.json)");
  post->add_option("--out-policy", post_paths.out_policy, "Output checkpoint (default: checkpoint.json)");
  post->add_option("--out-critic-data", post_paths.critic_data, "Critic JSONL (default: data/critic.jsonl)");
  post->add_option("--out-trigger-data", post_paths.trigger_data, "Trigger JSONL (default: data/trigger.jsonl)");
  auto* critic = app.add_subcommand("train-critic", "Train the advantage critic");
  add_common(critic, common, true);
  auto* trigger = app.add_subcommand("train-trigger", "Train and calibrate the early-exit trigger");
  add_common(trigger, common, true);
  auto* calib = app.add_subcommand("calibrate-trigger", "Recalibrate the trigger threshold");
  add_common(calib, common, false);
  std::string calib_data;
  std::optional<double> min_recall;
  calib->add_option("--data", calib_data, "Trigger JSONL (default: data/trigger_val.jsonl)");
  calib->add_option("--min-recall", min_recall, "Target recall on incorrect proposals (trigger.min_recall)");
  auto* eval = app.add_subcommand("eval", "Evaluate the configured agent modes");
  add_common(eval, common, true);
  std::string eval_tasks, eval_out;
  eval->add_option("--tasks", eval_tasks, "Task suite (default: tasks/eval.json)");
  eval->add_option("-o,--out", eval_out, "Report directory (default: <run-dir>/eval)");
  auto* ablate = app.add_subcommand("ablate", "Evaluate across values of one config key");
  add_common(ablate, common, true);
  std::string sweep;
  ablate->add_option("--sweep", sweep, "key=v1,v2,... e.g. reflect.beam_width=1,2,3")->required();
  auto* report = app.add_subcommand("report", "Summarize an episodes.jsonl report directory");
  std::string report_dir;
  report->add_option("input", report_dir, "Report directory")->required();
  auto* solve = app.add_subcommand("expert-solve", "Print the expert's optimal plan for a task");
  std::string solve_tasks;
  std::optional<int> solve_id, solve_index;
  solve->add_option("tasks,--task-file", solve_tasks, "Task suite JSON")->required();
  auto* by_id = solve->add_option("--task-id", solve_id, "Task id (default 0)");
  solve->add_option("--index", solve_index, "Position in the suite")->excludes(by_id);
  auto* pipe = app.add_subcommand("pipeline", "Run every stage end to end");
  add_common(pipe, common, true);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) cmd_gen_tasks(common, gen_opts);
    if (*bc) cmd_train_bc(common);
    if (*post) cmd_posttrain(common, post_paths);
    if (*critic) cmd_train_critic(common);
    if (*trigger) cmd_train_trigger(common);
    if (*calib) cmd_calibrate(common, calib_data, min_recall);
    if (*eval) cmd_eval(common, eval_tasks, eval_out);
    if (*ablate) cmd_ablate(common, sweep);
    if (*report) cmd_report(report_dir);
    if (*solve) cmd_expert_solve(solve_tasks, solve_id, solve_index);
    if (*pipe) cmd_pipeline(common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
