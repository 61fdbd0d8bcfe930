// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "../oracles.hpp"
#include "foresight/experiment.hpp"
#include "foresight/expert.hpp"
#include "foresight/io.hpp"
#include "foresight/reflect.hpp"

using namespace foresight;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  failures += !pass;
  std::printf("[%s] C%-2d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) { std::cerr << "  " << s << "\n"; }

std::vector<double> random_logits(Rng& rng, int n, double scale) {
  std::vector<double> f(n);
  for (double& x : f) x = scale * standard_normal(rng);
  return f;
}

std::vector<double> random_distribution(Rng& rng, int n) {
  std::vector<double> p(n);
  double z = 0.0;
  for (double& x : p) z += x = -std::log(1.0 - uniform01(rng));
  for (double& x : p) x /= z;
  return p;
}

void randomize(nn::Tensors& params, Rng& rng, double scale) {
  for (auto& m : params)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
}

// Goal distance against an uncached breadth-first search, at the initial
// board and along a random walk.
void oracle_equivalence() {
  Rng rng(101);
  int tasks = 0, states = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const int p = 2 + static_cast<int>(seed % 4);
    const TaskInstance t = generate_task(7'000'000 + seed, {p, uniform01(rng), uniform01(rng) * 0.6, 0.3});
    const Expert expert(t);
    PuzzleState s = initial_state(t);
    for (int k = 0; k < 8; ++k) {
      mismatches += expert.goal_distance(s) != oracle::bfs_distance(s, t);
      ++states;
      const auto legal = legal_actions(s, t);
      s = apply_action(s, t, legal[uniform_int(rng, static_cast<int>(legal.size()))]);
    }
    ++tasks;
  }
  report(1, "oracle equivalence", mismatches == 0,
         fmt("%d tasks (P 2..5), %d states, %d mismatches", tasks, states, mismatches));
}

PolicyContext random_context(Rng& rng, int p, bool reflect, int horizon) {
  const auto t = generate_task(rng(), {p, 0.5, 0.4, 0.4});
  PuzzleState s = initial_state(t);
  for (int k = uniform_int(rng, 8); k > 0; --k) {
    const auto legal = legal_actions(s, t);
    s = apply_action(s, t, legal[uniform_int(rng, static_cast<int>(legal.size()))]);
  }
  PolicyContext ctx;
  ctx.current = encode(s, t);
  ctx.goal = encode_goal(t);
  ctx.num_pieces = p;
  if (reflect) {
    ctx.kind = ContextKind::kReflect;
    ctx.advantage = standard_normal(rng) * 3;
    for (int j = uniform_int(rng, horizon + 1); j > 0; --j)
      ctx.plan.push_back({static_cast<Verb>(uniform_int(rng, kNumVerbs)), uniform_int(rng, p)});
  }
  return ctx;
}

void gradient_checks() {
  Rng rng(202);
  double policy = 0.0, critic = 0.0, trigger = 0.0;
  for (int point = 0; point < 20; ++point) {
    PolicyModel m(PolicyShape{6, 3, 5}, point);
    randomize(m.parameters(), rng, 0.3);
    std::vector<PolicyExample> batch;
    for (int b = 0; b < 4; ++b) {
      const int p = 2 + uniform_int(rng, 5);
      batch.push_back({random_context(rng, p, b % 2 == 1, 5),
                       {static_cast<Verb>(uniform_int(rng, kNumVerbs)), uniform_int(rng, p)}});
    }
    nn::Tensors grad;
    m.loss_and_gradient(batch, grad);
    policy = std::max(policy, oracle::gradient_error(m.parameters(), grad, [&] { return m.loss(batch); }));
  }
  for (int point = 0; point < 20; ++point) {
    CriticModel m(6, point);
    randomize(m.parameters(), rng, 0.3);
    std::vector<CriticExample> batch;
    for (int b = 0; b < 4; ++b) {
      CriticExample ex;
      for (auto* o : {&ex.current, &ex.future, &ex.goal})
        for (double& x : *o) x = bernoulli(rng, 0.3) ? 1.0 : 0.0;
      ex.label = standard_normal(rng) * 6;  // some labels beyond the clip
      batch.push_back(ex);
    }
    nn::Tensors grad;
    m.loss_and_gradient(batch, 10.0, grad);
    critic = std::max(critic, oracle::gradient_error(m.parameters(), grad, [&] { return m.loss(batch, 10.0); }));
  }
  for (int point = 0; point < 20; ++point) {
    TriggerModel m(16, 8, point);
    randomize(m.parameters(), rng, 0.5);
    std::vector<TriggerExample> batch;
    for (int b = 0; b < 6; ++b) batch.push_back({random_logits(rng, 16, 1.0), b % 2});
    const double w = 0.2 + 3 * uniform01(rng);
    nn::Tensors grad;
    m.loss_and_gradient(batch, w, grad);
    trigger = std::max(trigger, oracle::gradient_error(m.parameters(), grad, [&] { return m.loss(batch, w); }));
  }
  const double worst = std::max({policy, critic, trigger});
  report(2, "gradient checks", worst < 1e-4,
         fmt("max relative error policy %.2e, critic %.2e, trigger %.2e over 20 points each", policy, critic,
             trigger));
}

void distribution_sanity() {
  Rng rng(303);
  double worst_sum = 0.0, worst_degenerate = 0.0;
  bool negative = false;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + uniform_int(rng, 9);
    const double scale = trial % 10 == 0 ? 30.0 : 3.0;
    ReflectConfig cfg;
    cfg.alpha1 = 3 * uniform01(rng);
    cfg.alpha2 = 3 * uniform01(rng);
    cfg.gamma = uniform01(rng);
    std::vector<Logits> b(1 + uniform_int(rng, 3)), p(uniform_int(rng, 3)), s(uniform_int(rng, 3));
    for (auto* g : {&b, &p, &s})
      for (auto& f : *g) f = random_logits(rng, n, scale);
    const auto agg = aggregate_position(b, p, s, cfg);
    double sum = 0.0;
    for (double v : agg.distribution) {
      negative |= v < 0.0;
      sum += v;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    // alpha1 = 0 with promising refs, alpha2 = 0 with divergent refs: plain softmax of one base stream.
    const std::vector<Logits> one{b[0]};
    const auto ref = oracle::softmax(b[0]);
    ReflectConfig a1 = cfg, a2 = cfg;
    a1.alpha1 = 0.0;
    a2.alpha2 = 0.0;
    a2.gamma = 0.0;
    const auto prom = aggregate_position(one, s.empty() ? b : s, {}, a1);
    const auto contr = aggregate_position(one, {}, p.empty() ? b : p, a2);
    for (int i = 0; i < n; ++i)
      worst_degenerate = std::max({worst_degenerate, std::abs(prom.distribution[i] - ref[i]),
                                   std::abs(contr.distribution[i] - ref[i])});
  }
  report(3, "distribution sanity", !negative && worst_sum <= 1e-9 && worst_degenerate <= 1e-12,
         fmt("10000 logit sets: negative=%s, max |sum-1| %.1e, max degenerate deviation %.1e",
             negative ? "yes" : "no", worst_sum, worst_degenerate));
}

void jsd_properties() {
  Rng rng(404);
  double asym = 0.0, below = 0.0, above = 0.0, self = 0.0, oracle_gap = 0.0, smallest_distinct = 1.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + uniform_int(rng, 9);
    auto p = random_distribution(rng, n);
    auto q = random_distribution(rng, n);
    if (trial % 5 == 0) {  // nearly equal pair
      q = p;
      const int i = uniform_int(rng, n), j = (i + 1) % n;
      const double e = 1e-3 * p[i];
      q[i] -= e;
      q[j] += e;
    }
    if (trial % 11 == 0) {  // disjoint supports reach the upper bound
      std::fill(p.begin(), p.end(), 0.0);
      std::fill(q.begin(), q.end(), 0.0);
      p[0] = 1.0;
      q[1] = 1.0;
    }
    const double d = jsd(p, q);
    asym = std::max(asym, std::abs(d - jsd(q, p)));
    below = std::min(below, d);
    above = std::max(above, d - 1.0);
    self = std::max({self, std::abs(jsd(p, p)), std::abs(jsd(q, q))});
    oracle_gap = std::max(oracle_gap, std::abs(d - oracle::jsd(p, q)));
    if (p != q) smallest_distinct = std::min(smallest_distinct, d);
  }
  const bool pass = asym < 1e-12 && below >= 0.0 && above <= 1e-12 && self < 1e-12 && smallest_distinct > 1e-12 &&
                    oracle_gap < 1e-12;
  report(4, "JSD properties", pass,
         fmt("10000 pairs: max asymmetry %.1e, min %.1e, max-1 %.1e, max self %.1e, smallest distinct %.1e, "
             "oracle gap %.1e",
             asym, below, above, self, smallest_distinct, oracle_gap));
}

void environment_statistics() {
  Rng rng(1010);
  int valid = 0, failed = 0;
  std::uint64_t seed = 0;
  while (valid < 10000) {
    const TaskInstance t = generate_task(9'000'000 + seed++, {5, 0.5, 0.4, 0.3});
    PuzzleState s = initial_state(t);
    for (int k = 0; k < 40 && valid < 10000 && !is_goal(s, t); ++k) {
      const auto legal = legal_actions(s, t);
      const Action a = legal[uniform_int(rng, static_cast<int>(legal.size()))];
      const StepResult r = step(s, t, a, rng, 0.1);
      ++valid;
      failed += !r.executed;
      s = r.next_state;
    }
  }
  const double rate = static_cast<double>(failed) / valid;
  report(10, "environment statistics", std::abs(rate - 0.1) <= 0.01,
         fmt("executed=false on %d of %d valid actions (%.4f)", failed, valid, rate));
}

const ModeSummary& mode(const Summary& s, const std::string& label) {
  for (const auto& m : s.modes)
    if (m.label == label) return m;
  throw std::runtime_error("missing mode " + label);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Two invocations of the command-line `eval` on one run directory.
void reproducibility(const ExperimentConfig& cfg, const PipelineResult& run, std::uint64_t seed,
                     const std::string& cli, int tasks) {
  const fs::path dir = fs::temp_directory_path() / fmt("foresight_acceptance_%d", static_cast<int>(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  ExperimentConfig c = cfg;
  c.tau = run.trigger.tau;
  io::write_text(dir / "config.json", to_json(c).dump(2) + "\n");
  io::Checkpoint bc, ck;
  bc.policy = run.bc.policy;
  ck.policy = run.posttrain.policy;
  ck.critic = run.critic.model;
  ck.trigger = run.trigger.model;
  io::save_checkpoint(bc, dir / "bc.json");
  io::save_checkpoint(ck, dir / "checkpoint.json");
  std::vector<TaskInstance> suite(run.suites.eval.begin(),
                                  run.suites.eval.begin() + std::min<std::size_t>(tasks, run.suites.eval.size()));
  io::save_tasks(suite, dir / "eval_tasks.json");

  std::string a, b, how;
  if (!cli.empty()) {
    how = "command-line eval";
    for (const char* out : {"a", "b"}) {
      const std::string cmd = "\"" + cli + "\" eval -r \"" + dir.string() + "\" -s " + std::to_string(seed) +
                              " --tasks \"" + (dir / "eval_tasks.json").string() + "\" -o \"" + (dir / out).string() +
                              "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) {
        report(11, "reproducibility", false, "command failed: " + cmd);
        return;
      }
    }
  } else {
    how = "in-process run_eval (no --cli given)";
    for (const char* out : {"a", "b"}) {
      const ModelSet ms{&*bc.policy, &*ck.policy, &*ck.critic, &*ck.trigger, c.tau};
      write_report(run_eval(c, suite, ms, seed), dir / out);
    }
  }
  a = read_file(dir / "a" / "episodes.jsonl");
  b = read_file(dir / "b" / "episodes.jsonl");
  const std::size_t lines = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n'));
  report(11, "reproducibility", !a.empty() && a == b,
         fmt("%s twice on %zu tasks: %zu JSONL lines, %zu bytes, identical=%s", how.c_str(), suite.size(), lines,
             a.size(), a == b ? "yes" : "no"));
  fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string cli;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int repro_tasks = 60;
  app.add_option("--cli", cli, "Path to the command-line tool, used for the reproducibility check");
  app.add_option("--seeds", seeds, "Run seeds for the pipeline criteria")->capture_default_str();
  app.add_option("--repro-tasks", repro_tasks, "Evaluation tasks for the reproducibility check")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const auto t0 = std::chrono::steady_clock::now();
  oracle_equivalence();
  gradient_checks();
  distribution_sanity();
  jsd_properties();

  const ExperimentConfig cfg;
  std::vector<PipelineResult> runs;
  for (const auto seed : seeds) {
    std::cerr << "pipeline seed " << seed << "\n";
    runs.push_back(run_pipeline(cfg, seed, progress));
    std::cerr << format_table(runs.back().summary);
  }
  const double n = static_cast<double>(runs.size());

  {
    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& s = runs[i].summary;
      const double base = mode(s, "bc_base").success_rate, post = mode(s, "bc_posttrained").success_rate;
      pass &= post - base >= 0.05 && mode(s, "bc_base").episodes >= 100;
      detail += fmt("%sseed %llu %.3f -> %.3f (%+.1f pts)", i ? ", " : "", static_cast<unsigned long long>(seeds[i]),
                    base, post, 100 * (post - base));
    }
    report(5, "DAgger gain", pass, detail + "; need >= +5 pts on every seed");
  }
  {
    double mp = 0, st = 0, bon = 0, mv = 0;
    for (const auto& r : runs) {
      mp += mode(r.summary, "multipath").success_rate / n;
      st += mode(r.summary, "single_traj").success_rate / n;
      bon += mode(r.summary, "best_of_n").success_rate / n;
      mv += mode(r.summary, "majority_vote").success_rate / n;
    }
    const bool pass = mp >= st && st >= std::max(bon, mv) && mp - bon >= 0.02;
    report(6, "reflection ordering", pass,
           fmt("mean success MultiPath %.3f, SingleTraj %.3f, BestOfN %.3f, MajorityVote %.3f", mp, st, bon, mv));
  }
  {
    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const double o = mode(runs[i].summary, "multipath_oracle").success_rate;
      const double l = mode(runs[i].summary, "multipath").success_rate;
      pass &= o >= l;
      detail += fmt("%sseed %llu oracle %.3f vs learned %.3f", i ? ", " : "",
                    static_cast<unsigned long long>(seeds[i]), o, l);
    }
    report(7, "oracle-value upper bound", pass, detail);
  }
  {
    double rate = 0, trig = 0, always = 0, fp_trig = 0, fp_always = 0, recall = 0, tau = 0;
    for (const auto& r : runs) {
      const auto& t = mode(r.summary, "multipath_trigger");
      const auto& a = mode(r.summary, "multipath");
      rate += t.reflection_rate / n;
      trig += t.success_rate / n;
      always += a.success_rate / n;
      fp_trig += t.mean_forward_passes / n;
      fp_always += a.mean_forward_passes / n;
      recall += r.trigger.calibration_recall / n;
      tau += r.trigger.tau / n;
    }
    const double drop = 1.0 - fp_trig / fp_always;
    const bool pass = recall >= 0.7 && rate <= 0.6 && std::abs(trig - always) <= 0.03 && drop >= 0.3;
    report(8, "early exit", pass,
           fmt("mean tau %.3f (recall %.2f), reflects on %.1f%% of decisions, success %.3f vs %.3f always, "
               "forward passes -%.1f%%",
               tau, recall, 100 * rate, trig, always, 100 * drop));
  }
  {
    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& rep = runs[i].critic.report;
      pass &= rep.best_validation_mse < rep.validation_label_variance;
      detail += fmt("%sseed %llu MSE %.3f vs variance %.3f", i ? ", " : "", static_cast<unsigned long long>(seeds[i]),
                    rep.best_validation_mse, rep.validation_label_variance);
    }
    report(9, "critic quality", pass, detail);
  }
  environment_statistics();
  reproducibility(cfg, runs.front(), seeds.front(), cli, repro_tasks);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d of 11 criteria failed; %.0f s\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
