#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "foresight/expert.hpp"
#include "foresight/harness.hpp"
#include "foresight/io.hpp"

using namespace foresight;

namespace {

std::vector<TaskInstance> suite(int n, int pieces, std::uint64_t first = 0) {
  std::vector<TaskInstance> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_task(first + i, {pieces, 0.5, 0.4, 0.3}, i));
  return out;
}

AgentMode mode(AgentKind kind, double tau = 1.0) {
  AgentMode m;
  m.label = std::string(agent_kind_name(kind));
  m.kind = kind;
  m.dynamics = ImaginationConfig::corrupted(0.1, 0.05);
  m.reflect.beam_width = 3;
  m.tau = tau;
  return m;
}

// Every serialized field; wall-clock time is excluded.
bool same(const EpisodeRecord& a, const EpisodeRecord& b) {
  return io::to_json(a, "").dump() == io::to_json(b, "").dump();
}

struct Fixture {
  PolicyModel policy{PolicyShape{}, 1};
  CriticModel critic{16, 2};
  TriggerModel trigger{64, 16, 3};
  Models models{&policy, &critic, &trigger};
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("expert agent solves every task in d0 steps") {
  for (const auto& t : suite(100, 5)) {
    const auto r = run_episode(t, {}, mode(AgentKind::kExpert), {});
    CHECK(r.success);
    CHECK(r.steps == r.initial_distance);
    CHECK(r.budget == 4 * r.initial_distance + 8);
    CHECK(r.invalid_actions == 0);
    CHECK(r.policy_forward_passes == 0);
  }
}

TEST_CASE("random agent rarely succeeds") {
  const auto tasks = suite(100, 4);
  const auto s = evaluate(tasks, {}, {mode(AgentKind::kRandom)}, {1, 0.0, 5, 1});
  CHECK(s.modes[0].success_rate < 0.1);
}

TEST_CASE("proposal-only agents never reflect") {
  Fixture f;
  const auto s = evaluate(suite(20, 4), f.models, {mode(AgentKind::kProposal)}, {1, 0.05, 1, 1});
  CHECK(s.modes[0].reflection_rate == 0.0);
  for (const auto& e : s.episodes[0]) {
    CHECK(e.revisions == 0);
    CHECK(e.policy_forward_passes == 2 * static_cast<std::uint64_t>(e.steps));
  }
}

TEST_CASE("trigger thresholds bracket the always and never modes") {
  Fixture f;
  const auto tasks = suite(10, 4);
  const EvaluateOptions opt{1, 0.05, 2, 1};
  const auto s = evaluate(tasks, f.models,
                          {mode(AgentKind::kMultiPath), mode(AgentKind::kMultiPathTrigger, 1.0),
                           mode(AgentKind::kProposal), mode(AgentKind::kMultiPathTrigger, 0.0)},
                          opt);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(same(s.episodes[0][i], s.episodes[1][i]));
    CHECK(same(s.episodes[2][i], s.episodes[3][i]));
  }
  CHECK(s.modes[1].reflection_rate == 1.0);
  CHECK(s.modes[3].reflection_rate == 0.0);
}

TEST_CASE("missing models are rejected") {
  const auto t = suite(1, 3)[0];
  Fixture f;
  CHECK_THROWS_AS(run_episode(t, {}, mode(AgentKind::kProposal), {}), std::invalid_argument);
  CHECK_THROWS_AS(run_episode(t, {&f.policy, nullptr, nullptr}, mode(AgentKind::kMultiPath), {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_episode(t, {&f.policy, &f.critic, nullptr}, mode(AgentKind::kMultiPathTrigger), {}),
                  std::invalid_argument);
  auto oracle = mode(AgentKind::kMultiPath);
  oracle.critic = CriticMode::kOracle;
  CHECK_NOTHROW(run_episode(t, {&f.policy, nullptr, nullptr}, oracle, {}));
  CHECK_NOTHROW(run_episode(t, {&f.policy, nullptr, nullptr}, mode(AgentKind::kBestOfN), {}));
}

TEST_CASE("summary statistics match the records") {
  Fixture f;
  const auto s = evaluate(suite(30, 4), f.models,
                          {mode(AgentKind::kExpert), mode(AgentKind::kProposal), mode(AgentKind::kSingleTraj)},
                          {2, 0.1, 3, 1});
  REQUIRE(s.modes.size() == 3);
  for (std::size_t m = 0; m < s.modes.size(); ++m) {
    const auto& eps = s.episodes[m];
    CHECK(eps.size() == 60);
    int ok = 0, decisions = 0, reflections = 0;
    for (const auto& e : eps) {
      ok += e.success;
      decisions += e.steps;
      reflections += e.reflections;
    }
    CHECK(s.modes[m].episodes == 60);
    CHECK(s.modes[m].successes == ok);
    CHECK(s.modes[m].success_rate == doctest::Approx(ok / 60.0));
    const double p = ok / 60.0;
    CHECK(s.modes[m].success_stderr == doctest::Approx(std::sqrt(p * (1 - p) / 60.0)));
    CHECK(s.modes[m].decisions == decisions);
    CHECK(s.modes[m].reflection_rate == doctest::Approx(static_cast<double>(reflections) / decisions));
  }
  CHECK(s.modes[2].reflection_rate == 1.0);
}

TEST_CASE("empty suites summarize to zero") {
  const auto s = evaluate({}, {}, {mode(AgentKind::kExpert)}, {});
  REQUIRE(s.modes.size() == 1);
  CHECK(s.modes[0].episodes == 0);
  CHECK(s.modes[0].success_rate == 0.0);
  CHECK(s.modes[0].mean_steps == 0.0);
}

TEST_CASE("results do not depend on the worker count") {
  Fixture f;
  const auto tasks = suite(12, 4);
  const std::vector<AgentMode> modes{mode(AgentKind::kMultiPath), mode(AgentKind::kMajorityVote)};
  const auto a = evaluate(tasks, f.models, modes, {2, 0.05, 4, 1});
  const auto b = evaluate(tasks, f.models, modes, {2, 0.05, 4, 3});
  for (std::size_t m = 0; m < modes.size(); ++m) {
    REQUIRE(a.episodes[m].size() == b.episodes[m].size());
    for (std::size_t i = 0; i < a.episodes[m].size(); ++i) CHECK(same(a.episodes[m][i], b.episodes[m][i]));
  }
  CHECK_THROWS(evaluate(tasks, f.models, modes, {0, 0.0, 0, 1}));
  CHECK_THROWS(evaluate(tasks, f.models, modes, {1, 0.0, 0, 0}));
}

TEST_CASE("reports round-trip") {
  Fixture f;
  const auto tasks = suite(8, 4);
  const std::vector<AgentMode> modes{mode(AgentKind::kProposal), mode(AgentKind::kBestOfN)};
  const auto s = evaluate(tasks, f.models, modes, {2, 0.05, 6, 1});
  const auto dir = std::filesystem::temp_directory_path() / "foresight_harness_report";
  std::filesystem::remove_all(dir);
  write_report(s, dir);

  std::ifstream in(dir / "episodes.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = io::json::parse(line);
    const std::size_t m = n / 16, i = n % 16;
    REQUIRE(m < 2);
    CHECK(j.at("mode") == modes[m].label);
    CHECK(same(io::episode_from_json(j), s.episodes[m][i]));
    ++n;
  }
  CHECK(n == 2 * tasks.size() * 2);

  const auto summary = io::read_json(dir / "summary.json");
  REQUIRE(summary.at("modes").size() == 2);
  const auto back = io::mode_summary_from_json(summary.at("modes")[1]);
  CHECK(back.success_rate == s.modes[1].success_rate);
  CHECK(back.episodes == s.modes[1].episodes);
  CHECK(read_file(dir / "summary.txt") == format_table(s));

  // Rewriting the same summary is byte-identical.
  const std::string first = read_file(dir / "episodes.jsonl");
  write_report(s, dir);
  CHECK(read_file(dir / "episodes.jsonl") == first);
  std::filesystem::remove_all(dir);
}

TEST_CASE("agent kind names round-trip") {
  for (auto k : {AgentKind::kExpert, AgentKind::kRandom, AgentKind::kProposal, AgentKind::kSingleTraj,
                 AgentKind::kBestOfN, AgentKind::kMajorityVote, AgentKind::kMultiPath, AgentKind::kMultiPathTrigger})
    CHECK(parse_agent_kind(agent_kind_name(k)) == k);
  CHECK_THROWS(parse_agent_kind("nope"));
}
