#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "foresight/env.hpp"
#include "oracles.hpp"

using namespace foresight;

namespace {

// Hand-built task: slot s accepts piece s.
TaskInstance manual_task(int p) {
  TaskInstance t;
  t.num_pieces = p;
  for (int i = 0; i < p; ++i) {
    t.pieces.push_back(PieceSpec{i, i, -1});
    t.slots.push_back(SlotSpec{i, i, false, {}});
  }
  return t;
}

void check_state_invariants(const PuzzleState& s) {
  int held = 0;
  std::set<int> slots;
  for (int i = 0; i < s.num_pieces; ++i) {
    held += s.pieces[i].location == Location::kHeld;
    if (s.pieces[i].location == Location::kInserted) {
      REQUIRE(s.pieces[i].slot >= 0);
      REQUIRE(s.pieces[i].slot < s.num_pieces);
      REQUIRE(slots.insert(s.pieces[i].slot).second);
    }
  }
  REQUIRE(held <= 1);
}

PuzzleState random_walk_state(const TaskInstance& t, Rng& rng, int steps) {
  PuzzleState s = initial_state(t);
  for (int i = 0; i < steps; ++i) {
    const auto legal = legal_actions(s, t);
    s = apply_action(s, t, legal[uniform_int(rng, static_cast<int>(legal.size()))]);
  }
  return s;
}

}  // namespace

TEST_CASE("generate_task is deterministic") {
  const GeneratorParams p{3, 0.5, 0.5, 0.0};
  CHECK(generate_task(7, p) == generate_task(7, p));
  CHECK_FALSE(generate_task(7, p) == generate_task(8, p));
}

TEST_CASE("zero density gives no prerequisites") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto t = generate_task(seed, {6, 0.0, 0.5, 0.3});
    for (const auto& s : t.slots) CHECK(s.prerequisites.empty());
  }
}

TEST_CASE("dense prerequisites remain acyclic") {
  const auto t = generate_task(11, {4, 1.0, 0.0, 0.0});
  // Repeatedly remove slots whose prerequisites are all removed.
  std::vector<bool> done(4, false);
  for (int round = 0; round < 4; ++round)
    for (const auto& s : t.slots) {
      if (done[s.slot_id]) continue;
      bool ready = true;
      for (int r : s.prerequisites) ready = ready && done[r];
      if (ready) done[s.slot_id] = true;
    }
  for (bool d : done) CHECK(d);
  CHECK_NOTHROW(validate_task(t));
}

TEST_CASE("generated tasks satisfy the task invariants") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const int p = 2 + static_cast<int>(seed % (kMaxPieces - 1));
    const auto t = generate_task(seed, {p, 0.6, 0.4, 0.5});
    CHECK_NOTHROW(validate_task(t));
    std::set<int> colors, accepts;
    for (const auto& pc : t.pieces) colors.insert(pc.color_id);
    for (const auto& s : t.slots) accepts.insert(s.accepts);
    CHECK(colors.size() == static_cast<std::size_t>(p));
    CHECK(accepts.size() == static_cast<std::size_t>(p));
    for (const auto& pc : t.pieces)
      if (pc.initial_slot >= 0) CHECK(t.slots[pc.initial_slot].accepts != pc.piece_id);
  }
}

TEST_CASE("misplacement produces wrongly inserted pieces") {
  int misplaced = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (const auto& pc : generate_task(seed, {5, 0.5, 0.3, 0.5}).pieces) misplaced += pc.initial_slot >= 0;
  CHECK(misplaced > 0);
}

TEST_CASE("generator rejects bad parameters") {
  CHECK_THROWS_AS(generate_task(0, {1, 0.5, 0.5, 0.0}), InvalidTaskError);
  CHECK_THROWS_AS(generate_task(0, {kMaxPieces + 1, 0.5, 0.5, 0.0}), InvalidTaskError);
  CHECK_THROWS_AS(generate_task(0, {3, 1.5, 0.5, 0.0}), InvalidTaskError);
  CHECK_THROWS_AS(generate_task(0, {3, 0.5, -0.1, 0.0}), InvalidTaskError);
  CHECK_THROWS_AS(generate_task(0, {3, 0.5, 0.5, 2.0}), InvalidTaskError);
}

TEST_CASE("validate_task rejects broken tasks") {
  auto t = manual_task(3);
  t.slots[0].prerequisites = {1};
  t.slots[1].prerequisites = {0};
  CHECK_THROWS_AS(validate_task(t), InvalidTaskError);
  t = manual_task(3);
  t.slots[1].accepts = 0;
  CHECK_THROWS_AS(validate_task(t), InvalidTaskError);
  t = manual_task(3);
  t.pieces[2].color_id = 0;
  CHECK_THROWS_AS(validate_task(t), InvalidTaskError);
}

TEST_CASE("reconfigure keeps the latent structure") {
  const auto t = generate_task(5, {5, 0.5, 0.4, 0.0});
  const auto r = reconfigure(t, 99, 1.0, 3);
  CHECK(r.slots == t.slots);
  CHECK(r.task_id == 3);
  for (int i = 0; i < 5; ++i) CHECK(r.pieces[i].color_id == t.pieces[i].color_id);
}

TEST_CASE("reset") {
  const auto t = generate_task(3, {4, 0.5, 0.5, 0.0});
  const auto a = reset(t);
  const auto b = reset(t);
  CHECK(a.state == b.state);
  CHECK(a.observation == b.observation);
  CHECK(a.goal == b.goal);
  CHECK(a.state.held() < 0);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.state.pieces[i].location == Location::kOnTable);
    CHECK(a.goal[i * kPieceFeatureWidth + kLocationOffset + static_cast<int>(Location::kInserted)] == 1.0);
  }
}

TEST_CASE("step examples") {
  auto t = manual_task(2);
  t.slots[1].prerequisites = {0};
  t.slots[0].requires_orientation = true;
  Rng rng(1);
  PuzzleState s = initial_state(t);
  s.pieces[0] = {Location::kHeld, -1, true};

  const auto ok = step(s, t, {Verb::kInsert, 0}, rng, 0.0);
  CHECK(ok.executed);
  CHECK_FALSE(ok.invalid);
  CHECK(ok.next_state.pieces[0].location == Location::kInserted);
  CHECK(ok.next_state.pieces[0].slot == 0);
  CHECK(ok.next_state.step_count == 1);

  PuzzleState s2 = initial_state(t);
  s2.pieces[1] = {Location::kHeld, -1, false};
  const auto bad = step(s2, t, {Verb::kInsert, 1}, rng, 0.0);
  CHECK(bad.invalid);
  CHECK_FALSE(bad.executed);
  CHECK(same_configuration(bad.next_state, s2));
  CHECK(bad.next_state.step_count == s2.step_count + 1);

  PuzzleState s3 = initial_state(t);
  s3.pieces[0] = {Location::kHeld, -1, false};
  CHECK(step(s3, t, {Verb::kInsert, 0}, rng, 0.0).invalid);
}

TEST_CASE("locked pieces cannot be picked up") {
  auto t = manual_task(2);
  t.slots[1].prerequisites = {0};
  PuzzleState s = goal_state(t);
  CHECK_FALSE(is_valid(s, t, {Verb::kPickUp, 0}));
  CHECK(is_valid(s, t, {Verb::kPickUp, 1}));
}

TEST_CASE("failure rate is respected") {
  const auto t = manual_task(3);
  Rng rng(2024);
  const PuzzleState s = initial_state(t);
  int failed = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) failed += !step(s, t, {Verb::kPickUp, i % 3}, rng, 0.1).executed;
  CHECK(std::abs(static_cast<double>(failed) / n - 0.1) <= 0.01);
}

TEST_CASE("legal_actions examples") {
  const auto t = manual_task(3);
  for (const auto& a : legal_actions(initial_state(t), t)) CHECK(a.verb == Verb::kPickUp);
  CHECK(legal_actions(initial_state(t), t).size() == 3);
  for (const auto& a : legal_actions(goal_state(t), t)) CHECK(a.verb == Verb::kPickUp);
  PuzzleState h = initial_state(t);
  h.pieces[1].location = Location::kHeld;
  for (const auto& a : legal_actions(h, t))
    if (a.verb == Verb::kInsert) CHECK(a.object == 1);
}

TEST_CASE("legal_actions matches the precondition oracle") {
  Rng rng(7);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto t = generate_task(seed, {4, 0.6, 0.5, 0.4});
    for (int k = 0; k < 10; ++k) {
      const PuzzleState s = random_walk_state(t, rng, uniform_int(rng, 20));
      std::vector<Action> expected;
      for (Verb v : kAllVerbs)
        for (int o = 0; o < 4; ++o)
          if (oracle::valid(s, t, {v, o})) expected.push_back({v, o});
      CHECK(legal_actions(s, t) == expected);
      std::vector<Action> filtered;
      for (Verb v : kAllVerbs)
        for (int o = 0; o < 4; ++o) {
          Rng r(0);
          if (!step(s, t, {v, o}, r, 0.0).invalid) filtered.push_back({v, o});
        }
      CHECK(filtered == expected);
    }
  }
}

TEST_CASE("is_goal examples") {
  const auto t = manual_task(3);
  CHECK(is_goal(goal_state(t), t));
  CHECK_FALSE(is_goal(initial_state(t), t));
  PuzzleState s = goal_state(t);
  s.pieces[2] = {Location::kHeld, -1, false};
  CHECK_FALSE(is_goal(s, t));
}

TEST_CASE("encode hides latent fields and pads with zeros") {
  auto a = manual_task(3);
  auto b = a;
  b.slots[1].requires_orientation = true;
  b.slots[2].prerequisites = {0};
  const PuzzleState s = initial_state(a);
  CHECK(encode(s, a) == encode(s, b));
  const Observation o = encode(s, a);
  for (int i = 3 * kPieceFeatureWidth; i < kObservationSize; ++i) CHECK(o[i] == 0.0);
}

TEST_CASE("encode is injective on visible configurations") {
  Rng rng(3);
  const auto t = generate_task(17, {5, 0.3, 0.5, 0.5});
  std::map<std::uint64_t, Observation> seen;
  for (int i = 0; i < 1000; ++i) {
    const PuzzleState s = random_walk_state(t, rng, uniform_int(rng, 30));
    const Observation o = encode(s, t);
    auto [it, fresh] = seen.emplace(s.key(), o);
    if (!fresh) CHECK(it->second == o);
  }
  std::set<Observation> distinct;
  for (const auto& [k, o] : seen) distinct.insert(o);
  CHECK(distinct.size() == seen.size());
}

TEST_CASE("random action fuzzing preserves state invariants") {
  Rng rng(123);
  long steps = 0;
  for (std::uint64_t seed = 0; steps < 100000; ++seed) {
    const int p = 2 + static_cast<int>(seed % (kMaxPieces - 1));
    const auto t = generate_task(seed, {p, 0.5, 0.4, 0.4});
    PuzzleState s = initial_state(t);
    for (int i = 0; i < 500; ++i, ++steps) {
      const Action a{static_cast<Verb>(uniform_int(rng, kNumVerbs)), uniform_int(rng, p)};
      const StepResult r = step(s, t, a, rng, 0.1);
      REQUIRE_FALSE((r.executed && r.invalid));
      if (r.invalid) REQUIRE(same_configuration(r.next_state, s));
      REQUIRE(r.next_state.step_count == s.step_count + 1);
      REQUIRE(r.observation == encode(r.next_state, t));
      if (!r.invalid) {
        Rng r0(0);
        const StepResult d1 = step(s, t, a, r0, 0.0);
        const StepResult d2 = step(s, t, a, r0, 0.0);
        REQUIRE(d1.next_state == d2.next_state);
      }
      check_state_invariants(r.next_state);
      s = r.next_state;
    }
  }
  CHECK(steps >= 100000);
}

TEST_CASE("action text round trip") {
  for (Verb v : kAllVerbs)
    for (int o = 0; o < kMaxPieces; ++o) CHECK(parse_action(to_string({v, o})) == Action{v, o});
  CHECK_THROWS(parse_action("jump 1"));
  CHECK_THROWS(parse_action("insert"));
}
