#include "foresight/expert.hpp"

#include <deque>

namespace foresight {

namespace {
constexpr int kUnreachable = -1;
}

Expert::Expert(TaskInstance task) : task_(std::move(task)) { validate_task(task_); }

// Enumerates the forward closure of `start`, then runs a multi-source
// backward BFS from every goal configuration inside it. The closure is closed
// under transitions, so the distances it yields are exact.
void Expert::explore(const PuzzleState& start) const {
  std::unordered_map<std::uint64_t, int> index;
  std::vector<PuzzleState> states;
  std::vector<std::vector<int>> predecessors;
  std::deque<int> frontier;

  auto intern = [&](const PuzzleState& s) {
    auto [it, inserted] = index.try_emplace(s.key(), static_cast<int>(states.size()));
    if (inserted) {
      PuzzleState clean = s;
      clean.step_count = 0;
      states.push_back(clean);
      predecessors.emplace_back();
      frontier.push_back(it->second);
    }
    return it->second;
  };
  intern(start);
  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    const PuzzleState current = states[id];
    for (const Action& a : legal_actions(current, task_)) {
      const int next = intern(apply_action(current, task_, a));
      predecessors[next].push_back(id);
    }
  }

  std::vector<int> dist(states.size(), kUnreachable);
  std::deque<int> queue;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (is_goal(states[i], task_)) {
      dist[i] = 0;
      queue.push_back(static_cast<int>(i));
    }
  }
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    for (int pred : predecessors[id]) {
      if (dist[pred] == kUnreachable) {
        dist[pred] = dist[id] + 1;
        queue.push_back(pred);
      }
    }
  }
  for (std::size_t i = 0; i < states.size(); ++i) distance_.emplace(states[i].key(), dist[i]);
}

int Expert::goal_distance(const PuzzleState& state) const {
  auto it = distance_.find(state.key());
  if (it == distance_.end()) {
    explore(state);
    it = distance_.find(state.key());
  }
  if (it->second == kUnreachable)
    throw UnreachableGoalError("goal unreachable from state in task " + std::to_string(task_.task_id));
  return it->second;
}

Action Expert::expert_action(const PuzzleState& state) const {
  const int d = goal_distance(state);
  if (d == 0) throw std::logic_error("expert_action called at the goal");
  // legal_actions is already in (verb, object) order.
  for (const Action& a : legal_actions(state, task_)) {
    const PuzzleState next = apply_action(state, task_, a);
    auto it = distance_.find(next.key());
    if (it != distance_.end() && it->second == d - 1) return a;
  }
  throw std::logic_error("no distance-decreasing action found");
}

std::vector<Action> Expert::solve(const PuzzleState& state) const {
  std::vector<Action> plan;
  PuzzleState s = state;
  while (goal_distance(s) > 0) {
    const Action a = expert_action(s);
    plan.push_back(a);
    s = apply_action(s, task_, a);
  }
  return plan;
}

}  // namespace foresight
