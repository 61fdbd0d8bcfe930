#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "foresight/env.hpp"

namespace foresight {

class UnreachableGoalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full-state oracle. Distances are exact shortest-path lengths under the
// nominal (failure-free) dynamics, computed by breadth-first search and
// memoized per task. An Expert is not safe for concurrent use; give each
// worker its own instance.
class Expert {
 public:
  explicit Expert(TaskInstance task);

  const TaskInstance& task() const { return task_; }

  // Throws UnreachableGoalError if no action sequence reaches the goal.
  int goal_distance(const PuzzleState& state) const;

  // First action of a shortest plan; ties go to the lowest (verb, object).
  // Throws std::logic_error at the goal.
  Action expert_action(const PuzzleState& state) const;

  // Full optimal plan from `state`.
  std::vector<Action> solve(const PuzzleState& state) const;

  std::size_t cache_size() const { return distance_.size(); }

 private:
  void explore(const PuzzleState& state) const;

  TaskInstance task_;
  mutable std::unordered_map<std::uint64_t, int> distance_;
};

// Reduction in goal distance across a window: d_t - d_{t+H}.
inline int advantage(int distance_now, int distance_later) { return distance_now - distance_later; }

}  // namespace foresight
