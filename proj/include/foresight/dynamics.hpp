#pragma once

// Forward model used for imagination. Exact mode replays the nominal
// simulator; Corrupted mode emulates a learned image predictor by perturbing
// emitted observations and occasionally dropping an action's effect.

#include <cstdint>
#include <vector>

#include "foresight/env.hpp"

namespace foresight {

enum class ImaginationMode : std::uint8_t { kExact = 0, kCorrupted = 1 };

struct ImaginationConfig {
  ImaginationMode mode = ImaginationMode::kExact;
  double obs_noise = 0.0;         // per-feature perturbation probability
  double transition_noise = 0.0;  // probability a step silently does nothing
  std::uint64_t seed = 0;

  static ImaginationConfig exact() { return {}; }
  static ImaginationConfig corrupted(double obs_noise = 0.1, double transition_noise = 0.05,
                                     std::uint64_t seed = 0) {
    return {ImaginationMode::kCorrupted, obs_noise, transition_noise, seed};
  }
};

// Throws std::invalid_argument when noise levels are out of range or nonzero
// in Exact mode.
void validate(const ImaginationConfig& cfg);

struct ImaginedStep {
  PuzzleState state;
  Observation observation{};
};

ImaginedStep imagine_step(const PuzzleState& shadow, const TaskInstance& task, const Action& action,
                          const ImaginationConfig& cfg, Rng& rng);

struct ImaginedRollout {
  PuzzleState final_state;
  std::vector<Observation> observations;
};

ImaginedRollout imagine_rollout(const PuzzleState& start, const TaskInstance& task,
                                const std::vector<Action>& actions, const ImaginationConfig& cfg, Rng& rng);

// Applies per-feature corruption with probability `obs_noise`. Binary
// features are flipped; the slot-index feature is resampled uniformly among
// its other admissible values, so every selected feature changes.
void corrupt_observation(Observation& obs, double obs_noise, Rng& rng);

}  // namespace foresight
