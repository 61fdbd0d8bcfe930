#include "foresight/dynamics.hpp"

#include <stdexcept>

namespace foresight {

void validate(const ImaginationConfig& cfg) {
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(cfg.obs_noise) || !unit(cfg.transition_noise))
    throw std::invalid_argument("imagination noise levels must be in [0,1]");
  if (cfg.mode == ImaginationMode::kExact && (cfg.obs_noise != 0.0 || cfg.transition_noise != 0.0))
    throw std::invalid_argument("exact imagination must have zero noise");
}

void corrupt_observation(Observation& obs, double obs_noise, Rng& rng) {
  if (obs_noise <= 0.0) return;
  for (int i = 0; i < kObservationSize; ++i) {
    if (!bernoulli(rng, obs_noise)) continue;
    if (i % kPieceFeatureWidth == kSlotIndexOffset) {
      // kMaxPieces + 1 admissible values: sentinel plus one per slot.
      const int current = static_cast<int>(std::lround(obs[i] * kMaxPieces));
      int pick = uniform_int(rng, kMaxPieces);
      if (pick >= current) ++pick;
      obs[i] = static_cast<double>(pick) / kMaxPieces;
    } else {
      obs[i] = obs[i] > 0.5 ? 0.0 : 1.0;
    }
  }
}

ImaginedStep imagine_step(const PuzzleState& shadow, const TaskInstance& task, const Action& action,
                          const ImaginationConfig& cfg, Rng& rng) {
  ImaginedStep out;
  out.state = shadow;
  const bool corrupted = cfg.mode == ImaginationMode::kCorrupted;
  const bool dropped = corrupted && cfg.transition_noise > 0.0 && bernoulli(rng, cfg.transition_noise);
  if (!dropped) {
    Rng unused(0);
    out.state = step(shadow, task, action, unused, 0.0).next_state;
  } else {
    out.state.step_count = shadow.step_count + 1;
  }
  out.observation = encode(out.state, task);
  if (corrupted) corrupt_observation(out.observation, cfg.obs_noise, rng);
  return out;
}

ImaginedRollout imagine_rollout(const PuzzleState& start, const TaskInstance& task,
                                const std::vector<Action>& actions, const ImaginationConfig& cfg, Rng& rng) {
  if (actions.empty()) throw std::invalid_argument("rollout needs at least one action");
  ImaginedRollout out;
  out.final_state = start;
  out.observations.reserve(actions.size());
  for (const Action& a : actions) {
    ImaginedStep s = imagine_step(out.final_state, task, a, cfg, rng);
    out.final_state = s.state;
    out.observations.push_back(s.observation);
  }
  return out;
}

}  // namespace foresight
