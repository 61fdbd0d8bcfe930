#include "foresight/env.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace foresight {
namespace {

// Latent orientation propensity per color. Low values mean the color tends to
// need reorientation; the permutation keeps it uncorrelated with color order.
double orientation_score(int color) {
  return (static_cast<double>((color * 7) % kPaletteSize) + 0.5) / kPaletteSize;
}

constexpr double kOrientationJitter = 0.15;

void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidTaskError(what);
}

}  // namespace

std::string_view verb_name(Verb verb) {
  switch (verb) {
    case Verb::kPickUp: return "pick_up";
    case Verb::kInsert: return "insert";
    case Verb::kReorient: return "reorient";
    case Verb::kPutDown: return "put_down";
  }
  return "?";
}

std::string to_string(const Action& action) {
  return std::string(verb_name(action.verb)) + " " + std::to_string(action.object);
}

Action parse_action(std::string_view text) {
  auto space = text.find(' ');
  if (space == std::string_view::npos) throw std::invalid_argument("malformed action");
  auto verb = text.substr(0, space);
  Action a;
  bool found = false;
  for (Verb v : kAllVerbs) {
    if (verb_name(v) == verb) {
      a.verb = v;
      found = true;
    }
  }
  if (!found) throw std::invalid_argument("unknown verb: " + std::string(verb));
  a.object = std::stoi(std::string(text.substr(space + 1)));
  return a;
}

int TaskInstance::slot_of(int piece) const {
  for (const auto& s : slots)
    if (s.accepts == piece) return s.slot_id;
  return -1;
}

namespace {

// Puts each piece, with probability `misplace_prob`, into a random empty slot
// that does not accept it.
void place_misplaced(TaskInstance& task, double misplace_prob, Rng& rng) {
  const int p = task.num_pieces;
  for (auto& piece : task.pieces) piece.initial_slot = -1;
  std::vector<bool> occupied(p, false);
  std::vector<int> order(p);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  for (int piece : order) {
    if (!bernoulli(rng, misplace_prob)) continue;
    std::vector<int> wrong;
    for (int s = 0; s < p; ++s)
      if (!occupied[s] && task.slots[s].accepts != piece) wrong.push_back(s);
    if (wrong.empty()) continue;
    const int s = wrong[uniform_int(rng, static_cast<int>(wrong.size()))];
    occupied[s] = true;
    task.pieces[piece].initial_slot = s;
  }
}

}  // namespace

TaskInstance generate_task(std::uint64_t seed, const GeneratorParams& params, int task_id) {
  const int p = params.num_pieces;
  require(p >= 2 && p <= kMaxPieces, "num_pieces must be in [2, " + std::to_string(kMaxPieces) + "]");
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  require(unit(params.dep_density), "dep_density must be in [0,1]");
  require(unit(params.orient_frac), "orient_frac must be in [0,1]");
  require(unit(params.misplace_prob), "misplace_prob must be in [0,1]");

  Rng rng(seed);
  TaskInstance task;
  task.task_id = task_id;
  task.num_pieces = p;
  task.seed = seed;

  std::vector<int> palette(kPaletteSize);
  std::iota(palette.begin(), palette.end(), 0);
  shuffle(palette, rng);
  std::vector<int> accepts(p);
  std::iota(accepts.begin(), accepts.end(), 0);
  shuffle(accepts, rng);

  // Piece ids follow ascending color, so id order is visible in observations.
  std::sort(palette.begin(), palette.begin() + p);
  task.pieces.resize(p);
  for (int i = 0; i < p; ++i) task.pieces[i] = PieceSpec{i, palette[i], -1};

  task.slots.resize(p);
  for (int s = 0; s < p; ++s) {
    SlotSpec& slot = task.slots[s];
    slot.slot_id = s;
    slot.accepts = accepts[s];
    const int color = task.pieces[slot.accepts].color_id;
    const double jitter = (2.0 * uniform01(rng) - 1.0) * kOrientationJitter;
    slot.requires_orientation = orientation_score(color) + jitter < params.orient_frac;
  }
  // Interlocking edges always point from a lower-colored piece's slot to a
  // higher-colored one, so ascending color order is a topological order.
  for (int s = 0; s < p; ++s) {
    const int cs = task.pieces[task.slots[s].accepts].color_id;
    for (int r = 0; r < p; ++r) {
      if (r == s) continue;
      const int cr = task.pieces[task.slots[r].accepts].color_id;
      if (cr < cs && bernoulli(rng, params.dep_density)) task.slots[s].prerequisites.push_back(r);
    }
  }

  place_misplaced(task, params.misplace_prob, rng);
  return task;
}

TaskInstance reconfigure(const TaskInstance& task, std::uint64_t seed, double misplace_prob, int task_id) {
  require(misplace_prob >= 0.0 && misplace_prob <= 1.0, "misplace_prob must be in [0,1]");
  validate_task(task);
  TaskInstance out = task;
  out.task_id = task_id;
  Rng rng(seed);
  place_misplaced(out, misplace_prob, rng);
  return out;
}

void validate_task(const TaskInstance& task) {
  const int p = task.num_pieces;
  require(p >= 1 && p <= kMaxPieces, "num_pieces out of range");
  require(static_cast<int>(task.slots.size()) == p, "slot count must equal num_pieces");
  require(static_cast<int>(task.pieces.size()) == p, "piece count must equal num_pieces");
  std::vector<bool> accepted(p, false), color_used(kPaletteSize, false), occupied(p, false);
  for (int i = 0; i < p; ++i) {
    const auto& piece = task.pieces[i];
    require(piece.piece_id == i, "piece ids must be 0..P-1 in order");
    require(piece.color_id >= 0 && piece.color_id < kPaletteSize, "color out of range");
    require(!color_used[piece.color_id], "duplicate color");
    color_used[piece.color_id] = true;
    if (piece.initial_slot >= 0) {
      require(piece.initial_slot < p, "initial slot out of range");
      require(!occupied[piece.initial_slot], "two pieces start in one slot");
      occupied[piece.initial_slot] = true;
    }
  }
  for (int s = 0; s < p; ++s) {
    const auto& slot = task.slots[s];
    require(slot.slot_id == s, "slot ids must be 0..P-1 in order");
    require(slot.accepts >= 0 && slot.accepts < p, "accepts out of range");
    require(!accepted[slot.accepts], "accepts mapping is not bijective");
    accepted[slot.accepts] = true;
    for (int r : slot.prerequisites) {
      require(r >= 0 && r < p && r != s, "prerequisite must name another slot");
    }
  }
  // Kahn's algorithm for the DAG property.
  std::vector<int> indegree(p, 0);
  for (const auto& slot : task.slots) indegree[slot.slot_id] = static_cast<int>(slot.prerequisites.size());
  std::vector<int> ready;
  for (int s = 0; s < p; ++s)
    if (indegree[s] == 0) ready.push_back(s);
  int seen = 0;
  while (!ready.empty()) {
    int r = ready.back();
    ready.pop_back();
    ++seen;
    for (const auto& slot : task.slots)
      for (int q : slot.prerequisites)
        if (q == r && --indegree[slot.slot_id] == 0) ready.push_back(slot.slot_id);
  }
  require(seen == p, "prerequisite relation has a cycle");
}

int PuzzleState::held() const {
  for (int i = 0; i < num_pieces; ++i)
    if (pieces[i].location == Location::kHeld) return i;
  return -1;
}

int PuzzleState::occupant(int slot) const {
  for (int i = 0; i < num_pieces; ++i)
    if (pieces[i].location == Location::kInserted && pieces[i].slot == slot) return i;
  return -1;
}

std::uint64_t PuzzleState::key() const {
  // 5 bits per piece: location code (0 table, 1 held, 2 + slot) and orientation.
  std::uint64_t k = static_cast<std::uint64_t>(num_pieces);
  for (int i = 0; i < num_pieces; ++i) {
    const auto& ps = pieces[i];
    std::uint64_t loc = ps.location == Location::kOnTable ? 0
                        : ps.location == Location::kHeld  ? 1
                                                          : 2 + static_cast<std::uint64_t>(ps.slot);
    k |= ((loc << 1) | (ps.oriented ? 1u : 0u)) << (4 + 5 * i);
  }
  return k;
}

bool same_configuration(const PuzzleState& a, const PuzzleState& b) {
  return a.num_pieces == b.num_pieces && a.pieces == b.pieces;
}

PuzzleState initial_state(const TaskInstance& task) {
  PuzzleState s;
  s.num_pieces = task.num_pieces;
  for (int i = 0; i < task.num_pieces; ++i) {
    const int slot = task.pieces[i].initial_slot;
    s.pieces[i] = slot >= 0 ? PieceState{Location::kInserted, slot, false}
                            : PieceState{Location::kOnTable, -1, false};
  }
  return s;
}

PuzzleState goal_state(const TaskInstance& task) {
  PuzzleState s;
  s.num_pieces = task.num_pieces;
  for (int i = 0; i < task.num_pieces; ++i)
    s.pieces[i] = PieceState{Location::kInserted, task.slot_of(i), false};
  return s;
}

namespace {

bool slot_correctly_filled(const PuzzleState& state, const TaskInstance& task, int slot) {
  const int piece = task.slots[slot].accepts;
  const auto& ps = state.pieces[piece];
  return ps.location == Location::kInserted && ps.slot == slot;
}

// An inserted piece in `slot` is locked in when some inserted piece occupies
// a slot that lists `slot` as a prerequisite.
bool slot_locked(const PuzzleState& state, const TaskInstance& task, int slot) {
  for (const auto& other : task.slots) {
    if (state.occupant(other.slot_id) < 0) continue;
    for (int r : other.prerequisites)
      if (r == slot) return true;
  }
  return false;
}

}  // namespace

bool is_valid(const PuzzleState& state, const TaskInstance& task, const Action& action) {
  if (action.object < 0 || action.object >= task.num_pieces) return false;
  const auto& ps = state.pieces[action.object];
  switch (action.verb) {
    case Verb::kPickUp:
      if (state.held() >= 0) return false;
      if (ps.location == Location::kOnTable) return true;
      return ps.location == Location::kInserted && !slot_locked(state, task, ps.slot);
    case Verb::kPutDown:
    case Verb::kReorient:
      return ps.location == Location::kHeld;
    case Verb::kInsert: {
      if (ps.location != Location::kHeld) return false;
      const int slot = task.slot_of(action.object);
      if (state.occupant(slot) >= 0) return false;
      const auto& spec = task.slots[slot];
      if (spec.requires_orientation && !ps.oriented) return false;
      for (int r : spec.prerequisites)
        if (!slot_correctly_filled(state, task, r)) return false;
      return true;
    }
  }
  return false;
}

PuzzleState apply_action(const PuzzleState& state, const TaskInstance& task, const Action& action) {
  PuzzleState next = state;
  auto& ps = next.pieces[action.object];
  switch (action.verb) {
    case Verb::kPickUp:
      ps.location = Location::kHeld;
      ps.slot = -1;
      break;
    case Verb::kPutDown:
      ps.location = Location::kOnTable;
      break;
    case Verb::kReorient:
      ps.oriented = true;
      break;
    case Verb::kInsert:
      ps.location = Location::kInserted;
      ps.slot = task.slot_of(action.object);
      break;
  }
  return next;
}

StepResult step(const PuzzleState& state, const TaskInstance& task, const Action& action,
                Rng& rng, double failure_rate) {
  if (action.object < 0 || action.object >= task.num_pieces)
    throw std::out_of_range("action object " + std::to_string(action.object) + " out of range");
  StepResult r;
  r.attempted = action;
  r.next_state = state;
  if (!is_valid(state, task, action)) {
    r.invalid = true;
  } else {
    // The failure draw happens only for valid actions so that invalid actions
    // do not consume randomness.
    r.executed = !bernoulli(rng, failure_rate);
    if (r.executed) r.next_state = apply_action(state, task, action);
  }
  r.next_state.step_count = state.step_count + 1;
  r.observation = encode(r.next_state, task);
  r.reached_goal = is_goal(r.next_state, task);
  return r;
}

std::vector<Action> legal_actions(const PuzzleState& state, const TaskInstance& task) {
  std::vector<Action> out;
  for (Verb v : kAllVerbs)
    for (int o = 0; o < task.num_pieces; ++o)
      if (Action a{v, o}; is_valid(state, task, a)) out.push_back(a);
  return out;
}

bool is_goal(const PuzzleState& state, const TaskInstance& task) {
  for (int s = 0; s < task.num_pieces; ++s)
    if (!slot_correctly_filled(state, task, s)) return false;
  return true;
}

Observation encode(const PuzzleState& state, const TaskInstance& task) {
  Observation obs{};
  for (int i = 0; i < task.num_pieces; ++i) {
    double* block = obs.data() + i * kPieceFeatureWidth;
    const auto& ps = state.pieces[i];
    block[kColorOffset + task.pieces[i].color_id] = 1.0;
    block[kLocationOffset + static_cast<int>(ps.location)] = 1.0;
    block[kOrientedOffset] = ps.oriented ? 1.0 : 0.0;
    block[kSlotIndexOffset] = slot_index_feature(ps.location == Location::kInserted ? ps.slot : -1);
  }
  return obs;
}

Observation encode_goal(const TaskInstance& task) { return encode(goal_state(task), task); }

ResetResult reset(const TaskInstance& task) {
  validate_task(task);
  ResetResult r;
  r.state = initial_state(task);
  r.observation = encode(r.state, task);
  r.goal = encode_goal(task);
  return r;
}

}  // namespace foresight
