#pragma once

// Symbolic multi-stage assembly puzzle.
//
// A board has one slot per piece. Slots may list prerequisite slots that must
// hold their correct pieces before insertion (interlocking), and may require
// the piece to be reoriented first. The agent observes colors, locations and
// orientation bits only; prerequisites, orientation requirements and the
// piece-to-slot mapping stay hidden.

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "foresight/rng.hpp"

namespace foresight {

inline constexpr int kMaxPieces = 8;
inline constexpr int kPaletteSize = 10;
inline constexpr int kNumVerbs = 4;
inline constexpr int kNumLocations = 3;
// color one-hot | location one-hot | oriented bit | occupied-slot index
inline constexpr int kPieceFeatureWidth = kPaletteSize + kNumLocations + 2;
inline constexpr int kObservationSize = kMaxPieces * kPieceFeatureWidth;

enum class Verb : std::uint8_t { kPickUp = 0, kInsert = 1, kReorient = 2, kPutDown = 3 };

struct Action {
  Verb verb = Verb::kPickUp;
  int object = 0;

  friend auto operator<=>(const Action&, const Action&) = default;
};

inline constexpr std::array<Verb, kNumVerbs> kAllVerbs = {Verb::kPickUp, Verb::kInsert,
                                                          Verb::kReorient, Verb::kPutDown};

std::string_view verb_name(Verb verb);
std::string to_string(const Action& action);
// Parses the form produced by to_string, e.g. "insert 2".
Action parse_action(std::string_view text);

struct SlotSpec {
  int slot_id = 0;
  int accepts = 0;
  bool requires_orientation = false;
  std::vector<int> prerequisites;

  friend bool operator==(const SlotSpec&, const SlotSpec&) = default;
};

struct PieceSpec {
  int piece_id = 0;
  int color_id = 0;
  // Slot the piece starts in, or -1 when it starts on the table.
  int initial_slot = -1;

  friend bool operator==(const PieceSpec&, const PieceSpec&) = default;
};

struct TaskInstance {
  int task_id = 0;
  int num_pieces = 0;
  std::vector<SlotSpec> slots;
  std::vector<PieceSpec> pieces;
  std::uint64_t seed = 0;

  // Slot whose `accepts` is `piece`.
  int slot_of(int piece) const;

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

class InvalidTaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GeneratorParams {
  int num_pieces = 4;
  double dep_density = 0.5;
  double orient_frac = 0.3;
  double misplace_prob = 0.0;
};

// Throws InvalidTaskError on out-of-range parameters.
TaskInstance generate_task(std::uint64_t seed, const GeneratorParams& params, int task_id = 0);

// Same latent structure as `task` with a freshly sampled initial board.
TaskInstance reconfigure(const TaskInstance& task, std::uint64_t seed, double misplace_prob, int task_id);

// Checks every TaskInstance invariant; throws InvalidTaskError on violation.
void validate_task(const TaskInstance& task);

enum class Location : std::uint8_t { kOnTable = 0, kHeld = 1, kInserted = 2 };

struct PieceState {
  Location location = Location::kOnTable;
  int slot = -1;  // valid only when Inserted
  bool oriented = false;

  friend bool operator==(const PieceState&, const PieceState&) = default;
};

struct PuzzleState {
  int num_pieces = 0;
  std::array<PieceState, kMaxPieces> pieces{};
  int step_count = 0;

  // Index of the held piece or -1.
  int held() const;
  // Piece inserted in `slot`, or -1.
  int occupant(int slot) const;
  // Canonical encoding of the configuration (everything except step_count).
  std::uint64_t key() const;

  friend bool operator==(const PuzzleState&, const PuzzleState&) = default;
};

// Configuration equality, ignoring the step counter.
bool same_configuration(const PuzzleState& a, const PuzzleState& b);

using Observation = std::array<double, kObservationSize>;

// Offsets inside one piece's feature block.
inline constexpr int kColorOffset = 0;
inline constexpr int kLocationOffset = kPaletteSize;
inline constexpr int kOrientedOffset = kPaletteSize + kNumLocations;
inline constexpr int kSlotIndexOffset = kOrientedOffset + 1;

// Value written to the slot-index feature; 0 is the "not inserted" sentinel.
inline double slot_index_feature(int slot) {
  return slot < 0 ? 0.0 : static_cast<double>(slot + 1) / kMaxPieces;
}

struct StepResult {
  PuzzleState next_state;
  Observation observation{};
  Action attempted;
  bool executed = false;
  bool invalid = false;
  bool reached_goal = false;
};

struct ResetResult {
  PuzzleState state;
  Observation observation{};
  Observation goal{};
};

ResetResult reset(const TaskInstance& task);
PuzzleState initial_state(const TaskInstance& task);
// Fully assembled reference configuration; orientation bits are left clear so
// the goal never reveals which slots require reorientation.
PuzzleState goal_state(const TaskInstance& task);

bool is_valid(const PuzzleState& state, const TaskInstance& task, const Action& action);
// Deterministic (epsilon = 0) effect of a valid action. Precondition: is_valid.
PuzzleState apply_action(const PuzzleState& state, const TaskInstance& task, const Action& action);

StepResult step(const PuzzleState& state, const TaskInstance& task, const Action& action,
                Rng& rng, double failure_rate);

// Valid actions in (verb, object) order.
std::vector<Action> legal_actions(const PuzzleState& state, const TaskInstance& task);

bool is_goal(const PuzzleState& state, const TaskInstance& task);

Observation encode(const PuzzleState& state, const TaskInstance& task);
Observation encode_goal(const TaskInstance& task);

}  // namespace foresight
