// Copyright 2026 The calm-text Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CALM_GAME_HPP_
#define CALM_GAME_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "calm/context.hpp"
#include "calm/error.hpp"

namespace calm::game {

inline constexpr int kNoId = -1;

// The thirteen one-word movement commands understood by every game.
inline const std::vector<std::string>& directions() {
  static const std::vector<std::string> kDirections = {
      "north",     "south",     "east", "west", "northeast", "northwest",
      "southeast", "southwest", "up",   "down", "enter",     "exit",
      "out"};
  return kDirections;
}

enum class Place : std::uint8_t { kRoom, kInventory, kInside, kNowhere };

struct Location {
  Place place = Place::kNowhere;
  int id = kNoId;  // room index for kRoom, object index for kInside

  bool operator==(const Location&) const = default;
};

struct Room {
  std::string id;
  std::string name;
  std::string description;
  std::vector<std::pair<std::string, int>> exits;  // direction -> room index
  bool dark = false;

  int exit(std::string_view direction) const;
};

struct Object {
  std::string id;
  std::vector<std::string> names;  // first entry is the canonical name
  std::vector<std::vector<std::string>> name_tokens;
  std::set<std::string> attributes;
  int locked_by = kNoId;
  Location initial;
  std::string description;

  const std::string& canonical_name() const { return names.front(); }
  bool has(std::string_view attribute) const {
    return attributes.count(std::string(attribute)) > 0;
  }
};

// Argument of a predicate or effect.
struct Term {
  enum class Kind : std::uint8_t {
    kSlot, kObject, kRoom, kInventory, kHere, kNowhere
  };
  Kind kind = Kind::kNowhere;
  int index = kNoId;
};

// A flag either named directly ("alarm", "lamp.lit") or through a template
// slot ("X.open"), resolved against the bound object at run time.
struct FlagRef {
  int slot = -1;
  int suffix = -1;  // index into GameSpec::flag_suffixes when slot >= 0
  int flag = -1;    // direct flag index when slot < 0
};

struct Predicate {
  enum class Kind : std::uint8_t {
    kHeld, kHere, kAt, kIn, kIs, kFlag, kUnlocks, kEq
  };
  Kind kind = Kind::kHeld;
  bool negated = false;
  Term a;
  Term b;
  std::string attribute;
  FlagRef flag;
};

struct Effect {
  enum class Kind : std::uint8_t { kMove, kSet, kClear, kGoto, kEnd };
  Kind kind = Kind::kSet;
  Term a;
  Term b;
  FlagRef flag;
};

struct TemplateElement {
  std::string literal;  // empty for a slot
  int slot = -1;
};

// A verb phrase such as "unlock X with Y". Slots bind in-scope objects.
struct Template {
  std::string text;
  std::vector<TemplateElement> elements;
  std::vector<std::string> slot_names;
  bool direction = false;

  int arity() const { return static_cast<int>(slot_names.size()); }
};

struct Rule {
  int template_index = -1;
  std::vector<Predicate> when;
  std::vector<Effect> effects;
  std::string say;
  std::size_t line = 0;
};

struct Reward {
  std::vector<Predicate> when;
  double value = 0.0;
  bool once = true;
  std::string label;
};

// Declarative, immutable game definition. Build one with load_game_spec().
struct GameSpec {
  std::string name;
  std::string intro;
  std::vector<Room> rooms;
  std::vector<Object> objects;
  std::vector<Template> templates;
  std::vector<Rule> rules;
  std::vector<std::vector<int>> rules_by_template;
  std::vector<Reward> rewards;
  std::vector<std::string> flags;
  std::vector<bool> initial_flags;
  std::vector<std::string> flag_suffixes;
  std::vector<int> object_flags;  // [object * flag_suffixes.size() + suffix]
  int start_room = 0;
  double max_score = 0.0;
  std::vector<std::string> walkthrough;
  std::set<std::string> vocabulary;
  std::map<std::string, std::vector<int>> objects_by_name;
  std::size_t max_template_length = 0;

  int room_index(std::string_view id) const;
  int object_index(std::string_view id) const;
  int flag_index(std::string_view name) const;
  int object_flag(int object, std::string_view suffix) const;
  std::vector<std::string> object_names() const;
};

// Latent state s. Owned by exactly one player.
struct WorldState {
  int player_room = 0;
  std::vector<Location> object_locations;
  std::vector<bool> flags;
  double score = 0.0;
  int moves = 0;
  std::vector<int> reward_claims;  // times each reward has fired
  bool ended = false;

  bool operator==(const WorldState&) const = default;
  // Equality ignoring the move counter: the admissibility criterion.
  bool same_except_moves(const WorldState& other) const;
  bool claimed(std::size_t reward) const { return reward_claims[reward] > 0; }
};

enum class Failure : std::uint8_t {
  kNone,
  kUnknownVerb,
  kUnknownWord,
  kIncomplete,
  kNotHere,
  kNoExit,
  kNothingHappens,
  kGameOver,
};

// Fixed parser responses for actions that do not change the state.
std::string_view failure_message(Failure failure);
const std::vector<std::string>& failure_catalog();

struct StepResult {
  std::string observation;  // response + look + inventory
  std::string response;     // just the reply to the command
  double reward = 0.0;
  bool done = false;
  bool state_changed = false;
  Failure failure = Failure::kNone;
};

// Raised by walkthrough_trajectory() when a gold action is inadmissible.
class WalkthroughDivergence : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Parses and validates a game-spec document. `source` names it in errors.
GameSpec load_game_spec(std::string_view document,
                        std::string_view source = "<spec>");
GameSpec load_game_spec_file(const std::filesystem::path& path);

// The verb library pulled in by "prelude: standard".
std::string_view standard_prelude();

std::pair<WorldState, std::string> reset(const GameSpec& spec);

std::pair<WorldState, StepResult> step(const GameSpec& spec,
                                       const WorldState& state,
                                       std::string_view action);

// Sorted, de-duplicated action strings that change the state.
std::vector<std::string> admissible_actions(const GameSpec& spec,
                                            const WorldState& state);

// Every template instantiated with every in-scope binding (before testing).
std::vector<std::string> template_candidates(const GameSpec& spec,
                                             const WorldState& state);

bool in_scope(const GameSpec& spec, const WorldState& state, int object);
std::string render_observation(const GameSpec& spec, const WorldState& state,
                               std::string_view response);
std::string look_text(const GameSpec& spec, const WorldState& state);
std::string inventory_text(const GameSpec& spec, const WorldState& state);

struct TrajectoryStep {
  int step = 0;  // 1-based
  Context context;
  std::string gold;
  std::vector<std::string> admissible;
};

std::vector<TrajectoryStep> walkthrough_trajectory(const GameSpec& spec);

// One JSON object per line: {step, context{...}, gold, admissible[]}.
std::string trajectory_to_jsonl(const std::vector<TrajectoryStep>& records);
std::vector<TrajectoryStep> trajectory_from_jsonl(std::string_view text);

}  // namespace calm::game

#endif  // CALM_GAME_HPP_
