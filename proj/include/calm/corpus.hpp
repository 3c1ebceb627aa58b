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

#ifndef CALM_CORPUS_HPP_
#define CALM_CORPUS_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "calm/context.hpp"
#include "calm/game.hpp"
#include "calm/rng.hpp"

namespace calm::corpus {

struct Turn {
  std::string observation;  // text shown before the action
  std::string action;
  bool operator==(const Turn&) const = default;
};

struct Transcript {
  std::string id;
  std::string game;
  std::vector<Turn> turns;

  bool operator==(const Transcript&) const = default;
};

struct Example {
  Context context;
  std::string action;
  std::string source;  // transcript id
  std::string game;

  bool operator==(const Example&) const = default;
};

// Raw log format:
//   === game: <id> ===     starts a new game segment (optional)
//   > take lamp            player command, prefixed by `prompt`
//   [chat] ...             out-of-game chatter, dropped
//   anything else          observation text
struct CleanOptions {
  std::string prompt = ">";
  std::string chat_prefix = "[chat]";
  std::string id = "transcript";
  std::string default_game = "unknown";
  // A command whose reply starts with one of these was rejected by the
  // game's parser and is dropped together with the reply.
  std::vector<std::string> unrecognized_replies = {
      "That's not a verb I recognise.",
      "That's not a verb I recognize.",
      "You used a word I don't know.",
      "I don't know the word",
      "I didn't understand that sentence.",
  };
};

// Closed abbreviation table applied to the first word of each command.
const std::map<std::string, std::string>& abbreviations();
// Commands (by first word) that operate the interpreter rather than the game.
const std::set<std::string>& meta_actions();

// Normalizes whitespace and case, then expands a leading abbreviation.
std::string clean_action(std::string_view raw);
bool is_meta_action(std::string_view cleaned);

// One Transcript per game segment. Throws ParseError for malformed logs.
std::vector<Transcript> clean_log(std::string_view raw,
                                  const CleanOptions& options = {});
// Single-segment convenience wrapper; throws if the log spans several games.
Transcript clean_transcript(std::string_view raw,
                            const CleanOptions& options = {});
// Writes a Transcript back out in the raw log format.
std::string render_raw(const Transcript& t, const CleanOptions& options = {});

struct Limits {
  std::size_t max_context_tokens = 256;
  std::size_t max_action_tokens = 7;
};

struct BuildStats {
  std::size_t emitted = 0;
  std::size_t dropped_context = 0;
  std::size_t dropped_action = 0;

  BuildStats& operator+=(const BuildStats& o) {
    emitted += o.emitted;
    dropped_context += o.dropped_context;
    dropped_action += o.dropped_action;
    return *this;
  }
};

std::size_t context_tokens(const Context& c);

std::vector<Example> build_examples(const Transcript& t,
                                    const Limits& limits = {},
                                    BuildStats* stats = nullptr);

struct Split {
  std::vector<Example> train;
  std::vector<Example> validation;
};

// Drops examples from excluded games, then keeps the given order and cuts
// after floor(train_frac * N) examples.
Split split(const std::vector<Example>& examples, double train_frac,
            const std::set<std::string>& exclude_games = {});

std::string example_to_json(const Example& e);
Example example_from_json(std::string_view line);
void write_examples(const std::filesystem::path& path,
                    const std::vector<Example>& examples);
std::vector<Example> read_examples(const std::filesystem::path& path);

// Reads every *.log file in `dir` (sorted by name), cleaning each one; the
// transcript id is the file stem, suffixed with "#n" for multi-game logs.
std::vector<Transcript> load_transcripts(const std::filesystem::path& dir,
                                         const CleanOptions& options = {});

// Deterministic subset of whole transcripts: ceil(fraction * N) of them,
// chosen without replacement, returned in their original order.
std::vector<Transcript> sample_transcripts(const std::vector<Transcript>& all,
                                           double fraction, Rng& rng);

// ---- synthetic human players ---------------------------------------------

struct PlayerOptions {
  double chat_rate = 0.05;
  double meta_rate = 0.04;
  double typo_rate = 0.04;
  double failed_attempt_rate = 0.15;
  double examine_rate = 0.10;
  double detour_rate = 0.20;
  double abbreviation_rate = 0.30;
  int max_turns = 200;
};

// Plays the game's walkthrough the way a distracted human would, emitting a
// raw log (with a game header) in the format accepted by clean_log().
std::string synthesize_transcript(const game::GameSpec& spec,
                                  const PlayerOptions& options, Rng& rng);

}  // namespace calm::corpus

#endif  // CALM_CORPUS_HPP_
