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

#include <algorithm>

#include "calm/corpus.hpp"
#include "calm/text.hpp"

namespace calm::corpus {
namespace {

const std::vector<std::string>& chat_lines() {
  static const std::vector<std::string> kLines = {
      "alice: anyone have a map of this place?",
      "bob: we should check every room first",
      "carol: lol",
      "dave: brb, coffee",
      "alice: I think the key matters",
      "bob: try examining things",
  };
  return kLines;
}

const std::vector<std::pair<std::string, std::string>>& meta_exchanges() {
  static const std::vector<std::pair<std::string, std::string>> kMeta = {
      {"save", "Ok."},
      {"restore", "Ok."},
      {"verbose", "Maximum verbosity."},
      {"script", "Start of a transcript of"},
      {"undo", "[Previous turn undone.]"},
  };
  return kMeta;
}

std::string abbreviate(const std::string& action) {
  auto words = text::split(action, ' ');
  for (const auto& [abbr, full] : abbreviations()) {
    if (words.front() == full && full != "again") {
      words.front() = abbr;
      return text::join(words, " ");
    }
  }
  return action;
}

std::string typo(const std::string& action, Rng& rng) {
  auto words = text::split(action, ' ');
  auto& w = words.front();
  if (w.size() >= 3) {
    const auto i = rng.below(w.size() - 1);
    std::swap(w[i], w[i + 1]);
  } else {
    w += w.back();
  }
  return text::join(words, " ");
}

// Whether the rest of the walkthrough still wins from `state`.
bool still_winnable(const game::GameSpec& spec, game::WorldState state,
                    std::size_t from) {
  for (std::size_t i = from; i < spec.walkthrough.size(); ++i) {
    auto [next, r] = game::step(spec, state, spec.walkthrough[i]);
    if (!r.state_changed) return false;
    state = std::move(next);
  }
  return state.score >= spec.max_score - 1e-9;
}

}  // namespace

std::string synthesize_transcript(const game::GameSpec& spec,
                                  const PlayerOptions& options, Rng& rng) {
  auto [state, obs] = game::reset(spec);
  std::string log = "=== game: " + spec.name + " ===\n" + obs + "\n";
  int turns = 0;

  auto emit = [&](const std::string& typed, const std::string& executed) {
    auto [next, r] = game::step(spec, state, executed);
    log += "> " + typed + "\n" + r.observation + "\n";
    state = std::move(next);
    ++turns;
    return r;
  };

  for (std::size_t wi = 0; wi < spec.walkthrough.size() && turns < options.max_turns;
       ++wi) {
    const auto& gold = spec.walkthrough[wi];
    if (rng.bernoulli(options.chat_rate))
      log += "[chat] " + chat_lines()[rng.below(chat_lines().size())] + "\n";
    if (rng.bernoulli(options.meta_rate)) {
      const auto& [cmd, reply] = meta_exchanges()[rng.below(meta_exchanges().size())];
      log += "> " + cmd + "\n" + reply + "\n";
    }
    if (rng.bernoulli(options.typo_rate)) {
      const auto bad = typo(gold, rng);
      if (!spec.vocabulary.count(text::split(bad, ' ').front())) emit(bad, bad);
    }
    if (rng.bernoulli(options.failed_attempt_rate)) {
      const auto admissible = game::admissible_actions(spec, state);
      std::vector<std::string> failing;
      for (const auto& c : game::template_candidates(spec, state))
        if (!std::binary_search(admissible.begin(), admissible.end(), c) &&
            c != "look" && c != "inventory" && c != "wait" &&
            !text::starts_with(c, "examine"))
          failing.push_back(c);
      if (!failing.empty()) {
        const auto& c = failing[rng.below(failing.size())];
        emit(c, c);
      }
    }
    if (rng.bernoulli(options.examine_rate)) {
      std::vector<std::string> examines;
      for (const auto& c : game::template_candidates(spec, state))
        if (text::starts_with(c, "examine ")) examines.push_back(c);
      if (!examines.empty()) {
        const auto& c = examines[rng.below(examines.size())];
        emit(rng.bernoulli(options.abbreviation_rate) ? abbreviate(c) : c, c);
      }
    }
    if (rng.bernoulli(options.detour_rate)) {
      auto admissible = game::admissible_actions(spec, state);
      std::vector<std::string> safe;
      for (const auto& a : admissible) {
        if (a == gold) continue;
        auto [next, r] = game::step(spec, state, a);
        if (!r.done && still_winnable(spec, next, wi)) safe.push_back(a);
      }
      if (!safe.empty()) {
        const auto& a = safe[rng.below(safe.size())];
        emit(a, a);
      }
    }
    const auto typed = rng.bernoulli(options.abbreviation_rate) ? abbreviate(gold) : gold;
    emit(typed, gold);
  }
  return log;
}

}  // namespace calm::corpus
