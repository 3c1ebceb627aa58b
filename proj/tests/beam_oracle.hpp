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

#ifndef CALM_TESTS_BEAM_ORACLE_HPP_
#define CALM_TESTS_BEAM_ORACLE_HPP_

#include <algorithm>
#include <string>
#include <vector>

#include "calm/neural.hpp"

namespace calm::testing {

// Scores every token sequence of up to max_len - 1 generatable tokens (plus
// the end marker) by step-by-step decoding and ranks them.
inline std::vector<neural::ScoredAction> exhaustive_ranking(const neural::NeuralCalm& model,
                                                            const Context& c, int max_len) {
  const auto& vocab = model.vocab();
  std::vector<int> words;
  for (int id = 0; id < vocab.size(); ++id)
    if (!vocab.is_special(id)) words.push_back(id);

  std::vector<neural::ScoredAction> all;
  std::vector<std::pair<std::vector<int>, double>> frontier = {{{}, 0.0}};
  for (int len = 0; len < max_len; ++len) {
    std::vector<std::pair<std::vector<int>, double>> next;
    for (const auto& [prefix, lp] : frontier) {
      const auto dist = model.next_log_probs(c, prefix);
      std::string text;
      for (int id : prefix) text += (text.empty() ? "" : " ") + vocab.token(id);
      all.push_back({text, lp + dist(0, neural::Vocabulary::eos())});
      if (len + 1 == max_len) continue;
      for (int w : words) {
        auto p = prefix;
        p.push_back(w);
        next.emplace_back(std::move(p), lp + dist(0, w));
      }
    }
    frontier = std::move(next);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.action < b.action;
  });
  return all;
}

// Tiny model whose vocabulary is the reserved markers plus the given words.
inline neural::NeuralCalm tiny_model(const std::vector<std::string>& words, std::uint64_t seed,
                                     int hidden = 6) {
  neural::NeuralConfig cfg;
  cfg.embedding = 4;
  cfg.hidden = hidden;
  cfg.beam_width = 40;
  std::vector<std::vector<std::string>> lists{words};
  return neural::NeuralCalm(neural::Vocabulary::build(lists), cfg, seed);
}

}  // namespace calm::testing

#endif  // CALM_TESTS_BEAM_ORACLE_HPP_
