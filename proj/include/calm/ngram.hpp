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

#ifndef CALM_NGRAM_HPP_
#define CALM_NGRAM_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "calm/context.hpp"

namespace calm::ngram {

inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";
inline constexpr const char* kUnk = "<unk>";

using Tokens = std::vector<std::string>;

// Verb phrases and nouns harvested from training actions.
struct Lexicon {
  std::set<std::string> verbs;  // space-joined phrases, e.g. "turn on"
  std::set<std::string> nouns;  // single tokens

  bool operator==(const Lexicon&) const = default;
};

// Nouns are the final token of every multi-token action. The verb phrase of a
// multi-token action is its prefix up to the first noun at position >= 1.
Lexicon harvest_lexicon(const std::vector<Tokens>& actions);

// Anything that assigns a probability to a complete action (end marker
// included).
class ActionScorer {
 public:
  virtual ~ActionScorer() = default;
  virtual double action_log_prob(const Tokens& action) const = 0;
  virtual void save(std::ostream& out) const = 0;
};

// Additively smoothed n-gram model over action tokens.
class NgramModel final : public ActionScorer {
 public:
  static NgramModel fit(const std::vector<Tokens>& actions, int n,
                        double alpha);

  int order() const { return n_; }
  double alpha() const { return alpha_; }

  // |V|: training tokens plus end marker and UNK (the start marker is not
  // predicted and is excluded).
  std::size_t vocab_size() const { return vocab_.size() - 1; }
  // Tokens of V in id order.
  Tokens vocab() const;
  bool in_vocab(const std::string& token) const;

  const Lexicon& lexicon() const { return lexicon_; }

  // Raw counts of a window of length 1..n (ending at a predicted position,
  // start markers included), and of a history of length 0..n-1.
  std::uint64_t count(const Tokens& window) const;
  std::uint64_t history_count(const Tokens& history) const;

  // Smoothed conditional; history is truncated to its last n-1 tokens and
  // left-padded with start markers when shorter. Unknown tokens map to UNK.
  double token_prob(const std::string& token, const Tokens& history) const;

  double action_log_prob(const Tokens& action) const override;

  void save(std::ostream& out) const override;
  static NgramModel load(std::istream& in);

 private:
  using Ids = std::vector<int>;
  struct IdsHash {
    std::size_t operator()(const Ids& ids) const;
  };

  int id_of(const std::string& token) const;
  Ids history_ids(const Tokens& history) const;
  double prob_ids(int token, const Ids& history) const;
  void add_window_counts(const Ids& padded, std::size_t pos);
  void rebuild_history_counts();

  int n_ = 1;
  double alpha_ = 1.0;
  Tokens vocab_;  // id 0 is the start marker
  std::unordered_map<std::string, int> ids_;
  std::unordered_map<Ids, std::uint64_t, IdsHash> counts_;
  std::unordered_map<Ids, std::uint64_t, IdsHash> history_counts_;
  Lexicon lexicon_;
};

// exp of the negative mean per-action log-probability.
double perplexity(const ActionScorer& model, const std::vector<Tokens>& actions);

struct TuneResult {
  int n = 0;
  double alpha = 0.0;
  double perplexity = 0.0;
};

// Grid search on validation perplexity; ties go to smaller n, then smaller
// alpha.
TuneResult tune(const std::vector<Tokens>& train, const std::vector<Tokens>& val,
                const std::vector<int>& n_grid,
                const std::vector<double>& alpha_grid);

const std::vector<double>& default_alpha_grid();

// Linear mixture of fixed-order components.
class InterpolatedModel final : public ActionScorer {
 public:
  InterpolatedModel(std::vector<NgramModel> components,
                    std::vector<double> weights);

  const std::vector<NgramModel>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }

  double token_prob(const std::string& token, const Tokens& history) const;
  double action_log_prob(const Tokens& action) const override;

  void save(std::ostream& out) const override;
  static InterpolatedModel load(std::istream& in);

 private:
  std::vector<NgramModel> components_;
  std::vector<double> weights_;
};

// All weight vectors of the given length on the simplex with the given step,
// in lexicographic order of their integer numerators.
std::vector<std::vector<double>> simplex_grid(int size, double step);

struct InterpolationOptions {
  int max_order = 4;
  std::vector<double> alpha_grid = default_alpha_grid();
  double step = 0.1;
};

// Each order-i component takes its own best alpha; weights are then chosen on
// val over the simplex grid (first minimum in grid order wins).
InterpolatedModel fit_interpolated(const std::vector<Tokens>& train,
                                   const std::vector<Tokens>& val,
                                   const InterpolationOptions& opts = {});

// Checkpoint I/O for either model kind.
std::shared_ptr<const ActionScorer> load_scorer(std::istream& in);
std::shared_ptr<const ActionScorer> load_scorer_file(const std::string& path);
void save_scorer_file(const ActionScorer& model, const std::string& path);

// Candidate generator over (verbs x nouns-in-observation) plus the 13
// directions.
class NgramCalm final : public ActionModel {
 public:
  NgramCalm(std::shared_ptr<const ActionScorer> scorer, Lexicon lexicon,
            std::vector<std::string> object_names = {},
            int max_per_object = 4);

  // Nouns found in the observation, in order of first appearance. Adjacent
  // pairs are matched before single tokens.
  std::vector<std::string> detect_nouns(const std::string& observation) const;

  struct Scored {
    std::string action;
    double log_prob;
  };
  // Every candidate after the per-object cap, best first.
  std::vector<Scored> ranked(const Context& context) const;

  std::vector<std::string> generate(const Context& context,
                                    int k) const override;
  std::string name() const override { return "ngram"; }

 private:
  std::shared_ptr<const ActionScorer> scorer_;
  Lexicon lexicon_;
  std::set<std::string> pair_nouns_;
  std::set<std::string> single_nouns_;
  int max_per_object_;
};

// Tokenized actions from strings.
std::vector<Tokens> tokenize_all(const std::vector<std::string>& actions);

}  // namespace calm::ngram

#endif  // CALM_NGRAM_HPP_
