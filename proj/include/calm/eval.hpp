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

#ifndef CALM_EVAL_HPP_
#define CALM_EVAL_HPP_

#include <string>
#include <vector>

#include "calm/context.hpp"
#include "calm/game.hpp"

namespace calm::eval {

// Metric curves for k = 1..k_max; index k-1 holds the value at k.
struct Curves {
  std::string game;
  int k_max = 0;
  std::vector<double> prec_a;
  std::vector<double> rec_a;
  std::vector<double> rec_g;
  int steps = 0;
  int empty_admissible_steps = 0;  // counted, contribute 0 to rec_a
  int underfull_steps = 0;         // fewer than k_max candidates produced
};

// Averages over walkthrough steps t = 1..l:
//   prec_a(k) = mean |A_t ∩ A_LM(c_t, k)| / k
//   rec_a(k)  = mean |A_t ∩ A_LM(c_t, k)| / |A_t|
//   rec_g(k)  = mean [a_t ∈ A_LM(c_t, k)]
// Strings are compared after normalize_action. Prefix-consistent models are
// queried once with k_max; others once per k. Throws ValidationError if a
// prefix-consistent model yields a decreasing rec_a or rec_g.
Curves evaluate(const ActionModel& model, const std::vector<game::TrajectoryStep>& trajectory,
                int k_max, const std::string& game = "");

// Per-k mean and population standard deviation across games.
struct Aggregate {
  int k_max = 0;
  std::vector<double> prec_a_mean, prec_a_std;
  std::vector<double> rec_a_mean, rec_a_std;
  std::vector<double> rec_g_mean, rec_g_std;
};
Aggregate aggregate(const std::vector<Curves>& per_game);

// raw / max_score; throws InvalidArgument when max_score <= 0.
double normalized_score(double raw, double max_score);

struct GameScore {
  std::string game;
  double raw = 0.0;
  double max_score = 0.0;
};
// Unweighted mean of normalized scores ("avg. norm").
double average_normalized(const std::vector<GameScore>& scores);

// CSV with columns model,game,k,prec_a,rec_a,rec_g.
std::string curves_csv(const std::vector<std::vector<Curves>>& curves,
                       const std::vector<std::string>& labels);
// CSV with columns model,k,stat,prec_a,rec_a,rec_g (stat = mean | std).
std::string summary_csv(const std::vector<std::vector<Curves>>& curves,
                        const std::vector<std::string>& labels);
// Table-2-shaped CSV: game,max_score, then raw and norm per model, closed by
// an "avg. norm" row.
std::string score_table_csv(const std::vector<std::vector<GameScore>>& scores,
                            const std::vector<std::string>& labels);

struct Comparison {
  std::string curves;        // curves_csv of all models
  std::string curve_deltas;  // game,k,d_prec_a,d_rec_a,d_rec_g (first minus second)
  std::string score_deltas;  // game,norm_first,norm_second,delta (first minus second)
};

// Compares exactly two models game by game. Throws InvalidArgument on
// label/curve count mismatches or games missing from either side.
Comparison compare_report(const std::vector<std::vector<Curves>>& curves,
                          const std::vector<std::string>& labels,
                          const std::vector<std::vector<GameScore>>& scores = {});

}  // namespace calm::eval

#endif  // CALM_EVAL_HPP_
