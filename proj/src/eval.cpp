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

#include "calm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "calm/error.hpp"
#include "calm/text.hpp"

namespace calm::eval {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void check_labels(const std::vector<std::vector<Curves>>& curves,
                  const std::vector<std::string>& labels) {
  if (curves.size() != labels.size())
    throw InvalidArgument("report: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(curves.size()) + " curve sets");
}

void mean_std(const std::vector<Curves>& games, std::vector<double> Curves::*field, int k,
              double& mean, double& sd) {
  double s = 0.0;
  for (const auto& g : games) s += (g.*field)[k];
  mean = s / static_cast<double>(games.size());
  double v = 0.0;
  for (const auto& g : games) v += ((g.*field)[k] - mean) * ((g.*field)[k] - mean);
  sd = std::sqrt(v / static_cast<double>(games.size()));
}

}  // namespace

Curves evaluate(const ActionModel& model, const std::vector<game::TrajectoryStep>& trajectory,
                int k_max, const std::string& game) {
  if (trajectory.empty()) throw InvalidArgument("evaluate: empty trajectory");
  if (k_max < 1) throw InvalidArgument("evaluate: k_max must be >= 1");
  Curves c;
  c.game = game;
  c.k_max = k_max;
  c.prec_a.assign(k_max, 0.0);
  c.rec_a.assign(k_max, 0.0);
  c.rec_g.assign(k_max, 0.0);
  c.steps = static_cast<int>(trajectory.size());
  const bool prefix = model.prefix_consistent();

  for (const auto& step : trajectory) {
    std::set<std::string> admissible;
    for (const auto& a : step.admissible) admissible.insert(text::normalize_action(a));
    const std::string gold = text::normalize_action(step.gold);
    if (admissible.empty()) ++c.empty_admissible_steps;

    std::vector<std::string> full;
    if (prefix) {
      full = model.generate(step.context, k_max);
      if (static_cast<int>(full.size()) < k_max) ++c.underfull_steps;
    }
    for (int k = 1; k <= k_max; ++k) {
      std::vector<std::string> list;
      if (prefix) {
        list.assign(full.begin(), full.begin() + std::min<std::size_t>(k, full.size()));
      } else {
        list = model.generate(step.context, k);
        if (k == k_max && static_cast<int>(list.size()) < k_max) ++c.underfull_steps;
      }
      std::set<std::string> proposed;
      for (const auto& a : list) proposed.insert(text::normalize_action(a));
      std::size_t hits = 0;
      for (const auto& a : proposed) hits += admissible.count(a);
      c.prec_a[k - 1] += static_cast<double>(hits) / k;
      if (!admissible.empty())
        c.rec_a[k - 1] += static_cast<double>(hits) / static_cast<double>(admissible.size());
      if (proposed.count(gold)) c.rec_g[k - 1] += 1.0;
    }
  }
  const double l = static_cast<double>(c.steps);
  for (int k = 0; k < k_max; ++k) {
    c.prec_a[k] /= l;
    c.rec_a[k] /= l;
    c.rec_g[k] /= l;
    for (double v : {c.prec_a[k], c.rec_a[k], c.rec_g[k]})
      if (v < 0.0 || v > 1.0 + 1e-12) throw ValidationError("evaluate: metric outside [0, 1]");
    if (prefix && k > 0 && (c.rec_a[k] < c.rec_a[k - 1] || c.rec_g[k] < c.rec_g[k - 1]))
      throw ValidationError("evaluate: recall decreased in k for a prefix-consistent model (" +
                            model.name() + ")");
  }
  return c;
}

Aggregate aggregate(const std::vector<Curves>& games) {
  if (games.empty()) throw InvalidArgument("aggregate: no games");
  Aggregate a;
  a.k_max = games[0].k_max;
  for (const auto& g : games)
    if (g.k_max != a.k_max) throw InvalidArgument("aggregate: mixed k_max");
  for (auto* v : {&a.prec_a_mean, &a.prec_a_std, &a.rec_a_mean, &a.rec_a_std, &a.rec_g_mean,
                  &a.rec_g_std})
    v->assign(a.k_max, 0.0);
  for (int k = 0; k < a.k_max; ++k) {
    mean_std(games, &Curves::prec_a, k, a.prec_a_mean[k], a.prec_a_std[k]);
    mean_std(games, &Curves::rec_a, k, a.rec_a_mean[k], a.rec_a_std[k]);
    mean_std(games, &Curves::rec_g, k, a.rec_g_mean[k], a.rec_g_std[k]);
  }
  return a;
}

double normalized_score(double raw, double max_score) {
  if (!(max_score > 0.0)) throw InvalidArgument("normalized_score: max_score must be > 0");
  return raw / max_score;
}

double average_normalized(const std::vector<GameScore>& scores) {
  if (scores.empty()) throw InvalidArgument("average_normalized: no games");
  double s = 0.0;
  for (const auto& g : scores) s += normalized_score(g.raw, g.max_score);
  return s / static_cast<double>(scores.size());
}

std::string curves_csv(const std::vector<std::vector<Curves>>& curves,
                       const std::vector<std::string>& labels) {
  check_labels(curves, labels);
  std::ostringstream out;
  out << "model,game,k,prec_a,rec_a,rec_g\n";
  for (std::size_t m = 0; m < curves.size(); ++m)
    for (const auto& g : curves[m])
      for (int k = 0; k < g.k_max; ++k)
        out << labels[m] << "," << g.game << "," << k + 1 << "," << num(g.prec_a[k]) << ","
            << num(g.rec_a[k]) << "," << num(g.rec_g[k]) << "\n";
  return out.str();
}

std::string summary_csv(const std::vector<std::vector<Curves>>& curves,
                        const std::vector<std::string>& labels) {
  check_labels(curves, labels);
  std::ostringstream out;
  out << "model,k,stat,prec_a,rec_a,rec_g\n";
  for (std::size_t m = 0; m < curves.size(); ++m) {
    if (curves[m].empty()) continue;
    const auto a = aggregate(curves[m]);
    for (int k = 0; k < a.k_max; ++k) {
      out << labels[m] << "," << k + 1 << ",mean," << num(a.prec_a_mean[k]) << ","
          << num(a.rec_a_mean[k]) << "," << num(a.rec_g_mean[k]) << "\n";
      out << labels[m] << "," << k + 1 << ",std," << num(a.prec_a_std[k]) << ","
          << num(a.rec_a_std[k]) << "," << num(a.rec_g_std[k]) << "\n";
    }
  }
  return out.str();
}

std::string score_table_csv(const std::vector<std::vector<GameScore>>& scores,
                            const std::vector<std::string>& labels) {
  if (scores.size() != labels.size())
    throw InvalidArgument("score table: label/model count mismatch");
  std::ostringstream out;
  out << "game,max_score";
  for (const auto& l : labels) out << "," << l << "_raw," << l << "_norm";
  out << "\n";
  if (scores.empty()) return out.str();
  for (std::size_t g = 0; g < scores[0].size(); ++g) {
    out << scores[0][g].game << "," << num(scores[0][g].max_score);
    for (const auto& model : scores) {
      if (model.size() != scores[0].size() || model[g].game != scores[0][g].game)
        throw InvalidArgument("score table: models cover different games");
      out << "," << num(model[g].raw) << ","
          << num(normalized_score(model[g].raw, model[g].max_score));
    }
    out << "\n";
  }
  out << "avg. norm,";
  for (const auto& model : scores)
    out << ",," << (model.empty() ? std::string() : num(average_normalized(model)));
  out << "\n";
  return out.str();
}

Comparison compare_report(const std::vector<std::vector<Curves>>& curves,
                          const std::vector<std::string>& labels,
                          const std::vector<std::vector<GameScore>>& scores) {
  check_labels(curves, labels);
  if (curves.size() != 2) throw InvalidArgument("compare_report: exactly two models required");
  if (!scores.empty() && scores.size() != 2)
    throw InvalidArgument("compare_report: scores must cover both models");
  Comparison out;
  out.curves = curves_csv(curves, labels);

  std::ostringstream cd;
  cd << "game,k,d_prec_a,d_rec_a,d_rec_g\n";
  for (const auto& a : curves[0]) {
    const auto it = std::find_if(curves[1].begin(), curves[1].end(),
                                 [&](const Curves& b) { return b.game == a.game; });
    if (it == curves[1].end()) throw InvalidArgument("compare_report: game " + a.game + " missing");
    if (it->k_max != a.k_max) throw InvalidArgument("compare_report: k_max differs for " + a.game);
    for (int k = 0; k < a.k_max; ++k)
      cd << a.game << "," << k + 1 << "," << num(a.prec_a[k] - it->prec_a[k]) << ","
         << num(a.rec_a[k] - it->rec_a[k]) << "," << num(a.rec_g[k] - it->rec_g[k]) << "\n";
  }
  out.curve_deltas = cd.str();

  std::ostringstream sd;
  sd << "game,norm_" << labels[0] << ",norm_" << labels[1] << ",delta\n";
  if (!scores.empty()) {
    for (const auto& a : scores[0]) {
      const auto it = std::find_if(scores[1].begin(), scores[1].end(),
                                   [&](const GameScore& b) { return b.game == a.game; });
      if (it == scores[1].end()) throw InvalidArgument("compare_report: game " + a.game + " missing");
      const double na = normalized_score(a.raw, a.max_score);
      const double nb = normalized_score(it->raw, it->max_score);
      sd << a.game << "," << num(na) << "," << num(nb) << "," << num(na - nb) << "\n";
    }
  }
  out.score_deltas = sd.str();
  return out;
}

}  // namespace calm::eval
