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

#include <gtest/gtest.h>

#include "calm/error.hpp"
#include "calm/eval.hpp"
#include "eval_oracle.hpp"
#include "oracles.hpp"

namespace calm::eval {
namespace {

using testing::TableModel;

game::TrajectoryStep make_step(const std::string& obs, std::vector<std::string> adm,
                               const std::string& gold) {
  game::TrajectoryStep s;
  s.context.observation = obs;
  s.admissible = std::move(adm);
  s.gold = gold;
  return s;
}

TEST(Evaluate, ExactAdmissibleSetScoresOne) {
  TableModel m;
  const std::vector<game::TrajectoryStep> traj = {make_step("a", {"x", "y"}, "x"),
                                                  make_step("b", {"p", "q"}, "p")};
  m.table["a"] = {"x", "y"};
  m.table["b"] = {"q", "p"};
  const auto c = evaluate(m, traj, 2);
  EXPECT_DOUBLE_EQ(c.prec_a[1], 1.0);
  EXPECT_DOUBLE_EQ(c.rec_a[1], 1.0);
  EXPECT_DOUBLE_EQ(c.rec_g[1], 1.0);
  EXPECT_DOUBLE_EQ(c.rec_g[0], 0.5);
}

TEST(Evaluate, DisjointGarbageScoresZero) {
  TableModel m;
  m.table["a"] = {"zz", "qq", "ww"};
  const auto c = evaluate(m, {make_step("a", {"x", "y"}, "x")}, 3);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(c.prec_a[k], 0.0);
    EXPECT_EQ(c.rec_a[k], 0.0);
    EXPECT_EQ(c.rec_g[k], 0.0);
  }
}

TEST(Evaluate, HandComputedThreeSteps) {
  // |A_t| = 2, 3, 4; overlaps at k = 2 are 1, 2, 0; gold hit at steps 1, 2.
  TableModel m;
  m.table["1"] = {"a", "zz"};
  m.table["2"] = {"d", "e"};
  m.table["3"] = {"yy", "zz"};
  const std::vector<game::TrajectoryStep> traj = {
      make_step("1", {"a", "b"}, "a"),
      make_step("2", {"c", "d", "e"}, "e"),
      make_step("3", {"f", "g", "h", "i"}, "f"),
  };
  const auto c = evaluate(m, traj, 2);
  EXPECT_DOUBLE_EQ(c.prec_a[1], 0.5);
  EXPECT_DOUBLE_EQ(c.rec_a[1], 7.0 / 18.0);
  EXPECT_DOUBLE_EQ(c.rec_g[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.rec_g[0], 1.0 / 3.0);  // only "a" is in the top-1 lists
  const auto naive = testing::naive_metrics(m, traj, 2);
  EXPECT_EQ(c.prec_a, naive.prec_a);
  EXPECT_EQ(c.rec_a, naive.rec_a);
  EXPECT_EQ(c.rec_g, naive.rec_g);
}

TEST(Evaluate, MatchesNaiveOracleOnRandomTrajectories) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    TableModel m;
    const auto traj = testing::random_trajectory(rng, m);
    const int k_max = 1 + static_cast<int>(rng.below(14));
    const auto c = evaluate(m, traj, k_max);
    const auto naive = testing::naive_metrics(m, traj, k_max);
    EXPECT_EQ(c.prec_a, naive.prec_a) << seed;
    EXPECT_EQ(c.rec_a, naive.rec_a) << seed;
    EXPECT_EQ(c.rec_g, naive.rec_g) << seed;
    for (int k = 1; k < k_max; ++k) {
      EXPECT_GE(c.rec_a[k], c.rec_a[k - 1]);
      EXPECT_GE(c.rec_g[k], c.rec_g[k - 1]);
    }
    m.prefix = false;  // per-k query path gives the same numbers
    const auto d = evaluate(m, traj, k_max);
    EXPECT_EQ(d.rec_a, c.rec_a);
  }
}

TEST(Evaluate, EmptyAdmissibleAndUnderfullStepsAreCounted) {
  TableModel m;
  m.table["a"] = {"x"};
  const auto c = evaluate(m, {make_step("a", {}, "x"), make_step("b", {"x"}, "x")}, 3);
  EXPECT_EQ(c.empty_admissible_steps, 1);
  EXPECT_EQ(c.underfull_steps, 2);
  EXPECT_DOUBLE_EQ(c.rec_a[0], 0.0);
  EXPECT_DOUBLE_EQ(c.rec_g[0], 0.5);
  EXPECT_DOUBLE_EQ(c.prec_a[2], 0.0);
}

class Shuffler final : public ActionModel {
 public:
  std::vector<std::string> generate(const Context&, int k) const override {
    return k == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"y"};
  }
  bool prefix_consistent() const override { return false; }
  std::string name() const override { return "shuffler"; }
};

TEST(Evaluate, NonPrefixModelMayDipAndIsQueriedPerK) {
  const auto c = evaluate(Shuffler{}, {make_step("a", {"x"}, "x")}, 2);
  EXPECT_EQ(c.rec_g, (std::vector<double>{1.0, 0.0}));
}

TEST(Evaluate, Errors) {
  TableModel m;
  EXPECT_THROW(evaluate(m, {}, 3), InvalidArgument);
  EXPECT_THROW(evaluate(m, {make_step("a", {}, "x")}, 0), InvalidArgument);
}

TEST(Evaluate, ToyzorkWalkthroughWithAdmissibleOracle) {
  const auto spec = testing::load_game("toyzork");
  const auto traj = game::walkthrough_trajectory(spec);
  TableModel m;
  for (const auto& s : traj) m.table[s.context.observation] = s.admissible;
  const auto c = evaluate(m, traj, 30);
  EXPECT_DOUBLE_EQ(c.rec_g[29], 1.0);
  EXPECT_DOUBLE_EQ(c.rec_a[29], 1.0);
}

TEST(Scores, Normalization) {
  EXPECT_DOUBLE_EQ(normalized_score(10, 10), 1.0);
  EXPECT_NEAR(normalized_score(289.7, 360), 0.8047, 5e-5);
  EXPECT_THROW(normalized_score(1, 0), InvalidArgument);
  // Independent recomputation of a small table: (0.5 + 0.25 + 1) / 3.
  EXPECT_DOUBLE_EQ(average_normalized({{"a", 5, 10}, {"b", 1, 4}, {"c", 7, 7}}), 1.75 / 3.0);
}

TEST(Report, IdenticalModelsHaveZeroDeltas) {
  TableModel m;
  m.table["a"] = {"x", "y"};
  const auto c = evaluate(m, {make_step("a", {"x"}, "x")}, 2);
  Curves g = c;
  g.game = "g";
  const auto r = compare_report({{g}, {g}}, {"one", "two"}, {{{"g", 3, 10}}, {{"g", 3, 10}}});
  EXPECT_EQ(r.curve_deltas,
            "game,k,d_prec_a,d_rec_a,d_rec_g\ng,1,0.000000,0.000000,0.000000\ng,2,0.000000,0.000000,0.000000\n");
  EXPECT_NE(r.score_deltas.find("g,0.300000,0.300000,0.000000"), std::string::npos);
}

TEST(Report, OracleVersusEmptyDeltaIsOracleCurve) {
  const auto spec = testing::load_game("toyzork");
  const auto traj = game::walkthrough_trajectory(spec);
  TableModel oracle, empty;
  for (const auto& s : traj) oracle.table[s.context.observation] = s.admissible;
  auto a = evaluate(oracle, traj, 3, "toyzork");
  auto b = evaluate(empty, traj, 3, "toyzork");
  const auto r = compare_report({{a}, {b}}, {"oracle", "empty"});
  std::string expected = "game,k,d_prec_a,d_rec_a,d_rec_g\n";
  char buf[200];
  for (int k = 0; k < 3; ++k) {
    std::snprintf(buf, sizeof buf, "toyzork,%d,%.6f,%.6f,%.6f\n", k + 1, a.prec_a[k], a.rec_a[k],
                  a.rec_g[k]);
    expected += buf;
  }
  EXPECT_EQ(r.curve_deltas, expected);
}

TEST(Report, LabelMismatchesAreErrors) {
  EXPECT_THROW(curves_csv({{}, {}}, {"one"}), InvalidArgument);
  EXPECT_THROW(compare_report({{}}, {"one"}), InvalidArgument);
  EXPECT_THROW(score_table_csv({{}}, {}), InvalidArgument);
}

TEST(Report, SummaryAndScoreTableShapes) {
  Curves a{"g1", 1, {0.5}, {0.2}, {1.0}, 1, 0, 0};
  Curves b{"g2", 1, {0.1}, {0.4}, {0.0}, 1, 0, 0};
  const auto s = summary_csv({{a, b}}, {"m"});
  EXPECT_EQ(s, "model,k,stat,prec_a,rec_a,rec_g\nm,1,mean,0.300000,0.300000,0.500000\n"
               "m,1,std,0.200000,0.100000,0.500000\n");
  const auto t = score_table_csv({{{"g1", 1, 2}, {"g2", 3, 3}}}, {"calm"});
  EXPECT_EQ(t, "game,max_score,calm_raw,calm_norm\ng1,2.000000,1.000000,0.500000\n"
               "g2,3.000000,3.000000,1.000000\navg. norm,,,0.750000\n");
}

}  // namespace
}  // namespace calm::eval
