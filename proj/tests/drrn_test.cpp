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

#include "calm/drrn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "calm/error.hpp"
#include "drrn_fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace calm::drrn {
namespace {

using calm::testing::FixedCandidates;

nn::Parameter& param(QNetwork& net, const std::string& name) {
  for (nn::Parameter* p : net.parameters())
    if (p->name == name) return *p;
  throw std::runtime_error("no parameter " + name);
}

QConfig tiny() {
  QConfig q;
  q.buckets = 32;
  q.embedding = 4;
  q.hidden = 3;
  q.decoder_hidden = 4;
  return q;
}

// Q forced to a constant c for every input.
QNetwork constant_net(double c) {
  QNetwork net(tiny(), 1);
  param(net, "drrn.g2.w").value.fill(0.0);
  param(net, "drrn.g2.b").value.fill(c);
  return net;
}

TEST(QNetwork, RepeatedAndPermutedCandidates) {
  QNetwork net(tiny(), 3);
  const auto q = net.q_values("you see a lamp", {"take lamp", "north", "take lamp", "open door"});
  EXPECT_EQ(q[0], q[2]);
  EXPECT_NE(q[0], q[1]);
  const auto p = net.q_values("you see a lamp", {"open door", "take lamp", "north"});
  EXPECT_EQ(p[0], q[3]);
  EXPECT_EQ(p[1], q[0]);
  EXPECT_EQ(p[2], q[1]);
  EXPECT_THROW(net.q_values("x", {}), InvalidArgument);
}

TEST(QNetwork, BatchMatchesSingleCalls) {
  QNetwork net(tiny(), 4);
  const std::vector<std::string> obs = {"room one", "room two", "room one"};
  const std::vector<std::vector<std::string>> cands = {{"a", "b c"}, {"d"}, {"b c", "e f g"}};
  const auto batch = net.q_values_batch(obs, cands);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto single = net.q_values(obs[i], cands[i]);
    ASSERT_EQ(single.size(), batch[i].size());
    for (std::size_t j = 0; j < single.size(); ++j) EXPECT_DOUBLE_EQ(single[j], batch[i][j]);
  }
}

// All weights zero except the candidate biases and the decoder, so that
// h_T = tanh(bn) (1 - 2^-T) per unit and Q = D tanh(H (h_o + h_a)).
TEST(QNetwork, HandSetWeights) {
  QConfig q;
  q.buckets = 16;
  q.embedding = 2;
  q.hidden = 2;
  q.decoder_hidden = 3;
  QNetwork net(q, 0);
  for (nn::Parameter* p : net.parameters()) p->value.fill(0.0);
  auto& ob = param(net, "drrn.obs.b");
  auto& ab = param(net, "drrn.act.b");
  for (int j = 4; j < 6; ++j) {
    ob.value.data[j] = 1.0;
    ab.value.data[j] = 0.5;
  }
  param(net, "drrn.g1.w").value.fill(1.0);
  param(net, "drrn.g2.w").value.fill(1.0);
  auto expect = [](int to, int ta) {
    const double ho = std::tanh(1.0) * (1 - std::pow(0.5, to));
    const double ha = std::tanh(0.5) * (1 - std::pow(0.5, ta));
    return 3 * std::tanh(2 * (ho + ha));
  };
  const auto v = net.q_values("a dark room .", {"north", "take the lamp", "x y"});
  EXPECT_NEAR(v[0], expect(4, 1), 1e-12);
  EXPECT_NEAR(v[1], expect(4, 3), 1e-12);
  EXPECT_NEAR(v[2], expect(4, 2), 1e-12);
}

TEST(Selection, SoftmaxValues) {
  const auto p = selection_probs({std::log(2.0), 0.0}, 1.0);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  const auto cold = selection_probs({1.0, 0.9, 0.2}, 1e-3);
  EXPECT_GT(cold[0], 1 - 1e-12);
  const auto greedy = selection_probs({0.5, 2.0, 2.0}, 0.0);
  EXPECT_EQ(greedy, (std::vector<double>{0, 1, 0}));
  const auto hot = selection_probs({5.0, -5.0}, 1e6);
  EXPECT_NEAR(hot[0], 0.5, 1e-5);
  EXPECT_THROW(selection_probs({}, 1.0), InvalidArgument);
}

TEST(Selection, EqualValuesSampleUniformly) {
  const QNetwork net = constant_net(0.25);
  const std::vector<std::string> cands = {"a", "b", "c", "d", "e"};
  Rng rng(11);
  std::map<std::string, int> counts;
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[select_action(net, "obs", cands, 1.0, rng)];
  double chi2 = 0.0;
  for (const auto& c : cands) {
    const double e = n / 5.0;
    chi2 += (counts[c] - e) * (counts[c] - e) / e;
  }
  EXPECT_LT(chi2, 18.47);  // df = 4, p = 0.001
}

TEST(Filter, OracleKeepsStateChangingActions) {
  const auto spec = calm::testing::load_game("toyzork");
  const auto state = game::reset(spec).first;
  EXPECT_EQ(filter_candidates({"north", "take lamp", "xyzzy", "east"}, FilterMode::kOracle, spec, state),
            (std::vector<std::string>{"north", "east"}));
  const std::vector<std::string> hopeless = {"xyzzy", "dance wildly"};
  EXPECT_EQ(filter_candidates(hopeless, FilterMode::kOracle, spec, state), hopeless);
  EXPECT_EQ(filter_candidates(hopeless, FilterMode::kNone, spec, state), hopeless);
  EXPECT_THROW(filter_candidates(hopeless, FilterMode::kTextual, spec, state), InvalidArgument);
}

TEST(Filter, TextualClassifierAccuracy) {
  for (const char* name : {"toyzork", "vault", "mansion"}) {
    const auto spec = calm::testing::load_game(name);
    Rng a(1), b(2);
    TextualFilter f;
    f.train(engine_labeled_responses(spec, 2000, a));
    const auto test = engine_labeled_responses(spec, 1000, b);
    int right = 0;
    for (const auto& [response, label] : test) right += f.admissible(response) == label;
    EXPECT_GE(right / static_cast<double>(test.size()), 0.95) << name;
  }
}

TEST(Filter, ModeNames) {
  for (auto m : {FilterMode::kNone, FilterMode::kOracle, FilterMode::kTextual})
    EXPECT_EQ(parse_filter_mode(to_string(m)), m);
  EXPECT_THROW(parse_filter_mode("fasttext"), ConfigError);
}

TEST(TemporalDifference, TerminalTransition) {
  const QNetwork net = constant_net(3.0);
  Experience e{"o", "a", 5.0, "o2", {}, true};
  const std::vector<const Experience*> batch = {&e};
  const auto y = td_targets(net, batch, 0.9);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y[0], 5.0);
  nn::Tape tape(false);
  EXPECT_DOUBLE_EQ(td_loss(tape, net, batch, y).scalar(), 4.0);
}

TEST(TemporalDifference, BootstrappedTarget) {
  const QNetwork net = constant_net(2.0);
  Experience e{"o", "a", 1.0, "o2", {"x", "y"}, false};
  EXPECT_DOUBLE_EQ(td_targets(net, {&e}, 0.5)[0], 1.0 + 0.5 * 2.0);
  Experience orphan{"o", "a", 1.0, "o2", {}, false};
  EXPECT_THROW(td_targets(net, {&orphan}, 0.5), InvalidArgument);
  EXPECT_THROW(td_targets(net, {}, 0.5), InvalidArgument);
}

TEST(TemporalDifference, ZeroLossAtFixedPoint) {
  QNetwork net = constant_net(0.0);
  Experience e{"o", "a", 0.0, "o2", {"b"}, false};
  const std::vector<const Experience*> batch = {&e};
  const auto y = td_targets(net, batch, 0.9);
  nn::zero_grads(net.parameters());
  nn::Tape tape;
  nn::Var loss = td_loss(tape, net, batch, y);
  EXPECT_EQ(loss.scalar(), 0.0);
  tape.backward(loss);
  EXPECT_EQ(nn::global_grad_norm(net.parameters()), 0.0);
}

TEST(TemporalDifference, FiniteDifferenceGradient) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    QNetwork net(tiny(), seed);
    Rng rng(seed + 100);
    for (nn::Parameter* p : net.parameters()) calm::testing::randomize(*p, rng, 0.6);
    std::vector<Experience> data = {
        {"the red room", "take box", 1.0, "the blue room", {"north", "open box"}, false},
        {"the blue room", "north", 0.0, "the red room", {"take box"}, false},
        {"the red room", "open box now", 2.0, "gone", {}, true},
    };
    std::vector<const Experience*> batch;
    for (const auto& e : data) batch.push_back(&e);
    const auto y = td_targets(net, batch, 0.9);
    const auto r = calm::testing::check_gradients(
        net.parameters(), [&](nn::Tape& t) { return td_loss(t, net, batch, y); });
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(TemporalDifference, UpdateMatchesSeparateTargetPass) {
  QNetwork a(tiny(), 8);
  QNetwork b = a;
  const QNetwork frozen = a;
  nn::AdamConfig cfg;
  cfg.lr = 1e-2;
  nn::Adam opt_a(a.parameters(), cfg), opt_b(b.parameters(), cfg);
  std::vector<Experience> data = {
      {"room", "go", 0.5, "hall", {"go", "stay"}, false},
      {"hall", "stay", 1.0, "hall", {"go"}, false},
  };
  std::vector<const Experience*> batch = {&data[0], &data[1], &data[0]};
  const double la = td_update(a, opt_a, batch, 0.9);
  const double lb = td_update(b, opt_b, batch, 0.9, &frozen);
  EXPECT_NEAR(la, lb, 1e-12);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j)
      ASSERT_NEAR(pa[i]->value.data[j], pb[i]->value.data[j], 1e-12) << pa[i]->name;
}

TEST(TemporalDifference, TwoStateChainConverges) {
  EXPECT_LT(calm::testing::train_chain(0.9, 1500, 5), 1e-2);
}

TEST(Buffers, RingOverwritesOldest) {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push({std::to_string(i), "a", 0, "", {}, true});
  ASSERT_EQ(buf.size(), 3u);
  std::set<std::string> held;
  for (std::size_t i = 0; i < buf.size(); ++i) held.insert(buf.at(i).obs);
  EXPECT_EQ(held, (std::set<std::string>{"2", "3", "4"}));
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
  EXPECT_THROW(ReplayBuffer(2).sample(1, *std::make_unique<Rng>(0)), InvalidArgument);
}

TEST(Buffers, BestScoreOnlyImproves) {
  BestScoreBuffer best(100);
  const std::vector<Experience> traj(4, Experience{"o", "a", 0, "o", {"a"}, false});
  EXPECT_FALSE(best.offer(traj, 0.0));
  EXPECT_TRUE(best.offer(traj, 3.0));
  EXPECT_FALSE(best.offer(traj, 2.0));
  EXPECT_EQ(best.buffer().size(), 4u);
  EXPECT_TRUE(best.offer(traj, 3.0));
  EXPECT_EQ(best.buffer().size(), 8u);
  EXPECT_TRUE(best.offer({traj[0]}, 5.0));
  EXPECT_EQ(best.buffer().size(), 1u);
  EXPECT_EQ(best.best(), 5.0);
}

TEST(Buffers, MixedSamplingRatio) {
  ReplayBuffer standard(10);
  BestScoreBuffer best(10);
  standard.push({"std", "a", 0, "", {}, true});
  Rng rng(3);
  for (auto* e : sample_mixed(standard, best, 8, 0.5, rng)) EXPECT_EQ(e->obs, "std");
  best.offer({Experience{"best", "a", 0, "", {}, true}}, 1.0);
  int from_best = 0;
  for (auto* e : sample_mixed(standard, best, 64, 0.5, rng)) from_best += e->obs == "best";
  EXPECT_EQ(from_best, 32);
}

TEST(Training, ZeroStepsGivesEmptyReport) {
  const auto spec = calm::testing::load_game("vault");
  AgentConfig cfg;
  cfg.steps = 0;
  const auto r = train(cfg, spec, AdmissibleCandidates{}).report;
  EXPECT_TRUE(r.episodes.empty());
  EXPECT_EQ(r.final_avg_100, 0.0);
  EXPECT_EQ(r.total_steps, 0);
}

TEST(Training, ConfigValidation) {
  const auto spec = calm::testing::load_game("vault");
  AgentConfig cfg;
  cfg.gamma = 1.5;
  EXPECT_THROW(train(cfg, spec, AdmissibleCandidates{}), ConfigError);
  cfg = AgentConfig{};
  cfg.actors = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AgentConfig{};
  cfg.best_ratio = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

AgentConfig small_run(long steps, std::uint64_t seed) {
  AgentConfig cfg;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.actors = 4;
  cfg.warmup = 100;
  cfg.batch_size = 16;
  cfg.max_episode_steps = 10;
  cfg.q.embedding = 8;
  cfg.q.hidden = 8;
  cfg.q.decoder_hidden = 8;
  return cfg;
}

TEST(Training, DeterministicReportsAreIdentical) {
  const auto spec = calm::testing::load_game("vault");
  const auto cfg = small_run(400, 7);
  const auto a = train(cfg, spec, AdmissibleCandidates{}).report.to_json();
  const auto b = train(cfg, spec, AdmissibleCandidates{}).report.to_json();
  EXPECT_EQ(a, b);
  auto other = cfg;
  other.seed = 8;
  EXPECT_NE(a, train(other, spec, AdmissibleCandidates{}).report.to_json());
}

TEST(Training, ReportAccounting) {
  const auto spec = calm::testing::load_game("vault");
  auto cfg = small_run(300, 1);
  const auto r = train(cfg, spec, AdmissibleCandidates{}).report;
  EXPECT_EQ(r.total_steps, 300);
  EXPECT_EQ(r.updates, (300 - 100) / 4 + 1);
  long steps = 0;
  double top = 0;
  for (const auto& e : r.episodes) {
    steps += e.steps;
    top = std::max(top, e.score);
    EXPECT_LE(e.steps, cfg.max_episode_steps);
  }
  EXPECT_LE(steps, 300);
  EXPECT_EQ(r.max_seen, top);
  EXPECT_EQ(r.max_score, 10.0);
  EXPECT_NE(r.to_json().find("\"final_avg_100\""), std::string::npos);
}

TEST(Training, ThreadedModeRuns) {
  const auto spec = calm::testing::load_game("vault");
  auto cfg = small_run(400, 2);
  cfg.deterministic = false;
  const auto r = train(cfg, spec, AdmissibleCandidates{}).report;
  EXPECT_EQ(r.total_steps, 400);
  EXPECT_FALSE(r.episodes.empty());
  EXPECT_GT(r.updates, 0);
}

TEST(Training, RandomPolicyNeverUpdates) {
  const auto spec = calm::testing::load_game("vault");
  auto cfg = small_run(300, 3);
  cfg.policy = Policy::kRandom;
  const auto r = train(cfg, spec, AdmissibleCandidates{}).report;
  EXPECT_EQ(r.updates, 0);
  EXPECT_EQ(r.candidates, "random-admissible");
}

TEST(Training, TextualFilterRun) {
  const auto spec = calm::testing::load_game("vault");
  auto cfg = small_run(200, 4);
  cfg.filter = FilterMode::kTextual;
  FixedCandidates source({"north", "south", "east", "west", "take key", "dance"});
  EXPECT_EQ(train(cfg, spec, source).report.total_steps, 200);
}

TEST(Training, LearnsTwoRoomGame) {
  const auto spec = game::load_game_spec(calm::testing::two_room_game(), "tworoom");
  FixedCandidates source({"east", "west", "take coin", "take hat", "wait"});
  auto cfg = small_run(5000, 9);
  cfg.max_episode_steps = 4;
  cfg.lr = 1e-2;
  cfg.temperature = 0.1;  // Q gaps are about 0.1 at this reward scale
  auto result = train(cfg, spec, source);
  Rng rng(0);
  double score = 0;
  play(result.network, spec, source, 5, FilterMode::kNone, 4, 0.0, rng, &score);
  EXPECT_EQ(score, spec.max_score);
  cfg.policy = Policy::kRandom;
  EXPECT_GT(result.report.final_avg_100, train(cfg, spec, source).report.final_avg_100);
}

TEST(Checkpoint, RoundTrip) {
  QNetwork net(tiny(), 12);
  std::stringstream buf;
  net.save(buf);
  QNetwork back;
  back.load(buf);
  EXPECT_EQ(back.q_values("some room", {"a", "b c"}), net.q_values("some room", {"a", "b c"}));
  std::stringstream bad("calm-drrn 2\n");
  EXPECT_THROW(back.load(bad), ParseError);
}

}  // namespace
}  // namespace calm::drrn
