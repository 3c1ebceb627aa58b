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


#include "calm/experiment.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "calm/text.hpp"
#include "json.hpp"

namespace calm::experiment {
namespace {

namespace fs = std::filesystem;

const fs::path kSource = CALM_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("calm-exp-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Data lines of a CSV written with a leading "# ..." echo and a header row.
std::vector<std::string> csv_rows(const std::string& csv) {
  std::vector<std::string> rows;
  for (const auto& line : text::split(csv, '\n'))
    if (!line.empty() && line[0] != '#') rows.emplace_back(line);
  if (!rows.empty()) rows.erase(rows.begin());
  return rows;
}

ExperimentConfig small(const std::vector<std::string>& games) {
  ExperimentConfig c;
  c.suite = kSource / "games/suite.yaml";
  c.games = games;
  c.transcripts_per_game = 4;
  c.seeds = {3, 4};
  c.agent.steps = 120;
  c.agent.actors = 4;
  c.agent.warmup = 40;
  c.agent.batch_size = 8;
  c.agent.k = 10;
  return c;
}

TEST(Suite, ShippedSuiteLoadsAndEveryWalkthroughWins) {
  const auto suite = load_suite(kSource / "games/suite.yaml");
  ASSERT_EQ(suite.games.size(), 6u);
  EXPECT_EQ(suite.learnable(), (std::vector<std::string>{"vault", "lantern"}));
  bool has_arity2_gold = false;
  for (const auto& g : suite.games) {
    const auto spec = game::load_game_spec_file(g.file);
    auto [state, obs] = game::reset(spec);
    for (const auto& a : spec.walkthrough) {
      state = game::step(spec, state, a).first;
      has_arity2_gold = has_arity2_gold || text::tokenize(a).size() >= 4;
    }
    EXPECT_DOUBLE_EQ(state.score, spec.max_score) << g.name;
    EXPECT_TRUE(state.ended) << g.name;
  }
  EXPECT_TRUE(has_arity2_gold);
  EXPECT_THROW(suite.find("zork1"), ConfigError);
}

// The flag's definition: a sibling-trained n-gram CALM proposes every gold
// action of a learnable game within its top 30.
TEST(Suite, LearnableGamesAreReachableThroughSiblingNgram) {
  const auto suite = load_suite(kSource / "games/suite.yaml");
  std::vector<corpus::Transcript> all;
  for (const auto& [name, raw] : synthesize_logs(suite, 20, 1)) {
    corpus::CleanOptions o;
    o.id = name;
    for (auto& t : corpus::clean_log(raw, o)) all.push_back(std::move(t));
  }
  for (const auto& g : suite.games) {
    const auto spec = game::load_game_spec_file(g.file);
    CorpusSelection sel;
    sel.exclude_games = {g.name};
    const auto calm = ngram_calm(train_ngram(select_transcripts(all, sel)), spec);
    int missing = 0;
    for (const auto& st : game::walkthrough_trajectory(spec)) {
      const auto top = calm->generate(st.context, 30);
      missing += std::find(top.begin(), top.end(), st.gold) == top.end();
    }
    if (g.learnable) {
      EXPECT_EQ(missing, 0) << g.name;
    } else {
      EXPECT_GT(missing, 0) << g.name;
    }
  }
}

TEST(Corpus, SelectionExcludesGamesAndSamplesWholeTranscripts) {
  const auto suite = load_suite(kSource / "games/suite.yaml");
  const auto logs = synthesize_logs(suite, 5, 9);
  ASSERT_EQ(logs.size(), 30u);
  std::vector<corpus::Transcript> all;
  for (const auto& [name, raw] : logs) {
    corpus::CleanOptions o;
    o.id = name;
    for (auto& t : corpus::clean_log(raw, o)) all.push_back(std::move(t));
  }
  CorpusSelection sel;
  sel.exclude_games = {"vault", "garden"};
  sel.data_fraction = 0.3;
  const auto picked = select_transcripts(all, sel);
  EXPECT_EQ(picked.size(), 6u);  // ceil(0.3 * 20)
  for (const auto& t : picked) EXPECT_FALSE(sel.exclude_games.count(t.game)) << t.id;
  EXPECT_EQ(select_transcripts(all, sel), picked);

  sel.data_fraction = 1.0;
  EXPECT_EQ(select_transcripts(all, sel).size(), 20u);
}

TEST(Config, YamlFileThenOverrides) {
  const auto preset = parse_preset(R"(
name: demo
calm: random-agent
seeds: [1, 2, 3]
data_fraction: 0.5
agent:
  k: 12
  temperature: 0.3
  q:
    hidden: 16
variants:
  - name: a
  - name: b
    agent.k: 40
    include_eval_game: true
)");
  EXPECT_EQ(preset.base.name, "demo");
  EXPECT_EQ(preset.base.calm, CalmVariant::kRandomAgent);
  EXPECT_EQ(preset.base.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(preset.base.data_fraction, 0.5);
  EXPECT_EQ(preset.base.agent.k, 12);
  EXPECT_DOUBLE_EQ(preset.base.agent.temperature, 0.3);
  EXPECT_EQ(preset.base.agent.q.hidden, 16);
  EXPECT_EQ(preset.base.agent.actors, drrn::AgentConfig{}.actors);  // default kept
  ASSERT_EQ(preset.variants.size(), 2u);
  EXPECT_TRUE(preset.variants[0].overrides.empty());
  EXPECT_EQ(preset.variants[1].overrides.at("agent.k"), "40");

  auto c = preset.base;
  apply_override(c, "agent.k", "7");  // command line beats the file
  apply_override(c, "seeds", "[5]");
  EXPECT_EQ(c.agent.k, 7);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{5}));
}

TEST(Config, RejectsBadInput) {
  ExperimentConfig c;
  EXPECT_THROW(apply_override(c, "agent.kk", "3"), ConfigError);
  EXPECT_THROW(apply_override(c, "agent.k", "three"), ConfigError);
  EXPECT_THROW(apply_override(c, "calm", "gpt2"), ConfigError);
  EXPECT_THROW(parse_preset("- 1\n- 2\n"), ConfigError);
  EXPECT_THROW(parse_preset("variants:\n  - name: x\n  - name: x\n"), ConfigError);
  EXPECT_THROW(parse_preset("variants:\n  - name: x\n    bogus: 1\n"), ConfigError);
  EXPECT_THROW(parse_preset("name: [unclosed\n"), ParseError);
  c.data_fraction = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.data_fraction = 1.0;
  c.seeds.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c.seeds = {0};
  c.format = "xml";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, YamlEchoReadsBack) {
  ExperimentConfig c;
  c.name = "echo";
  c.calm = CalmVariant::kNeuralNoPretrain;
  c.seeds = {4, 8};
  c.data_fraction = 0.2;
  c.include_eval_game = true;
  c.games = {"vault", "lantern"};
  c.agent.k = 10;
  c.agent.temperature = 0.3;
  c.agent.filter = drrn::FilterMode::kTextual;
  c.neural.model.hidden = 48;
  const auto back = parse_preset(to_yaml(c)).base;
  EXPECT_EQ(back.name, c.name);
  EXPECT_EQ(back.calm, c.calm);
  EXPECT_EQ(back.seeds, c.seeds);
  EXPECT_EQ(back.data_fraction, c.data_fraction);
  EXPECT_EQ(back.include_eval_game, c.include_eval_game);
  EXPECT_EQ(back.games, c.games);
  EXPECT_EQ(back.agent.k, c.agent.k);
  EXPECT_EQ(back.agent.temperature, c.agent.temperature);
  EXPECT_EQ(back.agent.filter, c.agent.filter);
  EXPECT_EQ(back.neural.model.hidden, c.neural.model.hidden);
  EXPECT_EQ(to_yaml(back), to_yaml(c));
}

TEST(Run, ManifestListsEveryCellOnce) {
  auto c = small({"vault", "lantern"});
  c.out = scratch("manifest");
  const auto r = run_experiment(c);
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_TRUE(r.complete());
  ASSERT_EQ(r.rows.size(), 2u);

  const auto rows = csv_rows(slurp(c.out / "manifest.csv"));
  ASSERT_EQ(rows.size(), 4u);
  std::map<std::string, int> seen;
  for (const auto& row : rows) {
    const auto f = text::split(row, ',');
    ++seen[std::string(f[0]) + "/" + std::string(f[1])];
    EXPECT_EQ(f[2], "ok");
  }
  EXPECT_EQ(seen, (std::map<std::string, int>{{"lantern/3", 1}, {"lantern/4", 1}, {"vault/3", 1}, {"vault/4", 1}}));
  for (const auto* f : {"vault-seed3.json", "vault-seed4.episodes.csv", "lantern-seed4.json"})
    EXPECT_TRUE(fs::exists(c.out / "reports" / f)) << f;

  const auto summary = slurp(c.out / "summary.csv");
  EXPECT_EQ(summary.rfind("# calm " + std::string(CALM_VERSION), 0), 0u);
  EXPECT_NE(summary.find("seeds=3;4"), std::string::npos);
  const auto srows = csv_rows(summary);
  ASSERT_EQ(srows.size(), 3u);
  EXPECT_EQ(srows.back().rfind("avg. norm", 0), 0u);

  // avg. norm is the unweighted mean over games of seed-averaged scores.
  double expect = 0.0;
  for (const auto& row : r.rows) {
    double sum = 0.0;
    for (const auto& cell : r.cells)
      if (cell.game == row.game) sum += cell.report.final_avg_100;
    expect += sum / 2.0 / row.max_score;
  }
  EXPECT_NEAR(r.avg_norm, expect / 2.0, 1e-12);
  EXPECT_TRUE(fs::exists(c.out / "config.yaml"));
  EXPECT_EQ(parse_preset(slurp(c.out / "config.yaml")).base.seeds, c.seeds);
}

TEST(Run, FailedSetupIsRecordedNotFatal) {
  // Transcripts exist only for vault, so vault's leave-one-out CALM has no
  // training data while lantern's is trained on vault.
  const auto dir = scratch("partial-logs");
  const auto suite = load_suite(kSource / "games/suite.yaml");
  for (const auto& [name, raw] : synthesize_logs(suite, 3, 2))
    if (name.rfind("vault", 0) == 0) std::ofstream(dir / name) << raw;

  auto c = small({"vault", "lantern"});
  c.transcripts = dir;
  c.format = "jsonl";
  c.out = scratch("partial");
  const auto r = run_experiment(c);
  EXPECT_FALSE(r.complete());
  ASSERT_EQ(r.cells.size(), 4u);
  for (const auto& cell : r.cells) {
    EXPECT_EQ(cell.ok, cell.game == "lantern") << cell.game;
    if (!cell.ok) EXPECT_FALSE(cell.error.empty());
  }
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].game, "lantern");

  int failed = 0, ok = 0;
  std::istringstream manifest(slurp(c.out / "manifest.jsonl"));
  for (std::string line; std::getline(manifest, line);) {
    const auto j = nlohmann::json::parse(line);
    (j["status"] == "ok" ? ok : failed) += 1;
    EXPECT_EQ(j["version"], CALM_VERSION);
  }
  EXPECT_EQ(ok, 2);
  EXPECT_EQ(failed, 2);
  EXPECT_FALSE(fs::exists(c.out / "reports" / "vault-seed3.json"));
  EXPECT_TRUE(fs::exists(c.out / "reports" / "lantern-seed3.episodes.jsonl"));
}

TEST(Run, DeterministicAcrossRuns) {
  auto c = small({"vault"});
  c.seeds = {7};
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  EXPECT_EQ(a.cells[0].report.to_json(), b.cells[0].report.to_json());
}

TEST(Run, RandomAgentNeverUpdates) {
  auto c = small({"vault"});
  c.calm = CalmVariant::kRandomAgent;
  for (const auto& cell : run_experiment(c).cells) {
    ASSERT_TRUE(cell.ok);
    EXPECT_EQ(cell.report.updates, 0);
    EXPECT_EQ(cell.report.config.policy, drrn::Policy::kRandom);
  }
}

TEST(Run, PresetWritesAblationTable) {
  Preset p;
  p.base = small({"vault"});
  p.base.seeds = {1};
  p.base.out = scratch("preset");
  p.variants = {{"k30", {{"agent.k", "30"}}}, {"k10", {}}, {"admissible", {{"calm", "admissible"}}}};
  const auto rs = run_preset(p);
  ASSERT_EQ(rs.size(), 3u);
  EXPECT_EQ(rs[0].cells[0].report.config.k, 30);
  EXPECT_EQ(rs[1].cells[0].report.config.k, 10);
  EXPECT_EQ(rs[2].cells[0].report.candidates, "admissible");
  for (const auto* v : {"k30", "k10", "admissible"}) EXPECT_TRUE(fs::exists(p.base.out / v / "summary.csv")) << v;
  const auto rows = csv_rows(slurp(p.base.out / "ablation.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].rfind("k30,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("admissible,", 0), 0u);
}

}  // namespace
}  // namespace calm::experiment
