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

#ifndef CALM_EXPERIMENT_HPP_
#define CALM_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "calm/corpus.hpp"
#include "calm/drrn.hpp"
#include "calm/eval.hpp"
#include "calm/game.hpp"
#include "calm/neural.hpp"
#include "calm/ngram.hpp"

namespace calm::experiment {

// ---- benchmark suite --------------------------------------------------------

struct SuiteGame {
  std::string name;
  std::filesystem::path file;
  bool learnable = false;  // reward reachable with one-object actions only
};

struct Suite {
  std::vector<SuiteGame> games;

  const SuiteGame& find(const std::string& name) const;  // ConfigError if absent
  std::vector<std::string> names() const;
  std::vector<std::string> learnable() const;
};

// YAML: games: [{name, file, learnable}], files relative to the suite file.
Suite load_suite(const std::filesystem::path& path);

// ---- corpora ------------------------------------------------------------------

// Raw synthetic-player logs, `per_game` for each suite game, keyed by file
// name ("<game>-NN.log"). Deterministic in seed.
std::map<std::string, std::string> synthesize_logs(const Suite& suite, int per_game, std::uint64_t seed,
                                                   const corpus::PlayerOptions& players = {});

struct CorpusSelection {
  std::set<std::string> exclude_games;
  double data_fraction = 1.0;
  std::uint64_t seed = 0;
};

// Drops excluded games, then samples whole transcripts.
std::vector<corpus::Transcript> select_transcripts(const std::vector<corpus::Transcript>& all,
                                                   const CorpusSelection& selection);

std::vector<corpus::Example> examples_of(const std::vector<corpus::Transcript>& transcripts,
                                         const corpus::Limits& limits = {}, corpus::BuildStats* stats = nullptr);

// ---- CALM training ----------------------------------------------------------

struct NgramTraining {
  std::shared_ptr<const ngram::ActionScorer> scorer;
  ngram::Lexicon lexicon;
  std::string summary;  // chosen hyper-parameters and validation perplexity
};

struct NgramOptions {
  double train_frac = 0.9;
  bool interpolate = false;
  int max_order = 4;
};

// Tunes (n, alpha) -- or interpolation weights -- on the first train_frac of
// the actions, then refits on all of them.
NgramTraining train_ngram(const std::vector<corpus::Transcript>& transcripts, const NgramOptions& options = {});

std::shared_ptr<const ActionModel> ngram_calm(const NgramTraining& trained, const game::GameSpec& spec);

struct NeuralOptions {
  neural::NeuralConfig model;
  neural::TrainOptions train;
  bool pretrain = true;
  int pretrain_epochs = 2;
  double train_frac = 0.9;
  std::size_t max_vocab = 10000;
};

// Room and object prose of the given games, used for generic pretraining.
std::vector<std::string> game_prose(const std::vector<game::GameSpec>& specs);

struct NeuralTraining {
  std::shared_ptr<neural::NeuralCalm> model;
  std::vector<neural::EpochStats> history;
};

NeuralTraining train_neural(const std::vector<corpus::Transcript>& transcripts,
                            const std::vector<std::string>& pretraining_text, const NeuralOptions& options);

// ---- experiments --------------------------------------------------------------

enum class CalmVariant { kNgram, kNeural, kNeuralNoPretrain, kRandomAgent, kAdmissible };
CalmVariant parse_calm_variant(const std::string& s);
std::string to_string(CalmVariant v);

struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path suite = "games/suite.yaml";
  std::filesystem::path transcripts;  // empty: synthesize in memory
  int transcripts_per_game = 20;
  std::uint64_t corpus_seed = 1;
  std::vector<std::string> games;  // empty: whole suite
  CalmVariant calm = CalmVariant::kNgram;
  double data_fraction = 1.0;
  bool include_eval_game = false;
  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path out;  // empty: nothing written
  std::string format = "csv";  // csv | jsonl
  drrn::AgentConfig agent;
  NgramOptions ngram;
  NeuralOptions neural;

  void validate() const;  // ConfigError
};

// Named overrides applied on top of a base config (one ablation column).
struct Variant {
  std::string name;
  std::map<std::string, std::string> overrides;  // key -> scalar text
};

struct Preset {
  ExperimentConfig base;
  std::vector<Variant> variants;  // empty: just the base
};

// Reads a YAML document. Unknown keys are errors.
Preset load_preset(const std::filesystem::path& path);
Preset parse_preset(const std::string& yaml, const std::string& source = "<config>");
// Sets one dotted key ("agent.k", "calm", "seeds" as "1,2,3", ...).
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);
// Canonical YAML echo of every field.
std::string to_yaml(const ExperimentConfig& config);

struct Cell {
  std::string game;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  drrn::TrainingReport report;
};

struct GameRow {
  std::string game;
  double max_score = 0.0;
  double mean_final = 0.0;     // over successful seeds
  double mean_max_seen = 0.0;
};

struct ExperimentResult {
  std::string name;
  std::vector<Cell> cells;
  std::vector<GameRow> rows;
  double avg_norm = 0.0;           // unweighted mean of mean_final / max_score
  double avg_norm_max_seen = 0.0;
  bool complete() const;           // every cell succeeded
};

// Trains one agent per (game, seed). The CALM for each game is trained on
// the selected transcripts, excluding that game's own unless
// include_eval_game is set. Writes reports, a manifest and summaries under
// config.out when it is non-empty.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Runs every variant of a preset (each under out/<variant>) and writes the
// ablation table. Returns results in variant order.
std::vector<ExperimentResult> run_preset(const Preset& preset);

std::string summary_csv(const ExperimentResult& r, const ExperimentConfig& config);
std::string ablation_csv(const std::vector<ExperimentResult>& results);

// Header line carried by every CSV output: "# calm <version> seed=... key=value ...".
std::string csv_echo(const std::string& what, const std::map<std::string, std::string>& fields);

}  // namespace calm::experiment

#endif  // CALM_EXPERIMENT_HPP_
