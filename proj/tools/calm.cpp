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

// calm: command-line entry point for the whole pipeline.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure (partial
// results may have been written).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "calm/corpus.hpp"
#include "calm/drrn.hpp"
#include "calm/error.hpp"
#include "calm/eval.hpp"
#include "calm/experiment.hpp"
#include "calm/game.hpp"
#include "calm/neural.hpp"
#include "calm/ngram.hpp"
#include "calm/text.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using namespace calm;

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

std::set<std::string> game_set(const std::string& csv) {
  std::set<std::string> out;
  for (const auto& g : text::split(csv, ',')) {
    const auto t = std::string(text::trim(g));
    if (!t.empty()) out.insert(t);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

// A game given either as a .game file or as a suite member name.
struct GameRef {
  std::string name;
  game::GameSpec spec;
};

GameRef resolve_game(const std::string& game, const std::string& suite_path) {
  if (text::starts_with(fs::path(game).extension().string(), ".game") || fs::exists(game)) {
    auto spec = game::load_game_spec_file(game);
    return {spec.name, std::move(spec)};
  }
  const auto suite = experiment::load_suite(suite_path);
  return {game, game::load_game_spec_file(suite.find(game).file)};
}

// A trained CALM checkpoint of either kind.
struct Calm {
  std::shared_ptr<const ngram::ActionScorer> scorer;
  ngram::Lexicon lexicon;
  std::shared_ptr<const neural::NeuralCalm> neural;

  std::shared_ptr<const ActionModel> for_game(const game::GameSpec& spec) const {
    if (neural) return neural;
    return std::make_shared<ngram::NgramCalm>(scorer, lexicon, spec.object_names());
  }
};

Calm load_calm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CALM checkpoint " + path);
  std::string magic;
  std::getline(in, magic);
  Calm c;
  if (text::starts_with(magic, "calm-neural")) {
    c.neural = std::make_shared<neural::NeuralCalm>(neural::NeuralCalm::load(path));
    return c;
  }
  if (!text::starts_with(magic, "calm-ngram"))
    throw ConfigError(path + " is not a CALM checkpoint (header '" + magic + "')");
  c.scorer = ngram::load_scorer_file(path);
  if (auto* m = dynamic_cast<const ngram::NgramModel*>(c.scorer.get())) {
    c.lexicon = m->lexicon();
  } else if (auto* im = dynamic_cast<const ngram::InterpolatedModel*>(c.scorer.get())) {
    c.lexicon = im->components().back().lexicon();
  }
  return c;
}

std::vector<corpus::Transcript> transcripts_from(const std::string& dir, const std::string& exclude,
                                                 double fraction, std::uint64_t seed) {
  experiment::CorpusSelection sel;
  sel.exclude_games = game_set(exclude);
  sel.data_fraction = fraction;
  sel.seed = seed;
  return experiment::select_transcripts(corpus::load_transcripts(dir), sel);
}

// ---- subcommands --------------------------------------------------------------

struct GenTranscripts {
  std::string suite = "games/suite.yaml";
  std::string out = "data/transcripts";
  int per_game = 20;
  std::uint64_t seed = 1;

  int run() const {
    const auto suite_ = experiment::load_suite(suite);
    const auto logs = experiment::synthesize_logs(suite_, per_game, seed);
    for (const auto& [name, raw] : logs) write_text(fs::path(out) / name, raw);
    std::cout << "wrote " << logs.size() << " transcripts to " << out << "\n";
    return 0;
  }
};

struct BuildCorpus {
  std::string transcripts = "data/transcripts";
  std::string out = "data/corpus";
  std::string exclude;
  double train_frac = 0.9;
  std::size_t max_obs_tokens = 256;
  std::size_t max_action_tokens = 7;

  int run() const {
    corpus::Limits limits{max_obs_tokens, max_action_tokens};
    corpus::BuildStats stats;
    const auto all = corpus::load_transcripts(transcripts);
    const auto examples = experiment::examples_of(all, limits, &stats);
    const auto parts = corpus::split(examples, train_frac, game_set(exclude));
    fs::create_directories(out);
    corpus::write_examples(fs::path(out) / "train.jsonl", parts.train);
    corpus::write_examples(fs::path(out) / "validation.jsonl", parts.validation);
    nlohmann::ordered_json j;
    j["version"] = CALM_VERSION;
    j["transcripts"] = all.size();
    j["emitted"] = stats.emitted;
    j["dropped_context"] = stats.dropped_context;
    j["dropped_action"] = stats.dropped_action;
    j["train"] = parts.train.size();
    j["validation"] = parts.validation.size();
    j["config"] = {{"train_frac", train_frac},
                   {"exclude_games", exclude},
                   {"max_obs_tokens", max_obs_tokens},
                   {"max_action_tokens", max_action_tokens}};
    write_text(fs::path(out) / "stats.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
  }
};

struct TrainNgram {
  std::string transcripts = "data/transcripts";
  std::string exclude;
  double data_fraction = 1.0;
  std::uint64_t seed = 0;
  experiment::NgramOptions options;
  std::string out = "ngram.calm";

  int run() const {
    const auto t = transcripts_from(transcripts, exclude, data_fraction, seed);
    const auto trained = experiment::train_ngram(t, options);
    ngram::save_scorer_file(*trained.scorer, out);
    std::cout << "ngram: " << trained.summary << " (" << t.size() << " transcripts) -> " << out << "\n";
    return 0;
  }
};

struct TrainLm {
  std::string transcripts = "data/transcripts";
  std::string suite = "games/suite.yaml";
  std::string exclude;
  double data_fraction = 1.0;
  std::uint64_t seed = 0;
  bool no_pretrain = false;
  experiment::NeuralOptions options;
  std::string out = "neural.calm";

  int run() {
    const auto t = transcripts_from(transcripts, exclude, data_fraction, seed);
    std::vector<game::GameSpec> specs;
    for (const auto& g : experiment::load_suite(suite).games) specs.push_back(game::load_game_spec_file(g.file));
    options.train.seed = seed;
    options.pretrain = !no_pretrain;
    const auto trained = experiment::train_neural(t, experiment::game_prose(specs), options);
    trained.model->save(out);
    for (std::size_t e = 0; e < trained.history.size(); ++e)
      std::printf("epoch %zu train_loss %.4f val_loss %.4f\n", e + 1, trained.history[e].train_loss,
                  trained.history[e].val_loss);
    std::cout << "-> " << out << "\n";
    return 0;
  }
};

struct TrainRl {
  std::string game;
  std::string suite = "games/suite.yaml";
  std::string calm = "admissible";
  bool random_agent = false;
  std::string filter = "none";
  std::string out;
  std::string save_agent;
  std::string format = "jsonl";
  drrn::AgentConfig agent;

  int run() {
    const auto g = resolve_game(game, suite);
    agent.filter = drrn::parse_filter_mode(filter);
    if (random_agent) agent.policy = drrn::Policy::kRandom;
    std::unique_ptr<drrn::CandidateSource> source;
    if (calm == "admissible") {
      source = std::make_unique<drrn::AdmissibleCandidates>();
    } else {
      source = std::make_unique<drrn::CalmCandidates>(load_calm(calm).for_game(g.spec));
    }
    const auto result = drrn::train(agent, g.spec, *source, g.name);
    const auto text = format == "csv" ? result.report.episodes_csv() : result.report.to_json();
    if (out.empty()) {
      std::cout << text;
    } else {
      write_text(out, text);
    }
    if (!save_agent.empty()) {
      std::ostringstream buf;
      result.network.save(buf);
      write_text(save_agent, buf.str());
    }
    std::fprintf(stderr, "%s: final_avg_100 %.3f max_seen %.1f of %.1f over %zu episodes\n", g.name.c_str(),
                 result.report.final_avg_100, result.report.max_seen, result.report.max_score,
                 result.report.episodes.size());
    return 0;
  }
};

struct EvalWalkthrough {
  std::vector<std::string> calms;
  std::vector<std::string> labels;
  std::string suite = "games/suite.yaml";
  std::string games;
  int k_max = 30;
  std::string out;
  std::string format = "csv";

  int run() {
    if (calms.empty() || calms.size() > 2) throw ConfigError("eval-walkthrough: give one or two --calm checkpoints");
    if (labels.empty())
      for (const auto& c : calms) labels.push_back(fs::path(c).stem().string());
    if (labels.size() != calms.size()) throw ConfigError("eval-walkthrough: one --label per --calm");
    const auto suite_ = experiment::load_suite(suite);
    std::vector<std::string> names = suite_.names();
    if (!games.empty()) {
      const auto wanted = game_set(games);
      names.assign(wanted.begin(), wanted.end());
    }
    std::vector<std::vector<eval::Curves>> curves(calms.size());
    for (std::size_t m = 0; m < calms.size(); ++m) {
      const auto model = load_calm(calms[m]);
      for (const auto& name : names) {
        const auto spec = game::load_game_spec_file(suite_.find(name).file);
        curves[m].push_back(eval::evaluate(*model.for_game(spec), game::walkthrough_trajectory(spec), k_max, name));
      }
    }
    std::string body;
    std::string summary;
    if (format == "csv") {
      const auto echo = experiment::csv_echo("eval-walkthrough", {{"k_max", std::to_string(k_max)},
                                                                  {"models", text::join(calms, ";")}});
      body = echo + eval::curves_csv(curves, labels);
      summary = echo + eval::summary_csv(curves, labels);
    } else {
      for (std::size_t m = 0; m < curves.size(); ++m)
        for (const auto& c : curves[m])
          for (int k = 1; k <= c.k_max; ++k) {
            nlohmann::ordered_json j{{"version", CALM_VERSION}, {"model", labels[m]}, {"game", c.game}, {"k", k},
                                     {"prec_a", c.prec_a[k - 1]}, {"rec_a", c.rec_a[k - 1]},
                                     {"rec_g", c.rec_g[k - 1]}};
            body += j.dump() + "\n";
          }
      for (std::size_t m = 0; m < curves.size(); ++m) {
        const auto agg = eval::aggregate(curves[m]);
        for (int k = 1; k <= agg.k_max; ++k) {
          nlohmann::ordered_json j{{"version", CALM_VERSION}, {"model", labels[m]}, {"k", k},
                                   {"rec_g_mean", agg.rec_g_mean[k - 1]}, {"rec_g_std", agg.rec_g_std[k - 1]},
                                   {"rec_a_mean", agg.rec_a_mean[k - 1]}, {"prec_a_mean", agg.prec_a_mean[k - 1]}};
          summary += j.dump() + "\n";
        }
      }
    }
    if (out.empty()) {
      std::cout << body;
    } else {
      write_text(fs::path(out) / ("curves." + format), body);
      write_text(fs::path(out) / ("summary." + format), summary);
      if (curves.size() == 2)
        write_text(fs::path(out) / "deltas.csv", eval::compare_report(curves, labels).curve_deltas);
    }
    for (std::size_t m = 0; m < curves.size(); ++m) {
      const auto agg = eval::aggregate(curves[m]);
      std::fprintf(stderr, "%s: rec_g(%d) %.4f  rec_a(%d) %.4f  prec_a(%d) %.4f\n", labels[m].c_str(), k_max,
                   agg.rec_g_mean.back(), k_max, agg.rec_a_mean.back(), k_max, agg.prec_a_mean.back());
    }
    return 0;
  }
};

struct Play {
  std::string agent;
  std::string game;
  std::string suite = "games/suite.yaml";
  std::string calm = "admissible";
  std::string filter = "none";
  int k = 30;
  int max_steps = 100;
  double temperature = 0.0;
  std::uint64_t seed = 0;

  int run() const {
    const auto g = resolve_game(game, suite);
    std::unique_ptr<drrn::CandidateSource> source;
    if (calm == "admissible") {
      source = std::make_unique<drrn::AdmissibleCandidates>();
    } else {
      source = std::make_unique<drrn::CalmCandidates>(load_calm(calm).for_game(g.spec));
    }
    drrn::QNetwork net;
    std::ifstream in(agent);
    if (!in) throw ConfigError("cannot open agent checkpoint " + agent);
    net.load(in);
    Rng rng(seed);
    std::cout << drrn::play(net, g.spec, *source, k, drrn::parse_filter_mode(filter), max_steps, temperature, rng);
    return 0;
  }
};

struct Generate {
  std::string calm;
  std::string game;
  std::string suite = "games/suite.yaml";
  std::vector<std::string> actions;
  int k = 30;

  int run() const {
    const auto g = resolve_game(game, suite);
    const auto model = load_calm(calm).for_game(g.spec);
    auto [state, obs] = game::reset(g.spec);
    Context ctx{std::string(kPadObservation), std::string(kPadAction), obs};
    for (const auto& a : actions) {
      auto [next, r] = game::step(g.spec, state, a);
      ctx = Context{ctx.observation, a, r.observation};
      state = std::move(next);
    }
    std::cout << ctx.observation << "\n\n";
    int i = 0;
    for (const auto& a : model->generate(ctx, k)) std::printf("%2d. %s\n", ++i, a.c_str());
    return 0;
  }
};

struct RunExperiment {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string format;
  std::vector<std::uint64_t> seeds;
  bool deterministic = false;
  bool threaded = false;

  int run() const {
    experiment::Preset preset = config.empty() ? experiment::Preset{} : experiment::load_preset(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      experiment::apply_override(preset.base, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!out.empty()) preset.base.out = out;
    if (!format.empty()) experiment::apply_override(preset.base, "format", format);
    if (!seeds.empty()) preset.base.seeds = seeds;
    if (deterministic) preset.base.agent.deterministic = true;
    if (threaded) preset.base.agent.deterministic = false;
    const auto results = experiment::run_preset(preset);
    bool complete = true;
    for (const auto& r : results) {
      std::printf("%-20s avg. norm %.4f (max seen %.4f)\n", r.name.c_str(), r.avg_norm, r.avg_norm_max_seen);
      complete = complete && r.complete();
    }
    if (!complete) {
      std::fprintf(stderr, "some cells failed; see the manifest\n");
      return kRuntimeError;
    }
    return 0;
  }
};

void add_agent_options(CLI::App* app, drrn::AgentConfig& a) {
  app->add_option("--k", a.k, "candidate actions per step")->capture_default_str();
  app->add_option("--steps", a.steps, "total environment steps")->capture_default_str();
  app->add_option("--actors", a.actors, "parallel game instances")->capture_default_str();
  app->add_option("--gamma", a.gamma, "discount")->capture_default_str();
  app->add_option("--temperature", a.temperature, "softmax exploration temperature")->capture_default_str();
  app->add_option("--lr", a.lr, "learning rate")->capture_default_str();
  app->add_option("--batch-size", a.batch_size)->capture_default_str();
  app->add_option("--warmup", a.warmup, "steps before the first update")->capture_default_str();
  app->add_option("--update-every", a.update_every, "env steps per update (0: one per round)")->capture_default_str();
  app->add_option("--max-episode-steps", a.max_episode_steps)->capture_default_str();
  app->add_option("--best-ratio", a.best_ratio, "share of each batch from the best-score buffer")->capture_default_str();
  app->add_flag("--target-network", a.target_network, "bootstrap from a periodically synced copy");
  app->add_option("--seed", a.seed)->capture_default_str();
  app->add_flag("--deterministic", a.deterministic, "single-threaded interleaved actors (default)");
  app->add_flag_callback("--threaded", [&a] { a.deterministic = false; }, "actors on their own threads");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calm: language-model action generation for text games"};
  app.set_version_flag("--version", std::string(CALM_VERSION));
  app.require_subcommand(1);

  GenTranscripts gen;
  auto* c_gen = app.add_subcommand("gen-transcripts", "write synthetic player logs for the suite");
  c_gen->add_option("--suite", gen.suite)->capture_default_str();
  c_gen->add_option("--out", gen.out)->capture_default_str();
  c_gen->add_option("--per-game", gen.per_game)->capture_default_str();
  c_gen->add_option("--seed", gen.seed)->capture_default_str();

  BuildCorpus bc;
  auto* c_bc = app.add_subcommand("build-corpus", "clean transcripts into (context, action) examples");
  c_bc->add_option("--transcripts", bc.transcripts)->capture_default_str();
  c_bc->add_option("--out", bc.out)->capture_default_str();
  c_bc->add_option("--exclude-games", bc.exclude, "comma-separated game ids");
  c_bc->add_option("--train-frac", bc.train_frac)->capture_default_str();
  c_bc->add_option("--max-obs-tokens", bc.max_obs_tokens)->capture_default_str();
  c_bc->add_option("--max-action-tokens", bc.max_action_tokens)->capture_default_str();

  TrainNgram tn;
  auto* c_tn = app.add_subcommand("train-ngram", "fit an n-gram CALM");
  c_tn->add_option("--transcripts", tn.transcripts)->capture_default_str();
  c_tn->add_option("--exclude-games", tn.exclude);
  c_tn->add_option("--data-fraction", tn.data_fraction)->capture_default_str();
  c_tn->add_option("--seed", tn.seed)->capture_default_str();
  c_tn->add_flag("--interpolate", tn.options.interpolate, "linear interpolation of orders 1..max");
  c_tn->add_option("--max-order", tn.options.max_order)->capture_default_str();
  c_tn->add_option("--out", tn.out)->capture_default_str();

  TrainLm tl;
  auto* c_tl = app.add_subcommand("train-lm", "train the neural CALM");
  c_tl->add_option("--transcripts", tl.transcripts)->capture_default_str();
  c_tl->add_option("--suite", tl.suite, "games whose prose is used for pretraining")->capture_default_str();
  c_tl->add_option("--exclude-games", tl.exclude);
  c_tl->add_option("--data-fraction", tl.data_fraction)->capture_default_str();
  c_tl->add_option("--seed", tl.seed)->capture_default_str();
  c_tl->add_flag("--no-pretrain", tl.no_pretrain);
  c_tl->add_option("--epochs", tl.options.train.epochs)->capture_default_str();
  c_tl->add_option("--pretrain-epochs", tl.options.pretrain_epochs)->capture_default_str();
  c_tl->add_option("--batch-size", tl.options.train.batch_size)->capture_default_str();
  c_tl->add_option("--lr", tl.options.train.lr)->capture_default_str();
  c_tl->add_option("--embedding", tl.options.model.embedding)->capture_default_str();
  c_tl->add_option("--hidden", tl.options.model.hidden)->capture_default_str();
  c_tl->add_option("--beam-width", tl.options.model.beam_width)->capture_default_str();
  c_tl->add_option("--out", tl.out)->capture_default_str();

  TrainRl tr;
  auto* c_tr = app.add_subcommand("train-rl", "train a DRRN agent on one game");
  c_tr->add_option("--game", tr.game, "suite game name or .game file")->required();
  c_tr->add_option("--suite", tr.suite)->capture_default_str();
  c_tr->add_option("--calm", tr.calm, "CALM checkpoint, or 'admissible' for the engine oracle")->capture_default_str();
  c_tr->add_flag("--random-agent", tr.random_agent, "sample uniformly from the candidates; no learning");
  c_tr->add_option("--filter", tr.filter, "none | oracle | textual")->capture_default_str();
  c_tr->add_option("--out", tr.out, "report file (stdout if omitted)");
  c_tr->add_option("--save-agent", tr.save_agent, "Q-network checkpoint");
  c_tr->add_option("--format", tr.format, "jsonl (structured report) | csv (episodes)")->capture_default_str();
  add_agent_options(c_tr, tr.agent);

  EvalWalkthrough ev;
  auto* c_ev = app.add_subcommand("eval-walkthrough", "precision/recall of CALM candidates along walkthroughs");
  c_ev->add_option("--calm", ev.calms, "one or two CALM checkpoints")->required();
  c_ev->add_option("--label", ev.labels);
  c_ev->add_option("--suite", ev.suite)->capture_default_str();
  c_ev->add_option("--games", ev.games, "comma-separated subset of the suite");
  c_ev->add_option("--k-max", ev.k_max)->capture_default_str();
  c_ev->add_option("--out", ev.out, "output directory (stdout if omitted)");
  c_ev->add_option("--format", ev.format, "csv | jsonl")->capture_default_str();

  Play pl;
  auto* c_pl = app.add_subcommand("play", "roll out a trained agent and print the transcript");
  c_pl->add_option("--agent", pl.agent, "Q-network checkpoint from train-rl --save-agent")->required();
  c_pl->add_option("--game", pl.game)->required();
  c_pl->add_option("--suite", pl.suite)->capture_default_str();
  c_pl->add_option("--calm", pl.calm)->capture_default_str();
  c_pl->add_option("--filter", pl.filter)->capture_default_str();
  c_pl->add_option("--k", pl.k)->capture_default_str();
  c_pl->add_option("--max-steps", pl.max_steps)->capture_default_str();
  c_pl->add_option("--temperature", pl.temperature, "0 = greedy")->capture_default_str();
  c_pl->add_option("--seed", pl.seed)->capture_default_str();

  Generate ge;
  auto* c_ge = app.add_subcommand("generate", "print a CALM's top-k actions for a game state");
  c_ge->add_option("--calm", ge.calm)->required();
  c_ge->add_option("--game", ge.game)->required();
  c_ge->add_option("--suite", ge.suite)->capture_default_str();
  c_ge->add_option("--after", ge.actions, "actions to play first");
  c_ge->add_option("--k", ge.k)->capture_default_str();

  RunExperiment rx;
  auto* c_rx = app.add_subcommand("run-experiment", "run a YAML experiment or ablation preset");
  c_rx->add_option("--config", rx.config, "YAML file");
  c_rx->add_option("--set", rx.sets, "key=value override, e.g. agent.k=10 (repeatable)");
  c_rx->add_option("--out", rx.out);
  c_rx->add_option("--format", rx.format, "csv | jsonl");
  c_rx->add_option("--seed", rx.seeds, "replaces the seed list");
  c_rx->add_flag("--deterministic", rx.deterministic);
  c_rx->add_flag("--threaded", rx.threaded);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*c_gen) return gen.run();
    if (*c_bc) return bc.run();
    if (*c_tn) return tn.run();
    if (*c_tl) return tl.run();
    if (*c_tr) return tr.run();
    if (*c_ev) return ev.run();
    if (*c_pl) return pl.run();
    if (*c_ge) return ge.run();
    if (*c_rx) return rx.run();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kConfigError;
}
