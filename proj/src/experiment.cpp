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

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "calm/error.hpp"
#include "calm/text.hpp"
#include "json.hpp"

namespace calm::experiment {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Suite

const SuiteGame& Suite::find(const std::string& name) const {
  for (const auto& g : games)
    if (g.name == name) return g;
  throw ConfigError("game '" + name + "' is not in the suite");
}

std::vector<std::string> Suite::names() const {
  std::vector<std::string> out;
  for (const auto& g : games) out.push_back(g.name);
  return out;
}

std::vector<std::string> Suite::learnable() const {
  std::vector<std::string> out;
  for (const auto& g : games)
    if (g.learnable) out.push_back(g.name);
  return out;
}

Suite load_suite(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read suite file " + path.string());
  } catch (const YAML::Exception& e) {
    throw ParseError(path.string(), e.mark.line + 1, e.mark.column + 1, e.msg);
  }
  if (!root["games"] || !root["games"].IsSequence())
    throw ConfigError(path.string() + ": expected a 'games' list");
  Suite suite;
  for (const auto& node : root["games"]) {
    SuiteGame g;
    if (!node["name"] || !node["file"]) throw ConfigError(path.string() + ": each game needs name and file");
    g.name = node["name"].as<std::string>();
    g.file = path.parent_path() / node["file"].as<std::string>();
    g.learnable = node["learnable"] && node["learnable"].as<bool>();
    if (!fs::exists(g.file)) throw ConfigError("suite game file " + g.file.string() + " does not exist");
    suite.games.push_back(std::move(g));
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Corpora

std::map<std::string, std::string> synthesize_logs(const Suite& suite, int per_game, std::uint64_t seed,
                                                   const corpus::PlayerOptions& players) {
  std::map<std::string, std::string> out;
  Rng root(seed);
  for (std::size_t i = 0; i < suite.games.size(); ++i) {
    const auto spec = game::load_game_spec_file(suite.games[i].file);
    Rng rng = root.fork(i);
    for (int j = 0; j < per_game; ++j) {
      char name[256];
      std::snprintf(name, sizeof name, "%s-%02d.log", suite.games[i].name.c_str(), j);
      out[name] = corpus::synthesize_transcript(spec, players, rng);
    }
  }
  return out;
}

std::vector<corpus::Transcript> select_transcripts(const std::vector<corpus::Transcript>& all,
                                                   const CorpusSelection& selection) {
  std::vector<corpus::Transcript> kept;
  for (const auto& t : all)
    if (!selection.exclude_games.count(t.game)) kept.push_back(t);
  if (selection.data_fraction >= 1.0) return kept;
  Rng rng(selection.seed);
  return corpus::sample_transcripts(kept, selection.data_fraction, rng);
}

std::vector<corpus::Example> examples_of(const std::vector<corpus::Transcript>& transcripts,
                                         const corpus::Limits& limits, corpus::BuildStats* stats) {
  std::vector<corpus::Example> out;
  for (const auto& t : transcripts) {
    corpus::BuildStats s;
    auto ex = corpus::build_examples(t, limits, &s);
    if (stats) *stats += s;
    out.insert(out.end(), ex.begin(), ex.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CALM training

NgramTraining train_ngram(const std::vector<corpus::Transcript>& transcripts, const NgramOptions& options) {
  std::vector<std::string> actions;
  for (const auto& e : examples_of(transcripts)) actions.push_back(e.action);
  if (actions.empty()) throw InvalidArgument("train_ngram: no actions in the selected transcripts");
  const auto all = ngram::tokenize_all(actions);
  const auto cut = static_cast<std::size_t>(std::floor(options.train_frac * static_cast<double>(all.size())));
  std::vector<ngram::Tokens> train(all.begin(), all.begin() + static_cast<long>(std::max<std::size_t>(cut, 1)));
  std::vector<ngram::Tokens> val(all.begin() + static_cast<long>(train.size()), all.end());
  if (val.empty()) val = train;
  NgramTraining out;
  std::ostringstream summary;
  if (options.interpolate) {
    ngram::InterpolationOptions io;
    io.max_order = options.max_order;
    auto model = ngram::fit_interpolated(train, val, io);
    summary << "interpolated weights";
    for (double w : model.weights()) summary << ' ' << w;
    summary << " val_perplexity " << ngram::perplexity(model, val);
    out.lexicon = ngram::harvest_lexicon(all);
    out.scorer = std::make_shared<ngram::InterpolatedModel>(std::move(model));
  } else {
    std::vector<int> orders;
    for (int n = 1; n <= options.max_order; ++n) orders.push_back(n);
    const auto best = ngram::tune(train, val, orders, ngram::default_alpha_grid());
    summary << "n " << best.n << " alpha " << best.alpha << " val_perplexity " << best.perplexity;
    auto model = ngram::NgramModel::fit(all, best.n, best.alpha);
    out.lexicon = model.lexicon();
    out.scorer = std::make_shared<ngram::NgramModel>(std::move(model));
  }
  out.summary = summary.str();
  return out;
}

std::shared_ptr<const ActionModel> ngram_calm(const NgramTraining& trained, const game::GameSpec& spec) {
  return std::make_shared<ngram::NgramCalm>(trained.scorer, trained.lexicon, spec.object_names());
}

std::vector<std::string> game_prose(const std::vector<game::GameSpec>& specs) {
  std::vector<std::string> out;
  for (const auto& s : specs) {
    if (!s.intro.empty()) out.push_back(s.intro);
    for (const auto& r : s.rooms) out.push_back(r.description);
    for (const auto& o : s.objects) out.push_back(o.description);
  }
  return out;
}

NeuralTraining train_neural(const std::vector<corpus::Transcript>& transcripts,
                            const std::vector<std::string>& pretraining_text, const NeuralOptions& options) {
  corpus::Limits limits;
  limits.max_context_tokens = static_cast<std::size_t>(options.model.max_context);
  limits.max_action_tokens = static_cast<std::size_t>(options.model.max_action_tokens);
  const auto examples = examples_of(transcripts, limits);
  if (examples.empty()) throw InvalidArgument("train_neural: no examples in the selected transcripts");
  const auto parts = corpus::split(examples, options.train_frac);
  std::vector<corpus::Example> pre;
  if (options.pretrain)
    pre = neural::pretraining_examples(pretraining_text, static_cast<std::size_t>(options.model.max_action_tokens));
  std::vector<corpus::Example> everything = pre;
  everything.insert(everything.end(), parts.train.begin(), parts.train.end());
  NeuralTraining out;
  out.model = std::make_shared<neural::NeuralCalm>(neural::build_vocabulary(everything, options.max_vocab),
                                                   options.model, options.train.seed);
  if (options.pretrain && !pre.empty() && options.pretrain_epochs > 0) {
    auto o = options.train;
    o.epochs = options.pretrain_epochs;
    neural::train(*out.model, pre, {}, o);
  }
  out.history = neural::train(*out.model, parts.train, parts.validation, options.train);
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

CalmVariant parse_calm_variant(const std::string& s) {
  if (s == "ngram") return CalmVariant::kNgram;
  if (s == "neural") return CalmVariant::kNeural;
  if (s == "neural-no-pretrain") return CalmVariant::kNeuralNoPretrain;
  if (s == "random-agent") return CalmVariant::kRandomAgent;
  if (s == "admissible") return CalmVariant::kAdmissible;
  throw ConfigError("unknown calm variant '" + s +
                    "' (expected ngram, neural, neural-no-pretrain, random-agent or admissible)");
}

std::string to_string(CalmVariant v) {
  switch (v) {
    case CalmVariant::kNgram: return "ngram";
    case CalmVariant::kNeural: return "neural";
    case CalmVariant::kNeuralNoPretrain: return "neural-no-pretrain";
    case CalmVariant::kRandomAgent: return "random-agent";
    case CalmVariant::kAdmissible: return "admissible";
  }
  return "ngram";
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment: seeds must be non-empty");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw ConfigError("experiment: data_fraction must be in (0, 1]");
  if (format != "csv" && format != "jsonl") throw ConfigError("experiment: format must be csv or jsonl");
  if (transcripts_per_game < 1) throw ConfigError("experiment: transcripts_per_game must be >= 1");
  if (!transcripts.empty() && !fs::is_directory(transcripts))
    throw ConfigError("experiment: transcript directory " + transcripts.string() + " does not exist");
  if (!(ngram.train_frac > 0.0 && ngram.train_frac <= 1.0)) throw ConfigError("experiment: ngram.train_frac must be in (0, 1]");
  if (ngram.max_order < 1) throw ConfigError("experiment: ngram.max_order must be >= 1");
  agent.validate();
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Shortest text that reads back exactly.
  for (int p = 1; p <= 17; ++p) {
    char s[64];
    std::snprintf(s, sizeof s, "%.*g", p, v);
    if (std::strtod(s, nullptr) == v) return s;
  }
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto s = text::to_lower(v);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

// "a, b" or "[a, b]".
std::vector<std::string> to_list(std::string v) {
  const auto t0 = std::string(text::trim(v));
  v = t0.size() >= 2 && t0.front() == '[' && t0.back() == ']' ? t0.substr(1, t0.size() - 2) : t0;
  std::vector<std::string> out;
  for (const auto& part : text::split(v, ',')) {
    const auto t = std::string(text::trim(part));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CALM_DOUBLE(member)                                                                     \
  Field {                                                                                       \
    [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.member); }                          \
  }
#define CALM_INT(member, type)                                                                  \
  Field {                                                                                       \
    [](ExperimentConfig& c, const std::string& k, const std::string& v) {                       \
      c.member = static_cast<type>(to_long(k, v));                                              \
    },                                                                                          \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                      \
  }
#define CALM_BOOL(member)                                                                       \
  Field {                                                                                       \
    [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }      \
  }
#define CALM_PATH(member)                                                                       \
  Field {                                                                                       \
    [](ExperimentConfig& c, const std::string&, const std::string& v) { c.member = v; },        \
        [](const ExperimentConfig& c) { return c.member.string(); }                             \
  }

// Ordered so that the YAML echo reads top-down.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> kFields = {
      {"name", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.name = v; },
                [](const ExperimentConfig& c) { return c.name; }}},
      {"suite", CALM_PATH(suite)},
      {"transcripts", CALM_PATH(transcripts)},
      {"transcripts_per_game", CALM_INT(transcripts_per_game, int)},
      {"corpus_seed", CALM_INT(corpus_seed, std::uint64_t)},
      {"games", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.games = to_list(v); },
                 [](const ExperimentConfig& c) { return text::join(c.games, ", "); }}},
      {"calm", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.calm = parse_calm_variant(v); },
                [](const ExperimentConfig& c) { return to_string(c.calm); }}},
      {"data_fraction", CALM_DOUBLE(data_fraction)},
      {"include_eval_game", CALM_BOOL(include_eval_game)},
      {"seeds", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                   c.seeds.clear();
                   for (const auto& s : to_list(v)) c.seeds.push_back(static_cast<std::uint64_t>(to_long(k, s)));
                 },
                 [](const ExperimentConfig& c) {
                   std::vector<std::string> s;
                   for (auto x : c.seeds) s.push_back(std::to_string(x));
                   return text::join(s, ", ");
                 }}},
      {"out", CALM_PATH(out)},
      {"format", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.format = v; },
                  [](const ExperimentConfig& c) { return c.format; }}},
      {"agent.gamma", CALM_DOUBLE(agent.gamma)},
      {"agent.k", CALM_INT(agent.k, int)},
      {"agent.actors", CALM_INT(agent.actors, int)},
      {"agent.steps", CALM_INT(agent.steps, long)},
      {"agent.temperature", CALM_DOUBLE(agent.temperature)},
      {"agent.filter",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.agent.filter = drrn::parse_filter_mode(v); },
        [](const ExperimentConfig& c) { return drrn::to_string(c.agent.filter); }}},
      {"agent.batch_size", CALM_INT(agent.batch_size, int)},
      {"agent.buffer_capacity", CALM_INT(agent.buffer_capacity, std::size_t)},
      {"agent.best_ratio", CALM_DOUBLE(agent.best_ratio)},
      {"agent.warmup", CALM_INT(agent.warmup, long)},
      {"agent.update_every", CALM_INT(agent.update_every, int)},
      {"agent.max_episode_steps", CALM_INT(agent.max_episode_steps, int)},
      {"agent.target_network", CALM_BOOL(agent.target_network)},
      {"agent.target_sync", CALM_INT(agent.target_sync, long)},
      {"agent.deterministic", CALM_BOOL(agent.deterministic)},
      {"agent.lr", CALM_DOUBLE(agent.lr)},
      {"agent.max_grad_norm", CALM_DOUBLE(agent.max_grad_norm)},
      {"agent.q.buckets", CALM_INT(agent.q.buckets, int)},
      {"agent.q.embedding", CALM_INT(agent.q.embedding, int)},
      {"agent.q.hidden", CALM_INT(agent.q.hidden, int)},
      {"agent.q.decoder_hidden", CALM_INT(agent.q.decoder_hidden, int)},
      {"ngram.train_frac", CALM_DOUBLE(ngram.train_frac)},
      {"ngram.interpolate", CALM_BOOL(ngram.interpolate)},
      {"ngram.max_order", CALM_INT(ngram.max_order, int)},
      {"neural.embedding", CALM_INT(neural.model.embedding, int)},
      {"neural.hidden", CALM_INT(neural.model.hidden, int)},
      {"neural.max_context", CALM_INT(neural.model.max_context, int)},
      {"neural.max_action_tokens", CALM_INT(neural.model.max_action_tokens, int)},
      {"neural.beam_width", CALM_INT(neural.model.beam_width, int)},
      {"neural.epochs", CALM_INT(neural.train.epochs, int)},
      {"neural.batch_size", CALM_INT(neural.train.batch_size, int)},
      {"neural.lr", CALM_DOUBLE(neural.train.lr)},
      {"neural.warmup_steps", CALM_INT(neural.train.warmup_steps, long)},
      {"neural.max_grad_norm", CALM_DOUBLE(neural.train.max_grad_norm)},
      {"neural.seed", CALM_INT(neural.train.seed, std::uint64_t)},
      {"neural.pretrain", CALM_BOOL(neural.pretrain)},
      {"neural.pretrain_epochs", CALM_INT(neural.pretrain_epochs, int)},
      {"neural.train_frac", CALM_DOUBLE(neural.train_frac)},
      {"neural.max_vocab", CALM_INT(neural.max_vocab, std::size_t)},
  };
  return kFields;
}

#undef CALM_DOUBLE
#undef CALM_INT
#undef CALM_BOOL
#undef CALM_PATH

// Flattens nested maps into dotted keys; sequences of scalars become
// comma-separated lists.
void flatten(const YAML::Node& node, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out,
             const std::string& source) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out, source);
    }
  } else if (node.IsSequence()) {
    std::vector<std::string> items;
    for (const auto& item : node) {
      if (!item.IsScalar()) throw ConfigError(source + ": '" + prefix + "' must be a list of scalars");
      items.push_back(item.as<std::string>());
    }
    out.emplace_back(prefix, text::join(items, ","));
  } else if (node.IsScalar()) {
    out.emplace_back(prefix, node.as<std::string>());
  } else if (node.IsNull()) {
    out.emplace_back(prefix, "");
  }
}

}  // namespace

void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::string to_yaml(const ExperimentConfig& config) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  std::string section;
  std::string sub;
  auto close_to = [&](const std::string& sec, const std::string& s) {
    if (!sub.empty() && (s != sub || sec != section)) {
      out << YAML::EndMap;
      sub.clear();
    }
    if (!section.empty() && sec != section) {
      out << YAML::EndMap;
      section.clear();
    }
  };
  for (const auto& [name, field] : fields()) {
    const auto parts = text::split(name, '.');
    const std::string sec = parts.size() > 1 ? parts[0] : "";
    const std::string s = parts.size() > 2 ? parts[1] : "";
    close_to(sec, s);
    if (!sec.empty() && section.empty()) {
      out << YAML::Key << sec << YAML::Value << YAML::BeginMap;
      section = sec;
    }
    if (!s.empty() && sub.empty()) {
      out << YAML::Key << s << YAML::Value << YAML::BeginMap;
      sub = s;
    }
    out << YAML::Key << parts.back() << YAML::Value << field.get(config);
  }
  close_to("", "");
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

Preset parse_preset(const std::string& yaml, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw ParseError(source, e.mark.line + 1, e.mark.column + 1, e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source + ": expected a mapping at top level");
  Preset preset;
  std::vector<std::pair<std::string, std::string>> flat;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key == "variants") continue;
    flatten(kv.second, key, flat, source);
  }
  for (const auto& [k, v] : flat) apply_override(preset.base, k, v);
  if (const auto vs = root["variants"]) {
    if (!vs.IsSequence()) throw ConfigError(source + ": 'variants' must be a list");
    std::set<std::string> seen;
    for (const auto& node : vs) {
      if (!node.IsMap() || !node["name"]) throw ConfigError(source + ": each variant needs a name");
      Variant v;
      v.name = node["name"].as<std::string>();
      if (!seen.insert(v.name).second) throw ConfigError(source + ": duplicate variant '" + v.name + "'");
      std::vector<std::pair<std::string, std::string>> items;
      for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (key != "name") flatten(kv.second, key, items, source);
      }
      ExperimentConfig probe = preset.base;
      for (const auto& [k, val] : items) {
        apply_override(probe, k, val);  // reject bad keys early
        v.overrides[k] = val;
      }
      preset.variants.push_back(std::move(v));
    }
  }
  return preset;
}

Preset load_preset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_preset(buf.str(), path.string());
}

// ---------------------------------------------------------------------------
// Running

bool ExperimentResult::complete() const {
  for (const auto& c : cells)
    if (!c.ok) return false;
  return true;
}

std::string csv_echo(const std::string& what, const std::map<std::string, std::string>& fields_) {
  std::string out = "# calm " + std::string(CALM_VERSION) + " " + what;
  for (const auto& [k, v] : fields_) out += " " + k + "=" + v;
  return out + "\n";
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

std::map<std::string, std::string> echo_fields(const ExperimentConfig& c) {
  std::vector<std::string> seeds;
  for (auto s : c.seeds) seeds.push_back(std::to_string(s));
  return {{"name", c.name},
          {"calm", to_string(c.calm)},
          {"k", std::to_string(c.agent.k)},
          {"steps", std::to_string(c.agent.steps)},
          {"data_fraction", fmt_double(c.data_fraction)},
          {"include_eval_game", c.include_eval_game ? "true" : "false"},
          {"filter", drrn::to_string(c.agent.filter)},
          {"seeds", text::join(seeds, ";")}};
}

std::vector<corpus::Transcript> all_transcripts(const ExperimentConfig& config, const Suite& suite) {
  if (!config.transcripts.empty()) return corpus::load_transcripts(config.transcripts);
  std::vector<corpus::Transcript> out;
  for (const auto& [name, raw] : synthesize_logs(suite, config.transcripts_per_game, config.corpus_seed)) {
    corpus::CleanOptions o;
    o.id = fs::path(name).stem().string();
    for (auto& t : corpus::clean_log(raw, o)) out.push_back(std::move(t));
  }
  return out;
}

std::string manifest(const ExperimentResult& r, const ExperimentConfig& c) {
  std::ostringstream out;
  if (c.format == "csv") {
    out << csv_echo("manifest", echo_fields(c)) << "game,seed,status,final_avg_100,max_seen,error\n";
    for (const auto& cell : r.cells) {
      std::string err = cell.error;
      for (char& ch : err)
        if (ch == ',' || ch == '\n') ch = ';';
      out << cell.game << ',' << cell.seed << ',' << (cell.ok ? "ok" : "failed") << ','
          << fmt_double(cell.report.final_avg_100) << ',' << fmt_double(cell.report.max_seen) << ',' << err << '\n';
    }
  } else {
    for (const auto& cell : r.cells) {
      nlohmann::ordered_json j;
      j["version"] = CALM_VERSION;
      j["experiment"] = c.name;
      j["game"] = cell.game;
      j["seed"] = cell.seed;
      j["status"] = cell.ok ? "ok" : "failed";
      j["final_avg_100"] = cell.report.final_avg_100;
      j["max_seen"] = cell.report.max_seen;
      j["error"] = cell.error;
      out << j.dump() << '\n';
    }
  }
  return out.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Suite suite = load_suite(config.suite);
  const auto games = config.games.empty() ? suite.names() : config.games;
  for (const auto& g : games) suite.find(g);

  std::vector<game::GameSpec> specs;
  for (const auto& g : suite.games) specs.push_back(game::load_game_spec_file(g.file));
  const bool needs_corpus = config.calm != CalmVariant::kAdmissible;
  const auto transcripts = needs_corpus ? all_transcripts(config, suite) : std::vector<corpus::Transcript>{};
  const auto prose = game_prose(specs);

  ExperimentResult result;
  result.name = config.name;
  for (const auto& name : games) {
    const auto spec = game::load_game_spec_file(suite.find(name).file);
    std::shared_ptr<const ActionModel> calm;
    std::unique_ptr<drrn::CandidateSource> source;
    std::string setup_error;
    try {
      CorpusSelection sel;
      if (!config.include_eval_game) sel.exclude_games.insert(name);
      sel.data_fraction = config.data_fraction;
      sel.seed = config.corpus_seed;
      switch (config.calm) {
        case CalmVariant::kAdmissible:
          source = std::make_unique<drrn::AdmissibleCandidates>();
          break;
        case CalmVariant::kNgram:
        case CalmVariant::kRandomAgent:
          calm = ngram_calm(train_ngram(select_transcripts(transcripts, sel), config.ngram), spec);
          break;
        case CalmVariant::kNeural:
        case CalmVariant::kNeuralNoPretrain: {
          auto opts = config.neural;
          opts.pretrain = opts.pretrain && config.calm == CalmVariant::kNeural;
          calm = train_neural(select_transcripts(transcripts, sel), prose, opts).model;
          break;
        }
      }
      if (!source) source = std::make_unique<drrn::CalmCandidates>(calm);
    } catch (const Error& e) {
      setup_error = e.what();
    }
    GameRow row;
    row.game = name;
    row.max_score = spec.max_score;
    int ok = 0;
    for (const auto seed : config.seeds) {
      Cell cell;
      cell.game = name;
      cell.seed = seed;
      cell.report.game = name;
      cell.report.max_score = spec.max_score;
      if (!setup_error.empty()) {
        cell.error = setup_error;
      } else {
        try {
          auto agent = config.agent;
          agent.seed = seed;
          if (config.calm == CalmVariant::kRandomAgent) agent.policy = drrn::Policy::kRandom;
          cell.report = drrn::train(agent, spec, *source, name).report;
          cell.ok = true;
        } catch (const Error& e) {
          cell.error = e.what();
        }
      }
      if (cell.ok) {
        ++ok;
        row.mean_final += cell.report.final_avg_100;
        row.mean_max_seen += cell.report.max_seen;
        if (!config.out.empty()) {
          const auto base = config.out / "reports" / (name + "-seed" + std::to_string(seed));
          write_file(base.string() + ".json", cell.report.to_json());
          if (config.format == "csv") {
            write_file(base.string() + ".episodes.csv", cell.report.episodes_csv());
          } else {
            std::ostringstream eps;
            for (const auto& e : cell.report.episodes) {
              nlohmann::ordered_json j{{"game", name}, {"seed", seed}, {"episode", e.episode},
                                       {"actor", e.actor}, {"steps", e.steps}, {"score", e.score}};
              eps << j.dump() << '\n';
            }
            write_file(base.string() + ".episodes.jsonl", eps.str());
          }
        }
      }
      result.cells.push_back(std::move(cell));
    }
    if (ok > 0) {
      row.mean_final /= ok;
      row.mean_max_seen /= ok;
      result.rows.push_back(row);
    }
  }
  for (const auto& row : result.rows) {
    result.avg_norm += eval::normalized_score(row.mean_final, row.max_score);
    result.avg_norm_max_seen += eval::normalized_score(row.mean_max_seen, row.max_score);
  }
  if (!result.rows.empty()) {
    result.avg_norm /= static_cast<double>(result.rows.size());
    result.avg_norm_max_seen /= static_cast<double>(result.rows.size());
  }
  if (!config.out.empty()) {
    write_file(config.out / "config.yaml", "# calm " + std::string(CALM_VERSION) + "\n" + to_yaml(config));
    write_file(config.out / ("manifest." + config.format), manifest(result, config));
    write_file(config.out / ("summary." + config.format), summary_csv(result, config));
  }
  return result;
}

std::string summary_csv(const ExperimentResult& r, const ExperimentConfig& c) {
  std::ostringstream out;
  if (c.format == "jsonl") {
    for (const auto& row : r.rows) {
      nlohmann::ordered_json j{{"version", CALM_VERSION},
                               {"experiment", r.name},
                               {"game", row.game},
                               {"max_score", row.max_score},
                               {"score", row.mean_final},
                               {"norm", eval::normalized_score(row.mean_final, row.max_score)},
                               {"max_seen", row.mean_max_seen},
                               {"max_seen_norm", eval::normalized_score(row.mean_max_seen, row.max_score)}};
      out << j.dump() << '\n';
    }
    nlohmann::ordered_json j{{"version", CALM_VERSION}, {"experiment", r.name}, {"game", "avg. norm"},
                             {"norm", r.avg_norm}, {"max_seen_norm", r.avg_norm_max_seen}};
    out << j.dump() << '\n';
    return out.str();
  }
  char buf[512];
  out << csv_echo("summary", echo_fields(c)) << "game,max_score,score,norm,max_seen,max_seen_norm\n";
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%s,%g,%.6f,%.6f,%.6f,%.6f\n", row.game.c_str(), row.max_score, row.mean_final,
                  eval::normalized_score(row.mean_final, row.max_score), row.mean_max_seen,
                  eval::normalized_score(row.mean_max_seen, row.max_score));
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "avg. norm,,,%.6f,,%.6f\n", r.avg_norm, r.avg_norm_max_seen);
  out << buf;
  return out.str();
}

std::string ablation_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream out;
  out << csv_echo("ablation", {}) << "variant,avg_norm,max_seen_norm,games,failed_cells\n";
  char buf[512];
  for (const auto& r : results) {
    int failed = 0;
    for (const auto& c : r.cells) failed += !c.ok;
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%zu,%d\n", r.name.c_str(), r.avg_norm, r.avg_norm_max_seen,
                  r.rows.size(), failed);
    out << buf;
  }
  return out.str();
}

std::vector<ExperimentResult> run_preset(const Preset& preset) {
  std::vector<ExperimentResult> results;
  if (preset.variants.empty()) {
    results.push_back(run_experiment(preset.base));
    return results;
  }
  for (const auto& v : preset.variants) {
    ExperimentConfig c = preset.base;
    c.name = v.name;
    for (const auto& [k, val] : v.overrides) apply_override(c, k, val);
    if (!preset.base.out.empty() && !v.overrides.count("out")) c.out = preset.base.out / v.name;
    results.push_back(run_experiment(c));
  }
  if (!preset.base.out.empty()) write_file(preset.base.out / "ablation.csv", ablation_csv(results));
  return results;
}

}  // namespace calm::experiment
