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

#include "calm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "calm/error.hpp"
#include "calm/text.hpp"
#include "json.hpp"

namespace calm::corpus {
namespace {

constexpr std::string_view kGameMarker = "=== game:";

std::string normalize_observation(const std::vector<std::string>& lines) {
  std::vector<std::string> kept;
  for (const auto& l : lines) {
    auto end = l.find_last_not_of(" \t");
    kept.push_back(end == std::string::npos ? std::string() : l.substr(0, end + 1));
  }
  while (!kept.empty() && kept.back().empty()) kept.pop_back();
  std::size_t first = 0;
  while (first < kept.size() && kept[first].empty()) ++first;
  kept.erase(kept.begin(), kept.begin() + static_cast<long>(first));
  return text::join(kept, "\n");
}

struct Segment {
  std::string game;
  std::vector<std::pair<std::string, std::size_t>> lines;
};

}  // namespace

const std::map<std::string, std::string>& abbreviations() {
  static const std::map<std::string, std::string> kTable = {
      {"n", "north"},      {"s", "south"},      {"e", "east"},
      {"w", "west"},       {"ne", "northeast"}, {"nw", "northwest"},
      {"se", "southeast"}, {"sw", "southwest"}, {"u", "up"},
      {"d", "down"},       {"x", "examine"},    {"l", "look"},
      {"i", "inventory"},  {"g", "again"},      {"z", "wait"},
  };
  return kTable;
}

const std::set<std::string>& meta_actions() {
  static const std::set<std::string> kMeta = {
      "save",    "restore", "restart", "undo",    "script",     "unscript",
      "quit",    "q",       "menu",    "help",    "hint",       "hints",
      "about",   "credits", "verbose", "brief",   "superbrief", "notify",
      "version", "transcript"};
  return kMeta;
}

std::string clean_action(std::string_view raw) {
  auto words = text::split(text::normalize_action(raw), ' ');
  if (words.empty() || words.front().empty()) return {};
  if (auto it = abbreviations().find(words.front()); it != abbreviations().end())
    words.front() = it->second;
  return text::join(words, " ");
}

bool is_meta_action(std::string_view cleaned) {
  const auto words = text::split(cleaned, ' ');
  return !words.empty() && meta_actions().count(words.front()) > 0;
}

std::vector<Transcript> clean_log(std::string_view raw,
                                  const CleanOptions& options) {
  std::vector<Segment> segments;
  std::size_t line_no = 0;
  for (auto line : text::split(raw, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::starts_with(line, kGameMarker)) {
      const auto t = text::trim(line);
      if (t.size() < kGameMarker.size() + 3 || t.substr(t.size() - 3) != "===")
        throw ParseError(options.id, line_no, line.size(),
                         "unterminated game marker");
      const auto id = text::trim(t.substr(kGameMarker.size(),
                                          t.size() - kGameMarker.size() - 3));
      if (id.empty())
        throw ParseError(options.id, line_no, kGameMarker.size() + 1,
                         "game marker without a game id");
      segments.push_back({std::string(id), {}});
      continue;
    }
    if (text::starts_with(line, options.chat_prefix)) continue;
    if (segments.empty()) segments.push_back({options.default_game, {}});
    segments.back().lines.emplace_back(std::move(line), line_no);
  }

  std::vector<Transcript> out;
  for (const auto& seg : segments) {
    // obs_0, cmd_1, obs_1, ..., cmd_n, obs_n
    std::vector<std::string> observations;
    std::vector<std::string> commands;
    std::vector<std::string> buffer;
    for (const auto& [line, no] : seg.lines) {
      if (!text::starts_with(line, options.prompt)) {
        buffer.push_back(line);
        continue;
      }
      const auto obs = normalize_observation(buffer);
      buffer.clear();
      if (commands.empty() && obs.empty())
        throw ParseError(options.id, no, 1,
                         "command has no preceding observation to pair with");
      const auto cmd = text::trim(std::string_view(line).substr(options.prompt.size()));
      if (cmd.empty())
        throw ParseError(options.id, no, options.prompt.size() + 1,
                         "empty command after prompt");
      observations.push_back(obs);
      commands.emplace_back(cmd);
    }
    observations.push_back(normalize_observation(buffer));
    if (commands.empty()) continue;

    Transcript t;
    t.game = seg.game;
    std::string current = observations[0];
    for (std::size_t j = 0; j < commands.size(); ++j) {
      const auto action = clean_action(commands[j]);
      const auto& reply = observations[j + 1];
      const bool unrecognized = std::any_of(
          options.unrecognized_replies.begin(),
          options.unrecognized_replies.end(),
          [&](const std::string& p) { return text::starts_with(reply, p); });
      if (action.empty() || is_meta_action(action) || unrecognized) continue;
      t.turns.push_back({current, action});
      current = reply;
    }
    if (!t.turns.empty()) out.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].id = out.size() == 1 ? options.id
                                : options.id + "#" + std::to_string(i + 1);
  return out;
}

Transcript clean_transcript(std::string_view raw, const CleanOptions& options) {
  auto all = clean_log(raw, options);
  if (all.empty())
    throw InvalidArgument("log '" + options.id + "' has no playable turns");
  if (all.size() > 1)
    throw InvalidArgument("log '" + options.id + "' covers " +
                          std::to_string(all.size()) +
                          " games; use clean_log()");
  return std::move(all.front());
}

std::string render_raw(const Transcript& t, const CleanOptions& options) {
  std::string out = std::string(kGameMarker) + " " + t.game + " ===\n";
  for (const auto& turn : t.turns) {
    out += turn.observation;
    out += '\n';
    out += options.prompt + " " + turn.action + "\n";
  }
  return out;
}

std::size_t context_tokens(const Context& c) {
  return text::tokenize(c.prev_observation).size() +
         text::tokenize(c.prev_action).size() +
         text::tokenize(c.observation).size();
}

std::vector<Example> build_examples(const Transcript& t, const Limits& limits,
                                    BuildStats* stats) {
  std::vector<Example> out;
  BuildStats local;
  for (std::size_t j = 0; j < t.turns.size(); ++j) {
    Example e;
    if (j > 0) {
      e.context.prev_observation = t.turns[j - 1].observation;
      e.context.prev_action = t.turns[j - 1].action;
    }
    e.context.observation = t.turns[j].observation;
    e.action = t.turns[j].action;
    e.source = t.id;
    e.game = t.game;
    if (text::tokenize(e.action).size() > limits.max_action_tokens) {
      ++local.dropped_action;
      continue;
    }
    if (context_tokens(e.context) > limits.max_context_tokens) {
      ++local.dropped_context;
      continue;
    }
    ++local.emitted;
    out.push_back(std::move(e));
  }
  if (stats) *stats += local;
  return out;
}

Split split(const std::vector<Example>& examples, double train_frac,
            const std::set<std::string>& exclude_games) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw InvalidArgument("train fraction must lie in (0, 1)");
  std::vector<Example> kept;
  for (const auto& e : examples)
    if (!exclude_games.count(e.game)) kept.push_back(e);
  if (kept.empty()) throw InvalidArgument("no examples to split");
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_frac * static_cast<double>(kept.size())));
  Split s;
  s.train.assign(kept.begin(), kept.begin() + static_cast<long>(n_train));
  s.validation.assign(kept.begin() + static_cast<long>(n_train), kept.end());
  return s;
}

std::string example_to_json(const Example& e) {
  nlohmann::ordered_json j;
  j["source"] = e.source;
  j["game"] = e.game;
  j["prev_observation"] = e.context.prev_observation;
  j["prev_action"] = e.context.prev_action;
  j["observation"] = e.context.observation;
  j["action"] = e.action;
  return j.dump();
}

Example example_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  Example e;
  e.source = j.at("source").get<std::string>();
  e.game = j.at("game").get<std::string>();
  e.context.prev_observation = j.at("prev_observation").get<std::string>();
  e.context.prev_action = j.at("prev_action").get<std::string>();
  e.context.observation = j.at("observation").get<std::string>();
  e.action = j.at("action").get<std::string>();
  return e;
}

void write_examples(const std::filesystem::path& path,
                    const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  for (const auto& e : examples) out << example_to_json(e) << '\n';
}

std::vector<Example> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line))
    if (!text::trim(line).empty()) out.push_back(example_from_json(line));
  return out;
}

std::vector<Transcript> load_transcripts(const std::filesystem::path& dir,
                                         const CleanOptions& options) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".log") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Transcript> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream buf;
    buf << in.rdbuf();
    CleanOptions opts = options;
    opts.id = f.stem().string();
    for (auto& t : clean_log(buf.str(), opts)) out.push_back(std::move(t));
  }
  return out;
}

std::vector<Transcript> sample_transcripts(const std::vector<Transcript>& all,
                                           double fraction, Rng& rng) {
  if (!(fraction > 0.0)) throw InvalidArgument("data fraction must be positive");
  if (fraction >= 1.0) return all;
  const auto n = all.size();
  auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  count = std::max<std::size_t>(1, std::min(count, n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i)
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<Transcript> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace calm::corpus
