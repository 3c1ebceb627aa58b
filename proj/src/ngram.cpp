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

#include "calm/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "calm/error.hpp"
#include "calm/game.hpp"
#include "calm/text.hpp"

namespace calm::ngram {
namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Line reader that remembers where it is for error messages.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string line() {
    std::string s;
    if (!std::getline(in_, s)) fail("unexpected end of checkpoint");
    ++line_no_;
    return s;
  }

  // "key value" line; returns value.
  std::string field(const std::string& key) {
    const std::string s = line();
    if (s.rfind(key + " ", 0) != 0) fail("expected '" + key + "'");
    return s.substr(key.size() + 1);
  }

  std::size_t size_field(const std::string& key) {
    const std::string v = field(key);
    try {
      std::size_t used = 0;
      const auto n = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      fail("bad integer '" + v + "'");
    }
  }

  double double_field(const std::string& key) { return parse_double(field(key)); }

  double parse_double(const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      fail("bad number '" + v + "'");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("checkpoint", line_no_, 0, msg);
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

constexpr const char* kNgramMagic = "calm-ngram 1";
constexpr const char* kInterpMagic = "calm-ngram-interp 1";

}  // namespace

std::vector<Tokens> tokenize_all(const std::vector<std::string>& actions) {
  std::vector<Tokens> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(text::tokenize(a));
  return out;
}

Lexicon harvest_lexicon(const std::vector<Tokens>& actions) {
  Lexicon lex;
  for (const auto& a : actions)
    if (a.size() >= 2) lex.nouns.insert(a.back());
  for (const auto& a : actions) {
    if (a.size() < 2) continue;
    std::size_t cut = 1;
    while (cut < a.size() && !lex.nouns.count(a[cut])) ++cut;
    lex.verbs.insert(text::join(Tokens(a.begin(), a.begin() + cut), " "));
  }
  return lex;
}

// ---------------------------------------------------------------------------
// NgramModel

std::size_t NgramModel::IdsHash::operator()(const Ids& ids) const {
  std::size_t h = 1469598103934665603ull;
  for (int id : ids) {
    h ^= static_cast<std::size_t>(id) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

NgramModel NgramModel::fit(const std::vector<Tokens>& actions, int n,
                           double alpha) {
  if (actions.empty()) throw InvalidArgument("n-gram fit: empty corpus");
  if (n < 1) throw InvalidArgument("n-gram fit: order must be >= 1");
  if (!(alpha > 0.0)) throw InvalidArgument("n-gram fit: alpha must be > 0");

  NgramModel m;
  m.n_ = n;
  m.alpha_ = alpha;
  std::set<std::string> words{kEos, kUnk};
  for (const auto& a : actions)
    for (const auto& t : a)
      if (t != kBos) words.insert(t);
  m.vocab_.push_back(kBos);
  m.vocab_.insert(m.vocab_.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < m.vocab_.size(); ++i)
    m.ids_[m.vocab_[i]] = static_cast<int>(i);

  for (const auto& a : actions) {
    Ids padded(n - 1, 0);
    for (const auto& t : a) padded.push_back(m.id_of(t));
    padded.push_back(m.id_of(kEos));
    for (std::size_t p = n - 1; p < padded.size(); ++p)
      m.add_window_counts(padded, p);
  }
  m.rebuild_history_counts();
  m.lexicon_ = harvest_lexicon(actions);
  return m;
}

void NgramModel::add_window_counts(const Ids& padded, std::size_t pos) {
  for (int k = 1; k <= n_; ++k)
    ++counts_[Ids(padded.begin() + (pos + 1 - k), padded.begin() + pos + 1)];
}

void NgramModel::rebuild_history_counts() {
  history_counts_.clear();
  for (const auto& [w, c] : counts_)
    history_counts_[Ids(w.begin(), w.end() - 1)] += c;
}

int NgramModel::id_of(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? ids_.at(kUnk) : it->second;
}

Tokens NgramModel::vocab() const {
  return Tokens(vocab_.begin() + 1, vocab_.end());
}

bool NgramModel::in_vocab(const std::string& token) const {
  return token != kBos && ids_.count(token) > 0;
}

std::uint64_t NgramModel::count(const Tokens& window) const {
  Ids ids;
  for (const auto& t : window) ids.push_back(id_of(t));
  const auto it = counts_.find(ids);
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t NgramModel::history_count(const Tokens& history) const {
  Ids ids;
  for (const auto& t : history) ids.push_back(id_of(t));
  const auto it = history_counts_.find(ids);
  return it == history_counts_.end() ? 0 : it->second;
}

NgramModel::Ids NgramModel::history_ids(const Tokens& history) const {
  const std::size_t keep = static_cast<std::size_t>(n_ - 1);
  Ids ids(keep, 0);
  const std::size_t take = std::min(keep, history.size());
  for (std::size_t i = 0; i < take; ++i)
    ids[keep - take + i] = id_of(history[history.size() - take + i]);
  return ids;
}

double NgramModel::prob_ids(int token, const Ids& history) const {
  const auto hc_it = history_counts_.find(history);
  const double hc = hc_it == history_counts_.end() ? 0.0 : static_cast<double>(hc_it->second);
  Ids window = history;
  window.push_back(token);
  const auto c_it = counts_.find(window);
  const double c = c_it == counts_.end() ? 0.0 : static_cast<double>(c_it->second);
  return (c + alpha_) / (hc + alpha_ * static_cast<double>(vocab_size()));
}

double NgramModel::token_prob(const std::string& token,
                              const Tokens& history) const {
  return prob_ids(id_of(token), history_ids(history));
}

double NgramModel::action_log_prob(const Tokens& action) const {
  Ids hist(n_ - 1, 0);
  double lp = 0.0;
  auto advance = [&](int id) {
    lp += std::log(prob_ids(id, hist));
    if (!hist.empty()) {
      hist.erase(hist.begin());
      hist.push_back(id);
    }
  };
  for (const auto& t : action) advance(id_of(t));
  advance(id_of(kEos));
  return lp;
}

void NgramModel::save(std::ostream& out) const {
  out << kNgramMagic << "\n";
  out << "order " << n_ << "\n";
  out << "alpha " << fmt_double(alpha_) << "\n";
  out << "vocab " << vocab_size() << "\n";
  for (std::size_t i = 1; i < vocab_.size(); ++i) out << vocab_[i] << "\n";
  out << "verbs " << lexicon_.verbs.size() << "\n";
  for (const auto& v : lexicon_.verbs) out << v << "\n";
  out << "nouns " << lexicon_.nouns.size() << "\n";
  for (const auto& v : lexicon_.nouns) out << v << "\n";

  std::vector<std::pair<Tokens, std::uint64_t>> rows;
  rows.reserve(counts_.size());
  for (const auto& [ids, c] : counts_) {
    Tokens w;
    for (int id : ids) w.push_back(vocab_[id]);
    rows.emplace_back(std::move(w), c);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
    return a.first < b.first;
  });
  out << "counts " << rows.size() << "\n";
  for (const auto& [w, c] : rows) out << c << " " << text::join(w, " ") << "\n";
}

NgramModel NgramModel::load(std::istream& in) {
  Reader r(in);
  if (r.line() != kNgramMagic) r.fail("not an n-gram checkpoint");
  NgramModel m;
  m.n_ = static_cast<int>(r.size_field("order"));
  m.alpha_ = r.double_field("alpha");
  if (m.n_ < 1 || !(m.alpha_ > 0.0)) r.fail("bad order or alpha");
  const std::size_t nv = r.size_field("vocab");
  m.vocab_.push_back(kBos);
  for (std::size_t i = 0; i < nv; ++i) m.vocab_.push_back(r.line());
  for (std::size_t i = 0; i < m.vocab_.size(); ++i)
    if (!m.ids_.emplace(m.vocab_[i], static_cast<int>(i)).second)
      r.fail("duplicate vocabulary entry '" + m.vocab_[i] + "'");
  if (!m.ids_.count(kEos) || !m.ids_.count(kUnk)) r.fail("vocabulary lacks markers");
  const std::size_t nverbs = r.size_field("verbs");
  for (std::size_t i = 0; i < nverbs; ++i) m.lexicon_.verbs.insert(r.line());
  const std::size_t nnouns = r.size_field("nouns");
  for (std::size_t i = 0; i < nnouns; ++i) m.lexicon_.nouns.insert(r.line());
  const std::size_t nc = r.size_field("counts");
  for (std::size_t i = 0; i < nc; ++i) {
    std::istringstream row(r.line());
    std::uint64_t c = 0;
    if (!(row >> c)) r.fail("bad count row");
    Ids ids;
    std::string tok;
    while (row >> tok) {
      const auto it = m.ids_.find(tok);
      if (it == m.ids_.end()) r.fail("token '" + tok + "' not in vocabulary");
      ids.push_back(it->second);
    }
    if (ids.empty() || static_cast<int>(ids.size()) > m.n_) r.fail("bad window length");
    m.counts_[ids] = c;
  }
  m.rebuild_history_counts();
  return m;
}

// ---------------------------------------------------------------------------
// Selection

double perplexity(const ActionScorer& model, const std::vector<Tokens>& actions) {
  if (actions.empty()) throw InvalidArgument("perplexity: no actions");
  double total = 0.0;
  for (const auto& a : actions) total += model.action_log_prob(a);
  return std::exp(-total / static_cast<double>(actions.size()));
}

const std::vector<double>& default_alpha_grid() {
  static const std::vector<double> grid = {1e-4, 3e-4, 7.3e-4, 1e-3, 3e-3,
                                           1e-2, 3e-2, 0.1,    0.3,  1.0};
  return grid;
}

TuneResult tune(const std::vector<Tokens>& train, const std::vector<Tokens>& val,
                const std::vector<int>& n_grid,
                const std::vector<double>& alpha_grid) {
  if (n_grid.empty() || alpha_grid.empty())
    throw InvalidArgument("tune: empty hyperparameter grid");
  std::vector<int> ns = n_grid;
  std::vector<double> alphas = alpha_grid;
  std::sort(ns.begin(), ns.end());
  std::sort(alphas.begin(), alphas.end());
  TuneResult best;
  best.perplexity = std::numeric_limits<double>::infinity();
  bool have = false;
  for (int n : ns) {
    for (double a : alphas) {
      const double ppl = perplexity(NgramModel::fit(train, n, a), val);
      if (!have || ppl < best.perplexity) {
        best = {n, a, ppl};
        have = true;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Interpolation

InterpolatedModel::InterpolatedModel(std::vector<NgramModel> components,
                                     std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty() || components_.size() != weights_.size())
    throw InvalidArgument("interpolation: component/weight count mismatch");
  double sum = 0.0;
  for (double w : weights_) {
    if (w < 0.0) throw InvalidArgument("interpolation: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgument("interpolation: weights must sum to 1");
}

double InterpolatedModel::token_prob(const std::string& token,
                                     const Tokens& history) const {
  double p = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i)
    if (weights_[i] > 0.0) p += weights_[i] * components_[i].token_prob(token, history);
  return p;
}

double InterpolatedModel::action_log_prob(const Tokens& action) const {
  Tokens hist;
  double lp = 0.0;
  for (const auto& t : action) {
    lp += std::log(token_prob(t, hist));
    hist.push_back(t);
  }
  return lp + std::log(token_prob(kEos, hist));
}

void InterpolatedModel::save(std::ostream& out) const {
  out << kInterpMagic << "\n";
  out << "components " << components_.size() << "\n";
  for (double w : weights_) out << "weight " << fmt_double(w) << "\n";
  for (const auto& c : components_) c.save(out);
}

InterpolatedModel InterpolatedModel::load(std::istream& in) {
  Reader r(in);
  if (r.line() != kInterpMagic) r.fail("not an interpolated checkpoint");
  const std::size_t k = r.size_field("components");
  std::vector<double> w;
  for (std::size_t i = 0; i < k; ++i) w.push_back(r.double_field("weight"));
  std::vector<NgramModel> comps;
  for (std::size_t i = 0; i < k; ++i) comps.push_back(NgramModel::load(in));
  return InterpolatedModel(std::move(comps), std::move(w));
}

std::vector<std::vector<double>> simplex_grid(int size, double step) {
  if (size < 1 || !(step > 0.0) || step > 1.0)
    throw InvalidArgument("simplex grid: bad size or step");
  const int units = static_cast<int>(std::lround(1.0 / step));
  std::vector<std::vector<double>> out;
  std::vector<int> num(size, 0);
  auto rec = [&](auto&& self, int idx, int left) -> void {
    if (idx == size - 1) {
      num[idx] = left;
      std::vector<double> w(size);
      for (int i = 0; i < size; ++i) w[i] = static_cast<double>(num[i]) / units;
      out.push_back(std::move(w));
      return;
    }
    for (int v = 0; v <= left; ++v) {
      num[idx] = v;
      self(self, idx + 1, left - v);
    }
  };
  rec(rec, 0, units);
  return out;
}

InterpolatedModel fit_interpolated(const std::vector<Tokens>& train,
                                   const std::vector<Tokens>& val,
                                   const InterpolationOptions& opts) {
  if (val.empty()) throw InvalidArgument("fit_interpolated: empty validation set");
  if (opts.max_order < 1) throw InvalidArgument("fit_interpolated: max_order < 1");
  std::vector<NgramModel> comps;
  for (int n = 1; n <= opts.max_order; ++n) {
    const auto best = tune(train, val, {n}, opts.alpha_grid);
    comps.push_back(NgramModel::fit(train, n, best.alpha));
  }

  // probs[a][t][i]: component i's probability of token t of val action a.
  std::vector<std::vector<std::vector<double>>> probs;
  for (const auto& a : val) {
    Tokens seq = a;
    seq.push_back(kEos);
    Tokens hist;
    auto& rows = probs.emplace_back();
    for (const auto& t : seq) {
      auto& row = rows.emplace_back();
      for (const auto& c : comps) row.push_back(c.token_prob(t, hist));
      hist.push_back(t);
    }
  }

  const auto grid = simplex_grid(opts.max_order, opts.step);
  std::size_t best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& w = grid[g];
    double lp = 0.0;
    for (const auto& rows : probs)
      for (const auto& row : rows) {
        double p = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) p += w[i] * row[i];
        lp += std::log(p);
      }
    if (lp > best_lp) {
      best_lp = lp;
      best = g;
    }
  }
  return InterpolatedModel(std::move(comps), grid[best]);
}

std::shared_ptr<const ActionScorer> load_scorer(std::istream& in) {
  const auto start = in.tellg();
  std::string magic;
  std::getline(in, magic);
  in.clear();
  in.seekg(start);
  if (magic == kNgramMagic)
    return std::make_shared<NgramModel>(NgramModel::load(in));
  if (magic == kInterpMagic)
    return std::make_shared<InterpolatedModel>(InterpolatedModel::load(in));
  throw ParseError("checkpoint", 1, 1, "unknown checkpoint kind '" + magic + "'");
}

std::shared_ptr<const ActionScorer> load_scorer_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return load_scorer(in);
}

void save_scorer_file(const ActionScorer& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  model.save(out);
  if (!out) throw InvalidArgument("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Generation

NgramCalm::NgramCalm(std::shared_ptr<const ActionScorer> scorer, Lexicon lexicon,
                     std::vector<std::string> object_names, int max_per_object)
    : scorer_(std::move(scorer)),
      lexicon_(std::move(lexicon)),
      max_per_object_(max_per_object) {
  if (!scorer_) throw InvalidArgument("NgramCalm: null scorer");
  single_nouns_ = lexicon_.nouns;
  for (const auto& name : object_names) {
    const auto toks = text::tokenize(name);
    if (toks.size() == 1) single_nouns_.insert(toks[0]);
    if (toks.size() == 2) pair_nouns_.insert(text::join(toks, " "));
  }
}

std::vector<std::string> NgramCalm::detect_nouns(const std::string& observation) const {
  const auto toks = text::tokenize(observation);
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < toks.size();) {
    if (i + 1 < toks.size()) {
      std::string pair = toks[i] + " " + toks[i + 1];
      if (pair_nouns_.count(pair)) {
        if (seen.insert(pair).second) out.push_back(std::move(pair));
        i += 2;
        continue;
      }
    }
    if (single_nouns_.count(toks[i]) && seen.insert(toks[i]).second)
      out.push_back(toks[i]);
    ++i;
  }
  return out;
}

std::vector<NgramCalm::Scored> NgramCalm::ranked(const Context& context) const {
  auto better = [](const Scored& a, const Scored& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.action < b.action;
  };
  std::vector<Scored> all;
  for (const auto& noun : detect_nouns(context.observation)) {
    std::vector<Scored> per;
    for (const auto& verb : lexicon_.verbs) {
      std::string action = verb + " " + noun;
      const double lp = scorer_->action_log_prob(text::tokenize(action));
      per.push_back({std::move(action), lp});
    }
    std::sort(per.begin(), per.end(), better);
    if (static_cast<int>(per.size()) > max_per_object_) per.resize(max_per_object_);
    all.insert(all.end(), per.begin(), per.end());
  }
  for (const auto& d : game::directions())
    all.push_back({d, scorer_->action_log_prob(Tokens{d})});
  std::sort(all.begin(), all.end(), better);
  std::set<std::string> seen;
  std::vector<Scored> out;
  for (auto& s : all)
    if (seen.insert(s.action).second) out.push_back(std::move(s));
  return out;
}

std::vector<std::string> NgramCalm::generate(const Context& context, int k) const {
  if (k < 1) throw InvalidArgument("generate: k must be >= 1");
  std::vector<std::string> out;
  for (auto& s : ranked(context)) {
    if (static_cast<int>(out.size()) >= k) break;
    out.push_back(std::move(s.action));
  }
  return out;
}

}  // namespace calm::ngram
