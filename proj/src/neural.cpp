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

#include "calm/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "calm/error.hpp"
#include "calm/rng.hpp"
#include "calm/text.hpp"

namespace calm::neural {

using nn::Tape;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* t : {kUnk, kObsSep, kActSep, kBos, kEos}) {
    ids_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& token_lists,
                             std::size_t max_size) {
  Vocabulary v;
  std::map<std::string, std::size_t> counts;
  for (const auto& list : token_lists)
    for (const auto& t : list)
      if (!v.ids_.count(t)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [tok, n] : sorted) {
    if (v.tokens_.size() >= max_size) break;
    v.ids_[tok] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? unk() : it->second;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n < 5) {
      if (line != v.tokens_[n])
        throw ParseError("vocabulary", n + 1, 1, "expected reserved token " + v.tokens_[n]);
    } else {
      if (line.empty() || !v.ids_.emplace(line, static_cast<int>(v.tokens_.size())).second)
        throw ParseError("vocabulary", n + 1, 1, "empty or duplicate token");
      v.tokens_.push_back(line);
    }
    ++n;
  }
  if (n < 5) throw ParseError("vocabulary", n, 0, "missing reserved tokens");
  return v;
}

Vocabulary build_vocabulary(const std::vector<corpus::Example>& examples, std::size_t max_size) {
  std::vector<std::vector<std::string>> lists;
  for (const auto& e : examples) {
    lists.push_back(text::tokenize(e.context.prev_observation));
    lists.push_back(text::tokenize(e.context.prev_action));
    lists.push_back(text::tokenize(e.context.observation));
    lists.push_back(text::tokenize(e.action));
  }
  return Vocabulary::build(lists, max_size);
}

// ---------------------------------------------------------------------------
// Model

NeuralCalm::NeuralCalm(Vocabulary vocab, NeuralConfig config, std::uint64_t seed)
    : vocab_(std::move(vocab)),
      config_(config),
      embeddings_("embeddings", vocab_.size(), config.embedding),
      encoder_("encoder", config.embedding, config.hidden),
      decoder_("decoder", config.embedding + config.hidden, config.hidden),
      output_("output", config.hidden, vocab_.size()) {
  if (config.embedding < 1 || config.hidden < 1 || config.max_context < 1 ||
      config.max_action_tokens < 1 || config.beam_width < 1)
    throw ConfigError("neural CALM: sizes must be positive");
  Rng rng(seed);
  embeddings_.init_uniform(rng, config.embedding);
  encoder_.init(rng);
  decoder_.init(rng);
  output_.init(rng);
}

nn::ParameterList NeuralCalm::parameters() {
  nn::ParameterList out{&embeddings_};
  encoder_.collect(out);
  decoder_.collect(out);
  output_.collect(out);
  return out;
}

std::vector<int> NeuralCalm::context_ids(const Context& c) const {
  std::vector<int> ids{Vocabulary::obs()};
  for (const auto& t : text::tokenize(c.prev_observation)) ids.push_back(vocab_.id(t));
  ids.push_back(Vocabulary::act());
  for (const auto& t : text::tokenize(c.prev_action)) ids.push_back(vocab_.id(t));
  ids.push_back(Vocabulary::obs());
  for (const auto& t : text::tokenize(c.observation)) ids.push_back(vocab_.id(t));
  if (static_cast<int>(ids.size()) > config_.max_context)
    ids.erase(ids.begin(), ids.end() - config_.max_context);
  return ids;
}

std::vector<int> NeuralCalm::action_ids(const std::string& action) const {
  std::vector<int> ids;
  for (const auto& t : text::tokenize(action)) ids.push_back(vocab_.id(t));
  return ids;
}

Var NeuralCalm::encode(Tape& tape, const std::vector<std::vector<int>>& contexts) const {
  const Var h0 = tape.constant(Tensor(static_cast<int>(contexts.size()), config_.hidden));
  return nn::run_gru(tape, encoder_, embeddings_, contexts, h0);
}

Var NeuralCalm::decode_step(Tape& tape, const std::vector<int>& prev, Var ctx, Var h) const {
  Var in = nn::concat_cols({nn::embedding(tape, embeddings_, prev), ctx});
  return decoder_.step(tape, in, h);
}

NeuralCalm::Batch NeuralCalm::make_batch(const std::vector<const corpus::Example*>& examples) const {
  Batch b;
  for (const auto* e : examples) {
    b.contexts.push_back(context_ids(e->context));
    b.actions.push_back(action_ids(e->action));
  }
  return b;
}

Var NeuralCalm::loss(Tape& tape, const Batch& batch, int* tokens) const {
  const int n = static_cast<int>(batch.actions.size());
  if (n == 0 || batch.contexts.size() != batch.actions.size())
    throw InvalidArgument("neural loss: empty or ragged batch");
  Var ctx = encode(tape, batch.contexts);
  Var h = ctx;
  std::size_t steps = 0;
  for (const auto& a : batch.actions) steps = std::max(steps, a.size() + 1);
  std::vector<int> prev(n, Vocabulary::bos()), target(n);
  Var total = tape.constant(Tensor(1, 1));
  int count = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (int r = 0; r < n; ++r) {
      const auto& a = batch.actions[r];
      target[r] = t < a.size() ? a[t] : (t == a.size() ? Vocabulary::eos() : -1);
      if (target[r] >= 0) ++count;
    }
    h = decode_step(tape, prev, ctx, h);
    total = nn::add(total, nn::cross_entropy(output_(tape, h), target));
    for (int r = 0; r < n; ++r) prev[r] = target[r] >= 0 ? target[r] : Vocabulary::eos();
  }
  if (tokens) *tokens = count;
  return total;
}

double NeuralCalm::action_logprob(const Context& c, const std::string& action) const {
  Tape tape(false);
  Batch b{{context_ids(c)}, {action_ids(action)}};
  return -loss(tape, b, nullptr).scalar();
}

Tensor NeuralCalm::next_log_probs(const Context& c, const std::vector<int>& prefix) const {
  Tape tape(false);
  Var ctx = encode(tape, {context_ids(c)});
  Var h = ctx;
  int prev = Vocabulary::bos();
  for (int tok : prefix) {
    h = decode_step(tape, {prev}, ctx, h);
    prev = tok;
  }
  h = decode_step(tape, {prev}, ctx, h);
  return nn::log_softmax_rows(output_(tape, h).value());
}

bool NeuralCalm::generatable(int id) const { return !vocab_.is_special(id); }

BeamResult NeuralCalm::beam_generate(const Context& c, int width, int k, int max_len) const {
  BeamResult result;
  if (k <= 0) return result;
  if (width < 1 || max_len < 1) throw InvalidArgument("beam: width and max_len must be >= 1");

  struct Hyp {
    std::vector<int> tokens;
    std::string text;
    double lp = 0.0;
  };
  struct Cand {
    double lp;
    int hyp;
    int tok;
  };

  Tape enc_tape(false);
  const Tensor ctx = encode(enc_tape, {context_ids(c)}).value();
  std::vector<Hyp> live{Hyp{}};
  Tensor states = ctx;  // one row per live hypothesis
  std::vector<ScoredAction> finished;
  const int vocab = vocab_.size();

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    const int n = static_cast<int>(live.size());
    Tape tape(false);
    std::vector<int> prev(n);
    Tensor ctx_rows(n, config_.hidden);
    for (int r = 0; r < n; ++r) {
      prev[r] = live[r].tokens.empty() ? Vocabulary::bos() : live[r].tokens.back();
      std::copy(ctx.row(0), ctx.row(0) + config_.hidden, ctx_rows.row(r));
    }
    Var h = decode_step(tape, prev, tape.constant(std::move(ctx_rows)), tape.constant(states));
    const Tensor logp = nn::log_softmax_rows(output_(tape, h).value());
    const bool last = step == max_len - 1;

    std::vector<Cand> cands;
    for (int r = 0; r < n; ++r) {
      cands.push_back({live[r].lp + logp(r, Vocabulary::eos()), r, Vocabulary::eos()});
      if (last) continue;
      for (int w = 0; w < vocab; ++w)
        if (generatable(w)) cands.push_back({live[r].lp + logp(r, w), r, w});
    }
    auto text_of = [&](const Cand& x) {
      const auto& base = live[x.hyp].text;
      if (x.tok == Vocabulary::eos()) return base;
      return base.empty() ? vocab_.token(x.tok) : base + " " + vocab_.token(x.tok);
    };
    auto better = [&](const Cand& a, const Cand& b) {
      if (a.lp != b.lp) return a.lp > b.lp;
      const auto ta = text_of(a), tb = text_of(b);
      if (ta != tb) return ta < tb;
      return a.tok == Vocabulary::eos() && b.tok != Vocabulary::eos();
    };
    const std::size_t keep = std::min<std::size_t>(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(), better);
    cands.resize(keep);

    std::vector<Hyp> next;
    std::vector<int> rows;
    for (const auto& x : cands) {
      if (x.tok == Vocabulary::eos()) {
        finished.push_back({live[x.hyp].text, x.lp});
        continue;
      }
      Hyp hyp{live[x.hyp].tokens, text_of(x), x.lp};
      hyp.tokens.push_back(x.tok);
      next.push_back(std::move(hyp));
      rows.push_back(x.hyp);
    }
    const Tensor& hv = h.value();
    Tensor next_states(static_cast<int>(rows.size()), config_.hidden);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(hv.row(rows[i]), hv.row(rows[i]) + config_.hidden, next_states.row(static_cast<int>(i)));
    live = std::move(next);
    states = std::move(next_states);
  }

  std::stable_sort(finished.begin(), finished.end(), [](const ScoredAction& a, const ScoredAction& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.action < b.action;
  });
  if (static_cast<int>(finished.size()) > k) finished.resize(k);
  result.padding = k - static_cast<int>(finished.size());
  result.actions = std::move(finished);
  return result;
}

std::vector<std::string> NeuralCalm::generate(const Context& context, int k) const {
  std::vector<std::string> out;
  if (k <= 0) return out;
  // The beam does not depend on k, so truncating the filtered list keeps the
  // output prefix-consistent.
  const auto beam = beam_generate(context, config_.beam_width, config_.beam_width,
                                  config_.max_action_tokens + 1);
  for (const auto& s : beam.actions) {
    if (static_cast<int>(out.size()) >= k) break;
    if (s.action.empty() || std::find(out.begin(), out.end(), s.action) != out.end()) continue;
    out.push_back(s.action);
  }
  return out;
}

void NeuralCalm::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "calm-neural 1\n"
      << "embedding " << config_.embedding << "\n"
      << "hidden " << config_.hidden << "\n"
      << "max_context " << config_.max_context << "\n"
      << "max_action_tokens " << config_.max_action_tokens << "\n"
      << "beam_width " << config_.beam_width << "\n"
      << "vocab " << vocab_.size() << "\n";
  auto self = const_cast<NeuralCalm*>(this)->parameters();
  nn::save_parameters(out, self);
  std::ofstream vout(path + ".vocab");
  if (!vout) throw InvalidArgument("cannot write " + path + ".vocab");
  vocab_.save(vout);
  if (!out || !vout) throw InvalidArgument("write failed: " + path);
}

NeuralCalm NeuralCalm::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::ifstream vin(path + ".vocab");
  if (!vin) throw InvalidArgument("cannot open " + path + ".vocab");
  Vocabulary vocab = Vocabulary::load(vin);
  std::string line;
  std::getline(in, line);
  if (line != "calm-neural 1") throw ParseError(path, 1, 1, "not a neural CALM checkpoint");
  NeuralConfig cfg;
  int vocab_size = 0;
  const std::vector<std::pair<std::string, int*>> fields = {
      {"embedding", &cfg.embedding}, {"hidden", &cfg.hidden},
      {"max_context", &cfg.max_context}, {"max_action_tokens", &cfg.max_action_tokens},
      {"beam_width", &cfg.beam_width}, {"vocab", &vocab_size}};
  std::size_t line_no = 1;
  for (const auto& [key, dst] : fields) {
    std::getline(in, line);
    ++line_no;
    std::istringstream ls(line);
    std::string k;
    if (!(ls >> k >> *dst) || k != key) throw ParseError(path, line_no, 1, "expected " + key);
  }
  if (vocab_size != vocab.size())
    throw ValidationError(path + ": vocabulary size " + std::to_string(vocab.size()) +
                          " does not match checkpoint " + std::to_string(vocab_size));
  NeuralCalm model(std::move(vocab), cfg, 0);
  nn::load_parameters(in, model.parameters());
  return model;
}

// ---------------------------------------------------------------------------
// Training

double mean_loss(const NeuralCalm& model, const std::vector<corpus::Example>& examples,
                 int batch_size) {
  if (examples.empty()) throw InvalidArgument("mean_loss: no examples");
  double total = 0.0;
  long tokens = 0;
  for (std::size_t i = 0; i < examples.size(); i += batch_size) {
    std::vector<const corpus::Example*> chunk;
    for (std::size_t j = i; j < std::min(examples.size(), i + batch_size); ++j)
      chunk.push_back(&examples[j]);
    Tape tape(false);
    int n = 0;
    total += model.loss(tape, model.make_batch(chunk), &n).scalar();
    tokens += n;
  }
  return total / static_cast<double>(tokens);
}

EpochStats train_epoch(NeuralCalm& model, const std::vector<corpus::Example>& train,
                       const std::vector<corpus::Example>& val, nn::Adam& optimizer,
                       int batch_size, Rng& rng) {
  if (train.empty()) throw InvalidArgument("train_epoch: empty dataset");
  if (batch_size < 1) throw InvalidArgument("train_epoch: batch size must be >= 1");
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  double total = 0.0;
  long tokens = 0;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<const corpus::Example*> chunk;
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j)
      chunk.push_back(&train[order[j]]);
    Tape tape;
    int n = 0;
    Var loss = model.loss(tape, model.make_batch(chunk), &n);
    total += loss.scalar();
    tokens += n;
    tape.backward(nn::scale(loss, 1.0 / n));
    optimizer.step();
  }
  EpochStats stats;
  stats.train_loss = total / static_cast<double>(tokens);
  stats.val_loss = val.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_loss(model, val);
  return stats;
}

std::vector<EpochStats> train(NeuralCalm& model, const std::vector<corpus::Example>& train_set,
                              const std::vector<corpus::Example>& val,
                              const TrainOptions& options) {
  if (train_set.empty()) throw InvalidArgument("train: empty dataset");
  if (options.epochs < 0 || options.batch_size < 1) throw ConfigError("train: bad epochs/batch size");
  nn::AdamConfig cfg;
  cfg.lr = options.lr;
  cfg.max_grad_norm = options.max_grad_norm;
  cfg.warmup_steps = options.warmup_steps;
  const long batches =
      static_cast<long>((train_set.size() + options.batch_size - 1) / options.batch_size);
  cfg.total_steps = options.linear_decay ? batches * options.epochs : 0;
  nn::Adam opt(model.parameters(), cfg);
  Rng rng(options.seed);
  std::vector<EpochStats> out;
  for (int e = 0; e < options.epochs; ++e)
    out.push_back(train_epoch(model, train_set, val, opt, options.batch_size, rng));
  return out;
}

std::vector<corpus::Example> pretraining_examples(const std::vector<std::string>& texts,
                                                  std::size_t max_action_tokens) {
  std::vector<corpus::Example> out;
  for (const auto& t : texts) {
    std::vector<std::string> sentence;
    auto flush = [&]() {
      if (sentence.size() >= 3) {
        const std::size_t cut = sentence.size() / 2;
        const std::size_t end = std::min(sentence.size(), cut + max_action_tokens);
        corpus::Example e;
        e.context.observation = text::join({sentence.begin(), sentence.begin() + cut}, " ");
        e.action = text::join({sentence.begin() + cut, sentence.begin() + end}, " ");
        e.source = "pretrain";
        out.push_back(std::move(e));
      }
      sentence.clear();
    };
    for (const auto& tok : text::tokenize(t)) {
      if (tok == "." || tok == "!" || tok == "?") {
        flush();
      } else {
        sentence.push_back(tok);
      }
    }
    flush();
  }
  return out;
}

}  // namespace calm::neural
