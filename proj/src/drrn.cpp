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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <istream>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "calm/error.hpp"
#include "calm/text.hpp"
#include "json.hpp"

namespace calm::drrn {

using nn::Tape;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Q-network

QNetwork::QNetwork(QConfig config, std::uint64_t seed)
    : config_(config),
      embeddings_("drrn.embeddings", config.buckets, config.embedding),
      obs_encoder_("drrn.obs", config.embedding, config.hidden),
      act_encoder_("drrn.act", config.embedding, config.hidden),
      hidden_("drrn.g1", 2 * config.hidden, config.decoder_hidden),
      out_("drrn.g2", config.decoder_hidden, 1) {
  if (config.buckets < 1 || config.embedding < 1 || config.hidden < 1 || config.decoder_hidden < 1)
    throw ConfigError("drrn: network sizes must be positive");
  Rng rng(seed);
  embeddings_.init_uniform(rng, config.embedding);
  obs_encoder_.init(rng);
  act_encoder_.init(rng);
  hidden_.init(rng);
  out_.init(rng);
}

nn::ParameterList QNetwork::parameters() {
  nn::ParameterList out{&embeddings_};
  obs_encoder_.collect(out);
  act_encoder_.collect(out);
  hidden_.collect(out);
  out_.collect(out);
  return out;
}

std::vector<int> QNetwork::token_ids(const std::string& s) const {
  std::vector<int> ids;
  for (const auto& tok : text::tokenize(s)) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : tok) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    ids.push_back(static_cast<int>(h % static_cast<std::uint64_t>(config_.buckets)));
  }
  return ids;
}

Var QNetwork::encode_observations(Tape& tape, const std::vector<std::vector<int>>& texts) const {
  const int n = static_cast<int>(texts.size());
  return nn::run_gru(tape, obs_encoder_, embeddings_, texts, tape.constant(Tensor(n, config_.hidden)));
}

Var QNetwork::encode_actions(Tape& tape, const std::vector<std::vector<int>>& texts) const {
  const int n = static_cast<int>(texts.size());
  return nn::run_gru(tape, act_encoder_, embeddings_, texts, tape.constant(Tensor(n, config_.hidden)));
}

Var QNetwork::decode(Tape& tape, Var obs, Var act) const {
  return out_(tape, nn::tanh(hidden_(tape, nn::concat_cols({obs, act}))));
}

namespace {

// Assigns dense indices to distinct strings in first-seen order.
struct Interner {
  std::unordered_map<std::string, int> index;
  std::vector<const std::string*> items;

  int add(const std::string& s) {
    auto [it, fresh] = index.emplace(s, static_cast<int>(items.size()));
    if (fresh) items.push_back(&it->first);
    return it->second;
  }
};

std::vector<std::vector<int>> ids_of(const QNetwork& net, const Interner& in) {
  std::vector<std::vector<int>> out;
  out.reserve(in.items.size());
  for (const std::string* s : in.items) out.push_back(net.token_ids(*s));
  return out;
}

}  // namespace

std::vector<std::vector<double>> QNetwork::q_values_batch(
    const std::vector<std::string>& obs, const std::vector<std::vector<std::string>>& candidates) const {
  if (obs.size() != candidates.size())
    throw InvalidArgument("q_values_batch: " + std::to_string(obs.size()) + " observations but " +
                          std::to_string(candidates.size()) + " candidate lists");
  Interner os, as;
  std::vector<int> orow, arow;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (candidates[i].empty()) throw InvalidArgument("q_values: empty candidate list");
    const int o = os.add(obs[i]);
    for (const auto& a : candidates[i]) {
      orow.push_back(o);
      arow.push_back(as.add(a));
    }
  }
  std::vector<std::vector<double>> out(obs.size());
  if (obs.empty()) return out;
  Tape tape(false);
  Var O = encode_observations(tape, ids_of(*this, os));
  Var A = encode_actions(tape, ids_of(*this, as));
  const Tensor& q = decode(tape, nn::gather_rows(O, orow), nn::gather_rows(A, arow)).value();
  std::size_t r = 0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = 0; j < candidates[i].size(); ++j) out[i].push_back(q.data[r++]);
  return out;
}

std::vector<double> QNetwork::q_values(const std::string& obs,
                                       const std::vector<std::string>& candidates) const {
  return q_values_batch({obs}, {candidates}).front();
}

void QNetwork::save(std::ostream& out) const {
  out << "calm-drrn 1\n"
      << config_.buckets << ' ' << config_.embedding << ' ' << config_.hidden << ' '
      << config_.decoder_hidden << '\n';
  nn::save_parameters(out, const_cast<QNetwork*>(this)->parameters());
}

void QNetwork::load(std::istream& in) {
  std::string magic, version;
  std::getline(in, magic);
  if (magic != "calm-drrn 1") throw ParseError("checkpoint", 1, 0, "expected 'calm-drrn 1'");
  QConfig c;
  if (!(in >> c.buckets >> c.embedding >> c.hidden >> c.decoder_hidden))
    throw ParseError("checkpoint", 2, 0, "bad network sizes");
  in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  QNetwork fresh(c, 0);
  nn::load_parameters(in, fresh.parameters());
  *this = std::move(fresh);
}

// ---------------------------------------------------------------------------
// Action selection

std::vector<double> selection_probs(const std::vector<double>& q, double temperature) {
  if (q.empty()) throw InvalidArgument("selection_probs: no candidates");
  std::vector<double> p(q.size(), 0.0);
  const auto best = std::max_element(q.begin(), q.end());
  if (temperature <= 0.0) {
    p[static_cast<std::size_t>(best - q.begin())] = 1.0;
    return p;
  }
  double z = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) z += p[i] = std::exp((q[i] - *best) / temperature);
  for (double& x : p) x /= z;
  return p;
}

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the running total: take the last non-zero entry.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0) return i;
  return probs.size() - 1;
}

std::string select_action(const QNetwork& net, const std::string& obs,
                          const std::vector<std::string>& candidates, double temperature, Rng& rng) {
  return candidates[sample_index(selection_probs(net.q_values(obs, candidates), temperature), rng)];
}

// ---------------------------------------------------------------------------
// Replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[next_] = std::move(e);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw InvalidArgument("sample: empty replay buffer");
  std::vector<const Experience*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[rng.below(items_.size())]);
  return out;
}

bool BestScoreBuffer::offer(const std::vector<Experience>& trajectory, double score) {
  if (score <= 0.0 || score < best_) return false;
  if (score > best_) {
    buffer_.clear();
    best_ = score;
  }
  for (const auto& e : trajectory) buffer_.push(e);
  return true;
}

std::vector<const Experience*> sample_mixed(const ReplayBuffer& standard, const BestScoreBuffer& best,
                                            std::size_t n, double ratio, Rng& rng) {
  std::size_t from_best = best.buffer().size() > 0
                              ? static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)))
                              : 0;
  if (standard.size() == 0) from_best = best.buffer().size() > 0 ? n : 0;
  std::vector<const Experience*> out;
  if (from_best > 0) out = best.buffer().sample(from_best, rng);
  if (n > from_best) {
    auto rest = standard.sample(n - from_best, rng);
    out.insert(out.end(), rest.begin(), rest.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// TD learning

namespace {

void check_batch(const std::vector<const Experience*>& batch) {
  if (batch.empty()) throw InvalidArgument("td: empty batch");
  for (const Experience* e : batch)
    if (!e->done && e->next_candidates.empty())
      throw InvalidArgument("td: non-terminal transition without next candidates");
}

// Q(o', a') for every (transition, next candidate) pair, reduced to the max
// per transition. Encodings come from rows of O / A.
std::vector<double> next_maxima(const QNetwork& net, Tape& tape, Var O, Var A,
                                const std::vector<const Experience*>& batch, Interner& os, Interner& as) {
  std::vector<int> orow, arow;
  for (const Experience* e : batch) {
    if (e->done) continue;
    const int o = os.index.at(e->next_obs);
    for (const auto& a : e->next_candidates) {
      orow.push_back(o);
      arow.push_back(as.index.at(a));
    }
  }
  std::vector<double> maxima(batch.size(), 0.0);
  if (orow.empty()) return maxima;
  const Tensor q = net.decode(tape, nn::gather_rows(O, orow), nn::gather_rows(A, arow)).value();
  std::size_t r = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->done) continue;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < batch[i]->next_candidates.size(); ++j) m = std::max(m, q.data[r++]);
    maxima[i] = m;
  }
  return maxima;
}

void intern_next(const std::vector<const Experience*>& batch, Interner& os, Interner& as) {
  for (const Experience* e : batch) {
    if (e->done) continue;
    os.add(e->next_obs);
    for (const auto& a : e->next_candidates) as.add(a);
  }
}

std::vector<double> combine(const std::vector<const Experience*>& batch, const std::vector<double>& maxima,
                            double gamma) {
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    y[i] = batch[i]->reward + (batch[i]->done ? 0.0 : gamma * maxima[i]);
  return y;
}

Var squared_error(Tape& tape, const QNetwork& net, Var O, Var A, const std::vector<const Experience*>& batch,
                  Interner& os, Interner& as, const std::vector<double>& targets) {
  std::vector<int> orow, arow;
  for (const Experience* e : batch) {
    orow.push_back(os.index.at(e->obs));
    arow.push_back(as.index.at(e->action));
  }
  Var q = net.decode(tape, nn::gather_rows(O, orow), nn::gather_rows(A, arow));
  Var diff = nn::sub(q, tape.constant(Tensor(static_cast<int>(targets.size()), 1, targets)));
  return nn::mean(nn::mul(diff, diff));
}

}  // namespace

std::vector<double> td_targets(const QNetwork& net, const std::vector<const Experience*>& batch,
                               double gamma) {
  check_batch(batch);
  Interner os, as;
  intern_next(batch, os, as);
  std::vector<double> maxima(batch.size(), 0.0);
  if (!os.items.empty()) {
    Tape tape(false);
    Var O = net.encode_observations(tape, ids_of(net, os));
    Var A = net.encode_actions(tape, ids_of(net, as));
    maxima = next_maxima(net, tape, O, A, batch, os, as);
  }
  return combine(batch, maxima, gamma);
}

Var td_loss(Tape& tape, const QNetwork& net, const std::vector<const Experience*>& batch,
            const std::vector<double>& targets) {
  check_batch(batch);
  if (targets.size() != batch.size()) throw InvalidArgument("td_loss: one target per transition required");
  Interner os, as;
  for (const Experience* e : batch) {
    os.add(e->obs);
    as.add(e->action);
  }
  Var O = net.encode_observations(tape, ids_of(net, os));
  Var A = net.encode_actions(tape, ids_of(net, as));
  return squared_error(tape, net, O, A, batch, os, as, targets);
}

double td_update(QNetwork& net, nn::Adam& optimizer, const std::vector<const Experience*>& batch,
                 double gamma, const QNetwork* target_net) {
  check_batch(batch);
  // Targets come from a forward-only pass, so the recorded graph covers just
  // the sampled transitions.
  const auto targets = td_targets(target_net ? *target_net : net, batch, gamma);
  Tape tape;
  Var loss = td_loss(tape, net, batch, targets);
  const double value = loss.scalar();
  tape.backward(loss);
  optimizer.step();
  return value;
}

// ---------------------------------------------------------------------------
// Candidate filtering

void TextualFilter::train(const std::vector<std::pair<std::string, bool>>& labeled, int epochs, double lr,
                          std::uint64_t seed) {
  if (labeled.empty()) throw InvalidArgument("TextualFilter: no training data");
  vocab_.clear();
  for (const auto& [response, label] : labeled)
    for (const auto& tok : text::tokenize(response)) vocab_.emplace(tok, 0);
  int next = 0;
  for (auto& [tok, id] : vocab_) id = next++;
  weights_.assign(vocab_.size(), 0.0);
  bias_ = 0.0;
  std::vector<std::vector<int>> feats;
  for (const auto& item : labeled) feats.push_back(features(item.first));
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i : order) {
      double z = bias_;
      for (int f : feats[i]) z += weights_[f];
      const double g = 1.0 / (1.0 + std::exp(-z)) - (labeled[i].second ? 1.0 : 0.0);
      bias_ -= lr * g;
      for (int f : feats[i]) weights_[f] -= lr * g;
    }
  }
}

std::vector<int> TextualFilter::features(const std::string& response) const {
  std::vector<int> out;
  for (const auto& tok : text::tokenize(response)) {
    auto it = vocab_.find(tok);
    if (it != vocab_.end()) out.push_back(it->second);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double TextualFilter::p_admissible(const std::string& response) const {
  if (!trained()) throw InvalidArgument("TextualFilter: not trained");
  double z = bias_;
  for (int f : features(response)) z += weights_[f];
  return 1.0 / (1.0 + std::exp(-z));
}

std::vector<std::pair<std::string, bool>> engine_labeled_responses(const game::GameSpec& spec, std::size_t n,
                                                                   Rng& rng) {
  std::vector<game::WorldState> states;
  game::WorldState s = game::reset(spec).first;
  states.push_back(s);
  for (const auto& gold : spec.walkthrough) {
    s = game::step(spec, s, gold).first;
    if (s.ended) break;
    states.push_back(s);
  }
  const std::size_t spine = states.size();
  for (std::size_t i = 0; i < spine; ++i) {
    game::WorldState d = states[i];
    for (int j = 0; j < 3; ++j) {
      const auto adm = game::admissible_actions(spec, d);
      if (adm.empty()) break;
      d = game::step(spec, d, adm[rng.below(adm.size())]).first;
      if (d.ended) break;
      states.push_back(d);
    }
  }
  std::vector<std::pair<std::string, bool>> out;
  std::size_t attempts = 0;
  while (out.size() < n && attempts++ < 100 * n) {
    const auto& st = states[rng.below(states.size())];
    const auto cands = game::template_candidates(spec, st);
    if (cands.empty()) continue;
    std::string action = cands[rng.below(cands.size())];
    if (rng.bernoulli(0.1)) {
      // A verb no game knows, so unknown-verb replies are represented.
      const auto space = action.find(' ');
      action = "xyzzy" + (space == std::string::npos ? std::string() : action.substr(space));
    }
    const auto [next, result] = game::step(spec, st, action);
    out.emplace_back(result.response, result.state_changed);
  }
  return out;
}

FilterMode parse_filter_mode(const std::string& s) {
  if (s == "none") return FilterMode::kNone;
  if (s == "oracle") return FilterMode::kOracle;
  if (s == "textual") return FilterMode::kTextual;
  throw ConfigError("unknown filter mode '" + s + "' (expected none, oracle or textual)");
}

std::string to_string(FilterMode m) {
  switch (m) {
    case FilterMode::kNone: return "none";
    case FilterMode::kOracle: return "oracle";
    case FilterMode::kTextual: return "textual";
  }
  return "none";
}

std::vector<std::string> filter_candidates(const std::vector<std::string>& candidates, FilterMode mode,
                                           const game::GameSpec& spec, const game::WorldState& state,
                                           const TextualFilter* textual) {
  if (mode == FilterMode::kNone) return candidates;
  if (mode == FilterMode::kTextual && (!textual || !textual->trained()))
    throw InvalidArgument("filter_candidates: textual mode needs a trained classifier");
  std::vector<std::string> kept;
  for (const auto& a : candidates) {
    const auto result = game::step(spec, state, a).second;
    const bool ok = mode == FilterMode::kOracle ? result.state_changed : textual->admissible(result.response);
    if (ok) kept.push_back(a);
  }
  return kept.empty() ? candidates : kept;
}

// ---------------------------------------------------------------------------
// Training

void AgentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("agent config: " + m); };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must be in [0, 1]");
  if (k < 1) fail("k must be >= 1");
  if (actors < 1) fail("actors must be >= 1");
  if (steps < 0) fail("steps must be >= 0");
  if (!(temperature >= 0.0)) fail("temperature must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (buffer_capacity < 1) fail("buffer_capacity must be >= 1");
  if (!(best_ratio >= 0.0 && best_ratio <= 1.0)) fail("best_ratio must be in [0, 1]");
  if (warmup < 0) fail("warmup must be >= 0");
  if (update_every < 0) fail("update_every must be >= 0");
  if (max_episode_steps < 1) fail("max_episode_steps must be >= 1");
  if (target_sync < 1) fail("target_sync must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
}

namespace {

struct Actor {
  game::WorldState state;
  Context context;
  std::vector<std::string> candidates;
  std::vector<Experience> trajectory;
  int steps = 0;
  Rng rng;
};

class Runner {
 public:
  Runner(const AgentConfig& cfg, const game::GameSpec& spec, const CandidateSource& source)
      : cfg_(cfg), spec_(spec), source_(source) {
    Rng root(cfg.seed);
    net_rng_seed_ = root.next();
    if (cfg.filter == FilterMode::kTextual) {
      Rng data_rng = root.fork(1000);
      textual_.train(engine_labeled_responses(spec, 2000, data_rng), 30, 0.5, root.next());
    }
    sample_rng_ = root.fork(2000);
    for (int i = 0; i < cfg.actors; ++i) actor_seeds_.push_back(root.next());
  }

  std::uint64_t net_seed() const { return net_rng_seed_; }

  std::vector<std::string> candidates(const Context& c, const game::GameSpec& spec,
                                      const game::WorldState& s) const {
    auto raw = source_.candidates(c, spec, s, cfg_.k);
    if (raw.empty()) raw = game::directions();
    return filter_candidates(raw, cfg_.filter, spec, s, cfg_.filter == FilterMode::kTextual ? &textual_ : nullptr);
  }

  Actor fresh_actor(Rng rng) const {
    Actor a;
    a.rng = rng;
    reset(a);
    return a;
  }

  void reset(Actor& a) const {
    auto [state, obs] = game::reset(spec_);
    a.state = std::move(state);
    a.context = Context{std::string(kPadObservation), std::string(kPadAction), obs};
    a.candidates = candidates(a.context, spec_, a.state);
    a.trajectory.clear();
    a.steps = 0;
  }

  // Advances one actor by one step with the chosen action. Returns the
  // transition; *finished receives the episode score when the episode ends.
  Experience advance(Actor& a, const std::string& action, bool* finished, double* score) const {
    auto [next, result] = game::step(spec_, a.state, action);
    ++a.steps;
    Experience e;
    e.obs = a.context.observation;
    e.action = action;
    e.reward = result.reward;
    e.next_obs = result.observation;
    e.done = result.done;
    Context next_context{a.context.observation, action, result.observation};
    if (!e.done) e.next_candidates = candidates(next_context, spec_, next);
    *finished = e.done || a.steps >= cfg_.max_episode_steps;
    *score = next.score;
    a.trajectory.push_back(e);
    if (!*finished) {
      a.state = std::move(next);
      a.context = std::move(next_context);
      a.candidates = e.next_candidates;
    }
    return e;
  }

  const AgentConfig& cfg_;
  const game::GameSpec& spec_;
  const CandidateSource& source_;
  TextualFilter textual_;
  Rng sample_rng_;
  std::vector<std::uint64_t> actor_seeds_;
  std::uint64_t net_rng_seed_ = 0;
};

int effective_update_every(const AgentConfig& cfg) {
  return cfg.update_every > 0 ? cfg.update_every : cfg.actors;
}

nn::AdamConfig adam_config(const AgentConfig& cfg) {
  nn::AdamConfig a;
  a.lr = cfg.lr;
  a.max_grad_norm = cfg.max_grad_norm;
  return a;
}

void finish_report(TrainingReport& r) {
  const std::size_t n = r.episodes.size();
  const std::size_t from = n > 100 ? n - 100 : 0;
  double sum = 0.0;
  r.max_seen = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= from) sum += r.episodes[i].score;
    r.max_seen = std::max(r.max_seen, r.episodes[i].score);
  }
  r.final_avg_100 = n > from ? sum / static_cast<double>(n - from) : 0.0;
}

TrainResult train_interleaved(const AgentConfig& cfg, const game::GameSpec& spec, const CandidateSource& source,
                              TrainingReport report) {
  Runner run(cfg, spec, source);
  QNetwork net(cfg.q, run.net_seed());
  QNetwork target = net;
  nn::Adam adam(net.parameters(), adam_config(cfg));
  ReplayBuffer replay(cfg.buffer_capacity);
  BestScoreBuffer best(cfg.buffer_capacity);
  const bool learn = cfg.policy == Policy::kDrrn;
  const int every = effective_update_every(cfg);

  std::vector<Actor> actors;
  for (int i = 0; i < cfg.actors; ++i) actors.push_back(run.fresh_actor(Rng(run.actor_seeds_[i])));

  long total = 0;
  long pending = 0;
  while (total < cfg.steps) {
    const int active = static_cast<int>(std::min<long>(cfg.actors, cfg.steps - total));
    std::vector<std::vector<double>> q;
    if (learn) {
      std::vector<std::string> obs;
      std::vector<std::vector<std::string>> cands;
      for (int i = 0; i < active; ++i) {
        obs.push_back(actors[i].context.observation);
        cands.push_back(actors[i].candidates);
      }
      q = net.q_values_batch(obs, cands);
    }
    for (int i = 0; i < active; ++i) {
      Actor& a = actors[i];
      const std::size_t pick = learn ? sample_index(selection_probs(q[i], cfg.temperature), a.rng)
                                     : a.rng.below(a.candidates.size());
      const std::string action = a.candidates[pick];
      bool finished = false;
      double score = 0.0;
      Experience e = run.advance(a, action, &finished, &score);
      ++total;
      if (learn) replay.push(std::move(e));
      if (finished) {
        report.episodes.push_back({static_cast<long>(report.episodes.size()), i, a.steps, score});
        if (learn) best.offer(a.trajectory, score);
        run.reset(a);
      }
    }
    if (!learn || total < cfg.warmup) continue;
    pending += active;
    while (pending >= every) {
      pending -= every;
      auto batch = sample_mixed(replay, best, static_cast<std::size_t>(cfg.batch_size), cfg.best_ratio,
                                run.sample_rng_);
      td_update(net, adam, batch, cfg.gamma, cfg.target_network ? &target : nullptr);
      ++report.updates;
      if (cfg.target_network && report.updates % cfg.target_sync == 0) target = net;
    }
  }
  report.total_steps = total;
  finish_report(report);
  return {std::move(report), std::move(net)};
}

// Actors on their own threads, each acting with a snapshot of the network
// refreshed at episode boundaries; the learner runs on the calling thread.
TrainResult train_threaded(const AgentConfig& cfg, const game::GameSpec& spec, const CandidateSource& source,
                           TrainingReport report) {
  Runner run(cfg, spec, source);
  QNetwork net(cfg.q, run.net_seed());
  QNetwork target = net;
  QNetwork published = net;
  nn::Adam adam(net.parameters(), adam_config(cfg));
  ReplayBuffer replay(cfg.buffer_capacity);
  BestScoreBuffer best(cfg.buffer_capacity);
  const bool learn = cfg.policy == Policy::kDrrn;
  const int every = effective_update_every(cfg);

  std::mutex mu;
  std::condition_variable cv;
  long reserved = 0;
  long total = 0;
  long pending = 0;
  int running = cfg.actors;
  std::exception_ptr failure;

  auto actor_main = [&](int index) {
    try {
      Actor a = run.fresh_actor(Rng(run.actor_seeds_[index]));
      QNetwork local;
      {
        std::lock_guard<std::mutex> lock(mu);
        local = published;
      }
      for (;;) {
        {
          std::lock_guard<std::mutex> lock(mu);
          if (reserved >= cfg.steps || failure) break;
          ++reserved;
        }
        const std::size_t pick =
            learn ? sample_index(selection_probs(local.q_values(a.context.observation, a.candidates),
                                                 cfg.temperature),
                                 a.rng)
                  : a.rng.below(a.candidates.size());
        const std::string action = a.candidates[pick];
        bool finished = false;
        double score = 0.0;
        Experience e = run.advance(a, action, &finished, &score);
        {
          std::lock_guard<std::mutex> lock(mu);
          ++total;
          if (learn) {
            replay.push(std::move(e));
            if (total >= cfg.warmup) ++pending;
          }
          if (finished) {
            report.episodes.push_back({static_cast<long>(report.episodes.size()), index, a.steps, score});
            if (learn) {
              best.offer(a.trajectory, score);
              local = published;
            }
          }
        }
        if (finished) run.reset(a);
        cv.notify_one();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failure) failure = std::current_exception();
    }
    {
      std::lock_guard<std::mutex> lock(mu);
      --running;
    }
    cv.notify_one();
  };

  std::vector<std::thread> threads;
  for (int i = 0; i < cfg.actors; ++i) threads.emplace_back(actor_main, i);

  Rng& sample_rng = run.sample_rng_;
  for (;;) {
    std::vector<Experience> batch_copy;
    {
      std::unique_lock<std::mutex> lock(mu);
      cv.wait(lock, [&] { return running == 0 || (learn && pending >= every); });
      if (!learn || pending < every) {
        if (running == 0) break;
        continue;
      }
      pending -= every;
      for (const Experience* e :
           sample_mixed(replay, best, static_cast<std::size_t>(cfg.batch_size), cfg.best_ratio, sample_rng))
        batch_copy.push_back(*e);
    }
    std::vector<const Experience*> batch;
    for (const auto& e : batch_copy) batch.push_back(&e);
    td_update(net, adam, batch, cfg.gamma, cfg.target_network ? &target : nullptr);
    ++report.updates;
    if (cfg.target_network && report.updates % cfg.target_sync == 0) target = net;
    std::lock_guard<std::mutex> lock(mu);
    published = net;
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  report.total_steps = total;
  finish_report(report);
  return {std::move(report), std::move(net)};
}

}  // namespace

TrainResult train(const AgentConfig& config, const game::GameSpec& spec, const CandidateSource& source,
                  const std::string& game_name) {
  config.validate();
  TrainingReport report;
  report.game = game_name.empty() ? spec.name : game_name;
  report.candidates = config.policy == Policy::kRandom ? "random-" + source.name() : source.name();
  report.max_score = spec.max_score;
  report.config = config;
  if (config.steps == 0) {
    finish_report(report);
    return {std::move(report), QNetwork(config.q, config.seed)};
  }
  return config.deterministic ? train_interleaved(config, spec, source, std::move(report))
                              : train_threaded(config, spec, source, std::move(report));
}

// ---------------------------------------------------------------------------
// Reports

std::string TrainingReport::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = CALM_VERSION;
  j["game"] = game;
  j["candidates"] = candidates;
  j["seed"] = config.seed;
  nlohmann::ordered_json c;
  c["gamma"] = config.gamma;
  c["k"] = config.k;
  c["actors"] = config.actors;
  c["steps"] = config.steps;
  c["temperature"] = config.temperature;
  c["filter"] = to_string(config.filter);
  c["policy"] = config.policy == Policy::kDrrn ? "drrn" : "random";
  c["batch_size"] = config.batch_size;
  c["buffer_capacity"] = config.buffer_capacity;
  c["best_ratio"] = config.best_ratio;
  c["warmup"] = config.warmup;
  c["update_every"] = effective_update_every(config);
  c["max_episode_steps"] = config.max_episode_steps;
  c["target_network"] = config.target_network;
  c["target_sync"] = config.target_sync;
  c["deterministic"] = config.deterministic;
  c["lr"] = config.lr;
  c["max_grad_norm"] = config.max_grad_norm;
  c["q"] = {{"buckets", config.q.buckets},
            {"embedding", config.q.embedding},
            {"hidden", config.q.hidden},
            {"decoder_hidden", config.q.decoder_hidden}};
  j["config"] = c;
  j["summary"] = {{"total_steps", total_steps},
                  {"updates", updates},
                  {"episodes", episodes.size()},
                  {"max_score", max_score},
                  {"final_avg_100", final_avg_100},
                  {"max_seen", max_seen},
                  {"normalized_final", normalized_final()},
                  {"normalized_max", normalized_max()}};
  auto eps = nlohmann::ordered_json::array();
  for (const auto& e : episodes)
    eps.push_back({{"episode", e.episode}, {"actor", e.actor}, {"steps", e.steps}, {"score", e.score}});
  j["episodes"] = std::move(eps);
  return j.dump(2) + "\n";
}

std::string TrainingReport::episodes_csv() const {
  std::ostringstream out;
  out << "# version=" << CALM_VERSION << " game=" << game << " candidates=" << candidates
      << " seed=" << config.seed << "\n";
  out << "episode,actor,steps,score\n";
  for (const auto& e : episodes) out << e.episode << ',' << e.actor << ',' << e.steps << ',' << e.score << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Rollouts

std::string play(const QNetwork& net, const game::GameSpec& spec, const CandidateSource& source, int k,
                 FilterMode filter, int max_steps, double temperature, Rng& rng, double* final_score) {
  TextualFilter textual;
  if (filter == FilterMode::kTextual) {
    Rng data_rng = rng.fork(1000);
    textual.train(engine_labeled_responses(spec, 2000, data_rng), 30, 0.5, rng.next());
  }
  auto [state, obs] = game::reset(spec);
  Context ctx{std::string(kPadObservation), std::string(kPadAction), obs};
  std::ostringstream out;
  out << obs << "\n";
  for (int t = 0; t < max_steps && !state.ended; ++t) {
    auto cands = source.candidates(ctx, spec, state, k);
    if (cands.empty()) cands = game::directions();
    cands = filter_candidates(cands, filter, spec, state, &textual);
    const std::string action = select_action(net, ctx.observation, cands, temperature, rng);
    auto [next, result] = game::step(spec, state, action);
    out << "\n> " << action << "\n" << result.observation << "\n";
    ctx = Context{ctx.observation, action, result.observation};
    state = std::move(next);
  }
  out << "\n[score " << state.score << " / " << spec.max_score << "]\n";
  if (final_score) *final_score = state.score;
  return out.str();
}

}  // namespace calm::drrn
