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

#ifndef CALM_DRRN_HPP_
#define CALM_DRRN_HPP_

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "calm/context.hpp"
#include "calm/game.hpp"
#include "calm/nn.hpp"
#include "calm/rng.hpp"

namespace calm::drrn {

struct QConfig {
  int buckets = 2048;  // hashed token embedding rows
  int embedding = 24;
  int hidden = 32;          // encoder state size
  int decoder_hidden = 32;  // g's hidden layer
};

// Q(o, a) = g(f_o(o), f_a(a)): two GRU encoders over hashed tokens and an
// MLP on their concatenation.
class QNetwork {
 public:
  QNetwork() : QNetwork(QConfig{}, 0) {}
  QNetwork(QConfig config, std::uint64_t seed);

  const QConfig& config() const { return config_; }
  nn::ParameterList parameters();

  // FNV-1a of each token modulo the bucket count.
  std::vector<int> token_ids(const std::string& text) const;

  nn::Var encode_observations(nn::Tape& tape, const std::vector<std::vector<int>>& texts) const;
  nn::Var encode_actions(nn::Tape& tape, const std::vector<std::vector<int>>& texts) const;
  // Rows of obs and act paired up; n x 1.
  nn::Var decode(nn::Tape& tape, nn::Var obs, nn::Var act) const;

  // One Q per candidate; f_o runs once. Throws InvalidArgument when empty.
  std::vector<double> q_values(const std::string& obs, const std::vector<std::string>& candidates) const;
  // Several states at once, sharing encoder passes.
  std::vector<std::vector<double>> q_values_batch(
      const std::vector<std::string>& obs,
      const std::vector<std::vector<std::string>>& candidates) const;

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  QConfig config_;
  nn::Parameter embeddings_;
  nn::Gru obs_encoder_;
  nn::Gru act_encoder_;
  nn::Linear hidden_;
  nn::Linear out_;
};

// Softmax(Q / temperature); temperature <= 0 puts all mass on the first
// maximum.
std::vector<double> selection_probs(const std::vector<double>& q, double temperature);
std::size_t sample_index(const std::vector<double>& probs, Rng& rng);
std::string select_action(const QNetwork& net, const std::string& obs,
                          const std::vector<std::string>& candidates, double temperature, Rng& rng);

struct Experience {
  std::string obs;
  std::string action;
  double reward = 0.0;
  std::string next_obs;
  std::vector<std::string> next_candidates;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Experience& at(std::size_t i) const { return items_.at(i); }
  void clear() { items_.clear(); next_ = 0; }
  // Uniform with replacement.
  std::vector<const Experience*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Experience> items_;
  std::size_t next_ = 0;
};

// Transitions of the best-scoring trajectories so far.
class BestScoreBuffer {
 public:
  explicit BestScoreBuffer(std::size_t capacity) : buffer_(capacity) {}
  // Keeps the trajectory when score > 0 and score >= best; a strictly better
  // score first discards the older trajectories. Returns whether kept.
  bool offer(const std::vector<Experience>& trajectory, double score);
  double best() const { return best_; }
  const ReplayBuffer& buffer() const { return buffer_; }

 private:
  ReplayBuffer buffer_;
  double best_ = 0.0;
};

// Batch of n with round(ratio * n) drawn from the best-score buffer when it
// is non-empty, the rest from the standard buffer.
std::vector<const Experience*> sample_mixed(const ReplayBuffer& standard, const BestScoreBuffer& best,
                                            std::size_t n, double ratio, Rng& rng);

// r + gamma * max_{a' in next_candidates} Q(o', a'), or r when done.
std::vector<double> td_targets(const QNetwork& net, const std::vector<const Experience*>& batch,
                               double gamma);
// Mean squared error between Q(o, a) and fixed targets.
nn::Var td_loss(nn::Tape& tape, const QNetwork& net, const std::vector<const Experience*>& batch,
                const std::vector<double>& targets);
// Targets from target_net (or net when null), one optimizer step. Returns the
// loss.
double td_update(QNetwork& net, nn::Adam& optimizer, const std::vector<const Experience*>& batch,
                 double gamma, const QNetwork* target_net = nullptr);

// Logistic regression over response bag-of-tokens predicting whether the
// action that produced the response changed the game state.
class TextualFilter {
 public:
  void train(const std::vector<std::pair<std::string, bool>>& labeled, int epochs = 30,
             double lr = 0.5, std::uint64_t seed = 0);
  double p_admissible(const std::string& response) const;
  bool admissible(const std::string& response) const { return p_admissible(response) >= 0.5; }
  bool trained() const { return !weights_.empty(); }

 private:
  std::vector<int> features(const std::string& response) const;
  std::map<std::string, int> vocab_;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

// (response, state_changed) pairs from template candidates tried at states
// along the walkthrough and along random detours.
std::vector<std::pair<std::string, bool>> engine_labeled_responses(const game::GameSpec& spec,
                                                                   std::size_t n, Rng& rng);

enum class FilterMode { kNone, kOracle, kTextual };
FilterMode parse_filter_mode(const std::string& s);
std::string to_string(FilterMode m);

// Never empty: falls back to the input when filtering removes everything.
std::vector<std::string> filter_candidates(const std::vector<std::string>& candidates, FilterMode mode,
                                           const game::GameSpec& spec, const game::WorldState& state,
                                           const TextualFilter* textual = nullptr);

// Where candidate actions come from at each step.
class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual std::vector<std::string> candidates(const Context& context, const game::GameSpec& spec,
                                              const game::WorldState& state, int k) const = 0;
  virtual std::string name() const = 0;
};

class CalmCandidates final : public CandidateSource {
 public:
  explicit CalmCandidates(std::shared_ptr<const ActionModel> model) : model_(std::move(model)) {}
  std::vector<std::string> candidates(const Context& c, const game::GameSpec&,
                                      const game::WorldState&, int k) const override {
    return model_->generate(c, k);
  }
  std::string name() const override { return model_->name(); }

 private:
  std::shared_ptr<const ActionModel> model_;
};

// The engine's admissible set (all of it, regardless of k).
class AdmissibleCandidates final : public CandidateSource {
 public:
  std::vector<std::string> candidates(const Context&, const game::GameSpec& spec,
                                      const game::WorldState& state, int) const override {
    return game::admissible_actions(spec, state);
  }
  std::string name() const override { return "admissible"; }
};

enum class Policy { kDrrn, kRandom };

struct AgentConfig {
  double gamma = 0.9;
  int k = 30;
  int actors = 8;
  long steps = 0;
  double temperature = 1.0;
  FilterMode filter = FilterMode::kNone;
  Policy policy = Policy::kDrrn;
  int batch_size = 64;
  std::size_t buffer_capacity = 100000;
  double best_ratio = 0.5;
  long warmup = 1000;
  int update_every = 0;  // env steps per learner update; 0 = once per round of all actors
  int max_episode_steps = 100;
  bool target_network = false;
  long target_sync = 500;  // learner updates between target refreshes
  bool deterministic = true;
  std::uint64_t seed = 0;
  QConfig q;
  double lr = 1e-3;
  double max_grad_norm = 1.0;

  void validate() const;  // throws ConfigError
};

struct EpisodeRecord {
  long episode = 0;
  int actor = 0;
  int steps = 0;
  double score = 0.0;
};

struct TrainingReport {
  std::string game;
  std::string candidates;
  double max_score = 0.0;
  AgentConfig config;
  std::vector<EpisodeRecord> episodes;
  double final_avg_100 = 0.0;  // mean of the last 100 finished episodes
  double max_seen = 0.0;
  long total_steps = 0;
  long updates = 0;

  double normalized_final() const { return max_score > 0 ? final_avg_100 / max_score : 0.0; }
  double normalized_max() const { return max_score > 0 ? max_seen / max_score : 0.0; }
  std::string to_json() const;
  std::string episodes_csv() const;
};

struct TrainResult {
  TrainingReport report;
  QNetwork network;
};

TrainResult train(const AgentConfig& config, const game::GameSpec& spec, const CandidateSource& source,
                  const std::string& game_name = "");

// Greedy rollout of a trained network; returns the printed transcript.
std::string play(const QNetwork& net, const game::GameSpec& spec, const CandidateSource& source,
                 int k, FilterMode filter, int max_steps, double temperature, Rng& rng,
                 double* final_score = nullptr);

}  // namespace calm::drrn

#endif  // CALM_DRRN_HPP_
