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

#ifndef CALM_NEURAL_HPP_
#define CALM_NEURAL_HPP_

#include <string>
#include <unordered_map>
#include <vector>

#include "calm/context.hpp"
#include "calm/corpus.hpp"
#include "calm/nn.hpp"

namespace calm::neural {

inline constexpr const char* kUnk = "<unk>";
inline constexpr const char* kObsSep = "[OBS]";
inline constexpr const char* kActSep = "[ACTION]";
inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";

// Token <-> id map. Ids 0..4 are the reserved markers above, in that order;
// ordinary tokens follow by descending frequency, then alphabetically.
class Vocabulary {
 public:
  Vocabulary();
  static Vocabulary build(const std::vector<std::vector<std::string>>& token_lists,
                          std::size_t max_size = 10000);

  int id(const std::string& token) const;  // unknown -> UNK
  const std::string& token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  bool is_special(int id) const { return id < 5; }

  static constexpr int unk() { return 0; }
  static constexpr int obs() { return 1; }
  static constexpr int act() { return 2; }
  static constexpr int bos() { return 3; }
  static constexpr int eos() { return 4; }

  // One token per line; line number = id.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct NeuralConfig {
  int embedding = 32;
  int hidden = 64;
  int max_context = 256;
  int max_action_tokens = 7;  // plus the end marker
  int beam_width = 40;
};

struct ScoredAction {
  std::string action;
  double log_prob = 0.0;
};

struct BeamResult {
  std::vector<ScoredAction> actions;  // best first
  int padding = 0;                    // requested minus returned
};

// GRU encoder-decoder conditional action model. The encoder reads the
// window "[OBS] o_{t-1} [ACTION] a_{t-1} [OBS] o_t" (last max_context
// tokens); its final state seeds the decoder and is also fed to it at every
// step alongside the previous token's embedding.
class NeuralCalm final : public ActionModel {
 public:
  NeuralCalm(Vocabulary vocab, NeuralConfig config, std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  const NeuralConfig& config() const { return config_; }
  nn::ParameterList parameters();

  std::vector<int> context_ids(const Context& c) const;
  std::vector<int> action_ids(const std::string& action) const;  // no markers

  // Encoder states for a batch of contexts (B x hidden).
  nn::Var encode(nn::Tape& tape, const std::vector<std::vector<int>>& contexts) const;

  struct Batch {
    std::vector<std::vector<int>> contexts;
    std::vector<std::vector<int>> actions;
  };
  Batch make_batch(const std::vector<const corpus::Example*>& examples) const;

  // Summed teacher-forced cross-entropy over action tokens plus end markers;
  // *tokens receives the number of predicted tokens.
  nn::Var loss(nn::Tape& tape, const Batch& batch, int* tokens) const;

  // log p(action | context), end marker included.
  double action_logprob(const Context& c, const std::string& action) const;

  // Next-token log-distribution after a given action prefix, recomputed from
  // scratch (1 x |V|).
  nn::Tensor next_log_probs(const Context& c, const std::vector<int>& prefix) const;

  // Beam search without length normalization; max_len counts the end marker.
  // Completed hypotheses are ranked by log-prob, ties by string.
  BeamResult beam_generate(const Context& c, int width, int k, int max_len = 8) const;

  std::vector<std::string> generate(const Context& context, int k) const override;
  std::string name() const override { return "neural"; }

  // <path> holds config + parameters, <path>.vocab the vocabulary.
  void save(const std::string& path) const;
  static NeuralCalm load(const std::string& path);

 private:
  // One decoder step for a batch: returns the new state; logits via output_.
  nn::Var decode_step(nn::Tape& tape, const std::vector<int>& prev, nn::Var ctx,
                      nn::Var h) const;
  bool generatable(int id) const;

  Vocabulary vocab_;
  NeuralConfig config_;
  nn::Parameter embeddings_;
  nn::Gru encoder_;
  nn::Gru decoder_;
  nn::Linear output_;
};

struct TrainOptions {
  int epochs = 3;
  int batch_size = 16;
  double lr = 1e-3;
  long warmup_steps = 0;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;
  bool linear_decay = true;
};

struct EpochStats {
  double train_loss = 0.0;  // running mean per token over the epoch
  double val_loss = 0.0;
};

// Mean per-token loss without recording gradients.
double mean_loss(const NeuralCalm& model, const std::vector<corpus::Example>& examples,
                 int batch_size = 32);

// One shuffled teacher-forced pass; the optimizer steps once per batch.
EpochStats train_epoch(NeuralCalm& model, const std::vector<corpus::Example>& train,
                       const std::vector<corpus::Example>& val, nn::Adam& optimizer,
                       int batch_size, Rng& rng);

std::vector<EpochStats> train(NeuralCalm& model, const std::vector<corpus::Example>& train,
                              const std::vector<corpus::Example>& val,
                              const TrainOptions& options);

// Generic next-phrase examples cut from free text (room and object prose):
// each sentence's first half is the observation, the rest the "action".
std::vector<corpus::Example> pretraining_examples(const std::vector<std::string>& texts,
                                                  std::size_t max_action_tokens = 7);

// Vocabulary over contexts and actions of the given examples.
Vocabulary build_vocabulary(const std::vector<corpus::Example>& examples,
                            std::size_t max_size = 10000);

}  // namespace calm::neural

#endif  // CALM_NEURAL_HPP_
