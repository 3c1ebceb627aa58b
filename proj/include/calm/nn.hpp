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

#ifndef CALM_NN_HPP_
#define CALM_NN_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "calm/tensor.hpp"

namespace calm {
class Rng;
}

namespace calm::nn {

// y = x W + b, W is in x out.
struct Linear {
  Parameter w;
  Parameter b;

  Linear() = default;
  Linear(const std::string& name, int in, int out);
  void init(Rng& rng);
  Var operator()(Tape& tape, Var x) const;
  void collect(ParameterList& out) { out.push_back(&w); out.push_back(&b); }
};

// Gated recurrent unit:
//   z  = sigmoid(x Wz + h Uz + bz)
//   r  = sigmoid(x Wr + h Ur + br)
//   n  = tanh(x Wn + (r * h) Un + bn)
//   h' = (1 - z) * h + z * n
// Input weights are fused as wx = [Wz | Wr | Wn], recurrent gate weights as
// uzr = [Uz | Ur].
struct Gru {
  int input = 0;
  int hidden = 0;
  Parameter wx;   // input x 3h
  Parameter uzr;  // hidden x 2h
  Parameter un;   // hidden x hidden
  Parameter b;    // 1 x 3h

  Gru() = default;
  Gru(const std::string& name, int input, int hidden);
  void init(Rng& rng);
  Var step(Tape& tape, Var x, Var h) const;
  // Same cell given the precomputed x wx + b for this step.
  Var step_projected(Tape& tape, Var xproj, Var h) const;
  void collect(ParameterList& out) {
    out.push_back(&wx); out.push_back(&uzr); out.push_back(&un); out.push_back(&b);
  }
};

// Runs a GRU over a padded batch. tokens[r] is row r's embedded sequence
// (a T_r x input tensor is not materialized; rows are looked up per step).
// Rows stop updating after their own length. Returns the final hidden states
// (B x hidden).
Var run_gru(Tape& tape, const Gru& gru, const Parameter& embeddings,
            const std::vector<std::vector<int>>& tokens, Var h0);

double global_grad_norm(const ParameterList& params);
// Scales all gradients by max_norm / norm when norm exceeds max_norm; returns
// the pre-clip norm.
double clip_grad_norm(const ParameterList& params, double max_norm);
void zero_grads(const ParameterList& params);

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
  long warmup_steps = 0;
  long total_steps = 0;        // 0: constant after warmup
};

// Adam with global-norm clipping and a linear warmup / linear decay schedule.
class Adam {
 public:
  Adam(ParameterList params, AdamConfig config);

  // Learning rate used by update number t (0-based).
  double lr_at(long t) const;
  // Clip, update, zero grads. Returns the pre-clip gradient norm.
  double step();

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParameterList params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

// Text checkpoint: "calm-params 1", count, then per parameter a
// "name rows cols" line followed by one line of %.17g values.
void save_parameters(std::ostream& out, const ParameterList& params);
// Loads by name into params; every parameter must be present with its shape.
void load_parameters(std::istream& in, const ParameterList& params);

// Copies values between structurally identical lists (snapshots).
void copy_values(const ParameterList& from, const ParameterList& to);

}  // namespace calm::nn

#endif  // CALM_NN_HPP_
