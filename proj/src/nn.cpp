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

#include "calm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "calm/error.hpp"
#include "calm/rng.hpp"

namespace calm::nn {

Linear::Linear(const std::string& name, int in, int out)
    : w(name + ".w", in, out), b(name + ".b", 1, out) {}

void Linear::init(Rng& rng) {
  w.init_uniform(rng, w.value.rows);
  b.init_uniform(rng, w.value.rows);
}

Var Linear::operator()(Tape& tape, Var x) const {
  return add(matmul(x, tape.param(w)), tape.param(b));
}

Gru::Gru(const std::string& name, int in, int hid)
    : input(in),
      hidden(hid),
      wx(name + ".wx", in, 3 * hid),
      uzr(name + ".uzr", hid, 2 * hid),
      un(name + ".un", hid, hid),
      b(name + ".b", 1, 3 * hid) {}

void Gru::init(Rng& rng) {
  for (Parameter* p : {&wx, &uzr, &un, &b}) p->init_uniform(rng, hidden);
}

Var Gru::step(Tape& tape, Var x, Var h) const {
  return step_projected(tape, add(matmul(x, tape.param(wx)), tape.param(b)), h);
}

Var Gru::step_projected(Tape& tape, Var xp, Var h) const {
  const int n = hidden;
  Var gh = matmul(h, tape.param(uzr));
  Var z = sigmoid(add(slice_cols(xp, 0, n), slice_cols(gh, 0, n)));
  Var r = sigmoid(add(slice_cols(xp, n, n), slice_cols(gh, n, n)));
  Var cand = tanh(add(slice_cols(xp, 2 * n, n), matmul(mul(r, h), tape.param(un))));
  return add(h, mul(z, sub(cand, h)));
}

Var run_gru(Tape& tape, const Gru& gru, const Parameter& embeddings,
            const std::vector<std::vector<int>>& tokens, Var h0) {
  const int batch = static_cast<int>(tokens.size());
  if (h0.rows() != batch || h0.cols() != gru.hidden)
    throw ShapeError("run_gru: h0 " + h0.value().shape() + " for batch " + std::to_string(batch));
  std::size_t longest = 0;
  for (const auto& seq : tokens) longest = std::max(longest, seq.size());
  Var h = h0;
  std::vector<int> ids(batch);
  std::vector<char> keep(batch);
  for (std::size_t t = 0; t < longest; ++t) {
    bool all = true;
    for (int r = 0; r < batch; ++r) {
      keep[r] = t < tokens[r].size();
      ids[r] = keep[r] ? tokens[r][t] : 0;
      all = all && keep[r];
    }
    Var next = gru.step(tape, embedding(tape, embeddings, ids), h);
    h = all ? next : select_rows(next, h, keep);
  }
  return h;
}

double global_grad_norm(const ParameterList& params) {
  double s = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.data) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad.data) g *= s;
  }
  return norm;
}

void zero_grads(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

Adam::Adam(ParameterList params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr >= 0.0) || !(config_.eps > 0.0) || config_.beta1 < 0.0 ||
      config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0)
    throw ConfigError("adam: invalid hyperparameters");
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

double Adam::lr_at(long t) const {
  const long w = config_.warmup_steps;
  const long total = config_.total_steps;
  double f = 1.0;
  if (w > 0 && t < w) {
    f = static_cast<double>(t) / static_cast<double>(w);
  } else if (total > 0) {
    f = total > w ? static_cast<double>(std::max(0L, total - t)) / static_cast<double>(total - w) : 0.0;
  }
  return config_.lr * std::clamp(f, 0.0, 1.0);
}

double Adam::step() {
  const double norm = clip_grad_norm(params_, config_.max_grad_norm);
  const double lr = lr_at(t_);
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.value.data[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    p.zero_grad();
  }
  return norm;
}

void save_parameters(std::ostream& out, const ParameterList& params) {
  out << "calm-params 1\n" << params.size() << "\n";
  char buf[40];
  for (const Parameter* p : params) {
    out << p->name << " " << p->value.rows << " " << p->value.cols << "\n";
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", p->value.data[i]);
      out << (i ? " " : "") << buf;
    }
    out << "\n";
  }
}

void load_parameters(std::istream& in, const ParameterList& params) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::string {
    if (!std::getline(in, line)) throw ParseError("parameters", line_no, 0, "unexpected end of checkpoint");
    ++line_no;
    return line;
  };
  if (next() != "calm-params 1") throw ParseError("parameters", line_no, 1, "not a parameter checkpoint");
  std::size_t count = 0;
  try {
    count = std::stoul(next());
  } catch (const std::exception&) {
    throw ParseError("parameters", line_no, 1, "bad parameter count");
  }
  std::unordered_map<std::string, Tensor> loaded;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream head(next());
    std::string name;
    int rows = 0, cols = 0;
    if (!(head >> name >> rows >> cols) || rows < 0 || cols < 0)
      throw ParseError("parameters", line_no, 1, "bad parameter header");
    std::istringstream body(next());
    std::vector<double> values;
    std::string tok;
    while (body >> tok) {
      try {
        values.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ParseError("parameters", line_no, 0, "bad value '" + tok + "'");
      }
    }
    if (values.size() != static_cast<std::size_t>(rows) * cols)
      throw ParseError("parameters", line_no, 0, "wrong value count for " + name);
    loaded[name] = Tensor(rows, cols, std::move(values));
  }
  for (Parameter* p : params) {
    const auto it = loaded.find(p->name);
    if (it == loaded.end()) throw ValidationError("checkpoint lacks parameter " + p->name);
    if (!it->second.same_shape(p->value))
      throw ShapeError("checkpoint parameter " + p->name + " has shape " + it->second.shape() +
                       ", model expects " + p->value.shape());
    p->value = it->second;
    p->grad = Tensor(p->value.rows, p->value.cols);
  }
}

void copy_values(const ParameterList& from, const ParameterList& to) {
  if (from.size() != to.size()) throw ShapeError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (!from[i]->value.same_shape(to[i]->value))
      throw ShapeError("copy_values: " + from[i]->value.shape() + " vs " + to[i]->value.shape());
    to[i]->value = from[i]->value;
  }
}

}  // namespace calm::nn
