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

#ifndef CALM_TENSOR_HPP_
#define CALM_TENSOR_HPP_

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace calm {
class Rng;
}

namespace calm::nn {

// Dense row-major matrix of doubles. Vectors are 1 x n rows; a batch is a
// stack of rows.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0);
  Tensor(int r, int c, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  std::string shape() const;
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v);

  bool operator==(const Tensor&) const = default;
};

// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, int rows, int cols);

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
  void init_uniform(Rng& rng, int fan_in);
  void zero_grad() { grad.fill(0.0); }
};

using ParameterList = std::vector<Parameter*>;

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
  double scalar() const { return value().data.at(0); }
};

// Records one forward pass. Not thread-safe; create one per pass. When
// recording is off, values are computed but no backward graph is kept.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor t);
  // Differentiable input whose gradient can be read back with grad().
  Var leaf(Tensor t);
  // Gradients flow into p.grad (only while recording, so inference on a
  // shared read-only model is safe). Repeated calls share one node.
  Var param(const Parameter& p);

  const Tensor& value(Var v) const { return value(nodes_[v.id]); }
  // Gradient of a leaf after backward (empty if never reached).
  const Tensor& grad(Var v) const { return nodes_[v.id].own_grad; }

  // Accumulates d(loss)/d(.) into every reachable parameter and leaf, then
  // drops the backward graph. Loss must be 1 x 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op plumbing.
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;
  Var push(Tensor value, const std::vector<Var>& inputs, Backward backward);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient accumulator of a node; zero-filled on first use.
  Tensor& grad_acc(Var v);

 private:
  struct Node {
    Tensor own;
    Tensor own_grad;
    Parameter* param = nullptr;
    Backward backward;
    bool requires_grad = false;
  };
  static const Tensor& value(const Node& n) { return n.param ? n.param->value : n.own; }

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// Forward ops. Shape errors name both operands.
Var matmul(Var a, Var b);
// Same shapes, or b is a 1 x n row broadcast over a's rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, int begin, int count);
// Rows of a picked by index (with repetition); gradients scatter-add back.
Var gather_rows(Var a, const std::vector<int>& rows);
// Rows of the table parameter; gradients go straight into p.grad.
Var embedding(Tape& tape, const Parameter& table, const std::vector<int>& ids);
// Row r is next[r] when keep[r], else prev[r].
Var select_rows(Var next, Var prev, const std::vector<char>& keep);
Var log_softmax(Var a);
// Sum over rows r with targets[r] >= 0 of -log_softmax(logits)[r, targets[r]].
Var cross_entropy(Var logits, const std::vector<int>& targets);
Var sum(Var a);
Var mean(Var a);

// Numerically safe row-wise softmax / log-sum-exp on plain tensors.
Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

// Plain (non-differentiable) products used by reference code and inference.
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace calm::nn

#endif  // CALM_TENSOR_HPP_
