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

#include "calm/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "calm/error.hpp"
#include "calm/rng.hpp"

namespace calm::nn {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape() + " and " +
                   b.shape());
}

void add_into(Tensor& dst, const Tensor& src, double s = 1.0) {
  const std::size_t n = dst.size();
  double* d = dst.data.data();
  const double* x = src.data.data();
  for (std::size_t i = 0; i < n; ++i) d[i] += s * x[i];
}

// c += a * b.
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b.row(p);
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c += a * b^T. b is transposed first so the inner loop is a contiguous axpy.
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.rows;
  std::vector<double> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    const double* bj = b.row(j);
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = bj[p];
  }
  for (int i = 0; i < m; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = bt.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c += a^T * b.
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const double* ai = a.row(i);
    const double* bi = b.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c.row(p);
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

Tensor map(const Tensor& a, double (*f)(double)) {
  Tensor out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor / Parameter

Tensor::Tensor(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
  if (r < 0 || c < 0) throw ShapeError("negative tensor dimension");
}

Tensor::Tensor(int r, int c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (r < 0 || c < 0 || data.size() != static_cast<std::size_t>(r) * c)
    throw ShapeError("tensor " + shape() + " given " + std::to_string(data.size()) +
                     " values");
}

std::string Tensor::shape() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

Parameter::Parameter(std::string n, int rows, int cols)
    : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

void Parameter::init_uniform(Rng& rng, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (auto& v : value.data) v = rng.uniform(-bound, bound);
}

const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor t) {
  Node n;
  n.own = std::move(t);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor t) {
  Var v = constant(std::move(t));
  nodes_[v.id].requires_grad = record_;
  return v;
}

Var Tape::param(const Parameter& cp) {
  auto& p = const_cast<Parameter&>(cp);
  const auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.param = &p;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_[&p] = id;
  return {this, id};
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  Node n;
  n.own = std::move(value);
  if (record_) {
    for (const Var& in : inputs)
      if (nodes_[in.id].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_acc(Var v) {
  Node& n = nodes_[v.id];
  if (n.param) {
    if (!n.param->grad.same_shape(n.param->value))
      n.param->grad = Tensor(n.param->value.rows, n.param->value.cols);
    return n.param->grad;
  }
  if (n.own_grad.size() != n.own.size()) n.own_grad = Tensor(n.own.rows, n.own.cols);
  return n.own_grad;
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1)
    throw ShapeError("backward: loss must be 1x1, got " + lv.shape());
  if (!nodes_[loss.id].requires_grad) return;
  grad_acc(loss).data[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.backward || n.own_grad.size() == 0) continue;
    Backward fn = std::move(n.backward);
    n.backward = nullptr;
    fn(*this, n.own_grad);
  }
  for (auto& n : nodes_) n.backward = nullptr;
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  Tensor c(a.rows, b.cols);
  gemm_nn(a, b, c);
  return c;
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  Tensor out = matmul(a.value(), b.value());
  return t.push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) gemm_nt(g, b.value(), t.grad_acc(a));
    if (t.requires_grad(b)) gemm_tn(a.value(), g, t.grad_acc(b));
  });
}

namespace {

Var add_scaled(Var a, Var b, double sb, const char* op) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool broadcast = bv.rows == 1 && av.rows != 1 && bv.cols == av.cols;
  if (!broadcast && !av.same_shape(bv)) shape_error(op, av, bv);
  Tensor out = av;
  if (broadcast) {
    for (int r = 0; r < av.rows; ++r) {
      double* o = out.row(r);
      for (int c = 0; c < av.cols; ++c) o[c] += sb * bv.data[c];
    }
  } else {
    add_into(out, bv, sb);
  }
  return a.tape->push(std::move(out), {a, b}, [a, b, sb, broadcast](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) add_into(t.grad_acc(a), g);
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_acc(b);
      if (broadcast) {
        for (int r = 0; r < g.rows; ++r) {
          const double* gr = g.row(r);
          for (int c = 0; c < g.cols; ++c) gb.data[c] += sb * gr[c];
        }
      } else {
        add_into(gb, g, sb);
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return add_scaled(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_scaled(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out(av.rows, av.cols);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_acc(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data) v *= s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
    add_into(t.grad_acc(a), g, s);
  });
}

Var one_minus(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data) v = 1.0 - v;
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    add_into(t.grad_acc(a), g, -1.0);
  });
}

Var tanh(Var a) {
  Tensor out = map(a.value(), [](double x) { return std::tanh(x); });
  const int id = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), {a}, [a, id](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(Var{&t, id});
    Tensor& ga = t.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var sigmoid(Var a) {
  Tensor out = map(a.value(), sigmoid_scalar);
  const int id = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), {a}, [a, id](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(Var{&t, id});
    Tensor& ga = t.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Var relu(Var a) {
  Tensor out = map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return a.tape->push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    Tensor& ga = t.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data[i] > 0.0) ga.data[i] += g.data[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  int off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (int r = 0; r < rows; ++r) std::copy(v.row(r), v.row(r) + v.cols, out.row(r) + off);
    off += v.cols;
  }
  return parts[0].tape->push(std::move(out), parts, [parts](Tape& t, const Tensor& g) {
    int off = 0;
    for (const Var& p : parts) {
      const int c = p.cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_acc(p);
        for (int r = 0; r < g.rows; ++r) {
          const double* gr = g.row(r) + off;
          double* dst = gp.row(r);
          for (int j = 0; j < c; ++j) dst[j] += gr[j];
        }
      }
      off += c;
    }
  });
}

Var slice_cols(Var a, int begin, int count) {
  const Tensor& v = a.value();
  if (begin < 0 || count < 0 || begin + count > v.cols)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + v.shape());
  Tensor out(v.rows, count);
  for (int r = 0; r < v.rows; ++r) std::copy(v.row(r) + begin, v.row(r) + begin + count, out.row(r));
  return a.tape->push(std::move(out), {a}, [a, begin, count](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_acc(a);
    for (int r = 0; r < g.rows; ++r) {
      const double* gr = g.row(r);
      double* dst = ga.row(r) + begin;
      for (int j = 0; j < count; ++j) dst[j] += gr[j];
    }
  });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  const Tensor& v = a.value();
  Tensor out(static_cast<int>(rows.size()), v.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= v.rows)
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + v.shape());
    std::copy(v.row(rows[i]), v.row(rows[i]) + v.cols, out.row(static_cast<int>(i)));
  }
  return a.tape->push(std::move(out), {a}, [a, rows](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_acc(a);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* gr = g.row(static_cast<int>(i));
      double* dst = ga.row(rows[i]);
      for (int j = 0; j < g.cols; ++j) dst[j] += gr[j];
    }
  });
}

Var embedding(Tape& tape, const Parameter& table, const std::vector<int>& ids) {
  const Tensor& v = table.value;
  Tensor out(static_cast<int>(ids.size()), v.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v.rows)
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " out of range for " + v.shape());
    std::copy(v.row(ids[i]), v.row(ids[i]) + v.cols, out.row(static_cast<int>(i)));
  }
  auto* p = const_cast<Parameter*>(&table);
  Tape::Backward fn;
  std::vector<Var> inputs;
  if (tape.recording()) {
    inputs.push_back(tape.leaf(Tensor()));  // marks the node as differentiable
    fn = [p, ids](Tape&, const Tensor& g) {
      if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows, p->value.cols);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* gr = g.row(static_cast<int>(i));
        double* dst = p->grad.row(ids[i]);
        for (int j = 0; j < g.cols; ++j) dst[j] += gr[j];
      }
    };
  }
  return tape.push(std::move(out), inputs, std::move(fn));
}

Var select_rows(Var next, Var prev, const std::vector<char>& keep) {
  const Tensor& nv = next.value();
  const Tensor& pv = prev.value();
  if (!nv.same_shape(pv)) shape_error("select_rows", nv, pv);
  if (keep.size() != static_cast<std::size_t>(nv.rows))
    throw ShapeError("select_rows: mask length " + std::to_string(keep.size()) + " for " + nv.shape());
  Tensor out(nv.rows, nv.cols);
  for (int r = 0; r < nv.rows; ++r) {
    const double* src = keep[r] ? nv.row(r) : pv.row(r);
    std::copy(src, src + nv.cols, out.row(r));
  }
  return next.tape->push(std::move(out), {next, prev}, [next, prev, keep](Tape& t, const Tensor& g) {
    for (int r = 0; r < g.rows; ++r) {
      const Var dst = keep[r] ? next : prev;
      if (!t.requires_grad(dst)) continue;
      double* d = t.grad_acc(dst).row(r);
      const double* gr = g.row(r);
      for (int j = 0; j < g.cols; ++j) d[j] += gr[j];
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  Tensor out(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    const double m = *std::max_element(xr, xr + x.cols);
    double s = 0.0;
    for (int c = 0; c < x.cols; ++c) s += std::exp(xr[c] - m);
    const double lse = m + std::log(s);
    double* o = out.row(r);
    for (int c = 0; c < x.cols; ++c) o[c] = xr[c] - lse;
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = log_softmax_rows(x);
  for (auto& v : out.data) v = std::exp(v);
  return out;
}

Var log_softmax(Var a) {
  Tensor out = log_softmax_rows(a.value());
  const int id = static_cast<int>(a.tape->size());
  return a.tape->push(std::move(out), {a}, [a, id](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(Var{&t, id});
    Tensor& ga = t.grad_acc(a);
    for (int r = 0; r < g.rows; ++r) {
      const double* gr = g.row(r);
      const double* yr = y.row(r);
      double gs = 0.0;
      for (int c = 0; c < g.cols; ++c) gs += gr[c];
      double* d = ga.row(r);
      for (int c = 0; c < g.cols; ++c) d[c] += gr[c] - std::exp(yr[c]) * gs;
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& targets) {
  const Tensor& x = logits.value();
  if (targets.size() != static_cast<std::size_t>(x.rows))
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + x.shape());
  Tensor lsm = log_softmax_rows(x);
  double loss = 0.0;
  for (int r = 0; r < x.rows; ++r) {
    if (targets[r] < 0) continue;
    if (targets[r] >= x.cols)
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) + " out of range for " + x.shape());
    loss -= lsm(r, targets[r]);
  }
  return logits.tape->push(Tensor(1, 1, loss), {logits},
                           [logits, targets, lsm = std::move(lsm)](Tape& t, const Tensor& g) {
                             Tensor& gl = t.grad_acc(logits);
                             const double s = g.data[0];
                             for (int r = 0; r < lsm.rows; ++r) {
                               if (targets[r] < 0) continue;
                               double* d = gl.row(r);
                               const double* l = lsm.row(r);
                               for (int c = 0; c < lsm.cols; ++c) d[c] += s * std::exp(l[c]);
                               d[targets[r]] -= s;
                             }
                           });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.tape->push(Tensor(1, 1, s), {a}, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_acc(a);
    for (auto& v : ga.data) v += g.data[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

}  // namespace calm::nn
