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

#ifndef CALM_TESTS_OP_CASES_HPP_
#define CALM_TESTS_OP_CASES_HPP_

#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace calm::testing {

struct OpCase {
  std::string name;
  // Builds a random instance from the seed and returns its gradient check.
  std::function<GradCheck(std::uint64_t seed)> run;
};

// One finite-difference case per differentiable op, plus composed GRU cases.
inline std::vector<OpCase> op_gradient_cases() {
  using namespace nn;
  auto dims = [](Rng& rng) { return 1 + static_cast<int>(rng.below(4)); };
  std::vector<OpCase> cases;

  auto binary = [&](const std::string& name, Var (*op)(Var, Var), bool broadcast) {
    cases.push_back({name, [=](std::uint64_t seed) {
      Rng rng(seed);
      const int m = dims(rng) + (broadcast ? 1 : 0), n = dims(rng);
      Parameter a("a", m, n), b("b", broadcast ? 1 : m, n);
      randomize(a, rng);
      randomize(b, rng);
      return check_gradients({&a, &b}, [&](Tape& t) {
        return weighted_sum(op(t.param(a), t.param(b)), seed);
      });
    }});
  };
  binary("add", add, false);
  binary("add-broadcast", add, true);
  binary("sub", sub, false);
  binary("mul", mul, false);

  auto unary = [&](const std::string& name, std::function<Var(Var)> op, double gap) {
    cases.push_back({name, [=](std::uint64_t seed) {
      Rng rng(seed);
      const int m = dims(rng), n = dims(rng);
      Parameter a("a", m, n);
      randomize(a, rng, 2.0);
      for (auto& v : a.value.data)
        if (std::abs(v) < gap) v += v < 0 ? -gap : gap;
      return check_gradients({&a}, [&](Tape& t) { return weighted_sum(op(t.param(a)), seed); });
    }});
  };
  unary("scale", [](Var a) { return scale(a, -1.7); }, 0.0);
  unary("one_minus", one_minus, 0.0);
  unary("tanh", [](Var a) { return nn::tanh(a); }, 0.0);
  unary("sigmoid", sigmoid, 0.0);
  unary("relu", relu, 0.1);
  unary("log_softmax", log_softmax, 0.0);
  unary("mean", [](Var a) { return scale(mean(a), 3.0); }, 0.0);
  unary("slice_cols", [](Var a) {
    const int c = a.cols();
    return slice_cols(a, c / 2, c - c / 2);
  }, 0.0);

  cases.push_back({"matmul", [=](std::uint64_t seed) {
    Rng rng(seed);
    const int m = dims(rng), k = dims(rng), n = dims(rng);
    Parameter a("a", m, k), b("b", k, n);
    randomize(a, rng);
    randomize(b, rng);
    return check_gradients({&a, &b}, [&](Tape& t) {
      return weighted_sum(matmul(t.param(a), t.param(b)), seed);
    });
  }});

  cases.push_back({"concat_cols", [=](std::uint64_t seed) {
    Rng rng(seed);
    const int m = dims(rng);
    Parameter a("a", m, dims(rng)), b("b", m, dims(rng)), c("c", m, dims(rng));
    for (Parameter* p : {&a, &b, &c}) randomize(*p, rng);
    return check_gradients({&a, &b, &c}, [&](Tape& t) {
      // b appears twice to exercise accumulation.
      return weighted_sum(concat_cols({t.param(a), t.param(b), t.param(c), t.param(b)}), seed);
    });
  }});

  cases.push_back({"gather_rows", [=](std::uint64_t seed) {
    Rng rng(seed);
    const int m = dims(rng), n = dims(rng);
    Parameter a("a", m, n);
    randomize(a, rng);
    std::vector<int> rows;
    for (int i = 0; i < 6; ++i) rows.push_back(static_cast<int>(rng.below(m)));
    return check_gradients({&a}, [&](Tape& t) { return weighted_sum(gather_rows(t.param(a), rows), seed); });
  }});

  cases.push_back({"embedding", [=](std::uint64_t seed) {
    Rng rng(seed);
    Parameter table("table", 5, dims(rng));
    randomize(table, rng);
    std::vector<int> ids;
    for (int i = 0; i < 7; ++i) ids.push_back(static_cast<int>(rng.below(5)));
    return check_gradients({&table}, [&](Tape& t) { return weighted_sum(embedding(t, table, ids), seed); });
  }});

  cases.push_back({"select_rows", [=](std::uint64_t seed) {
    Rng rng(seed);
    const int m = dims(rng) + 1, n = dims(rng);
    Parameter a("a", m, n), b("b", m, n);
    randomize(a, rng);
    randomize(b, rng);
    std::vector<char> keep(m);
    for (auto& k : keep) k = rng.bernoulli(0.5);
    return check_gradients({&a, &b}, [&](Tape& t) {
      return weighted_sum(select_rows(nn::tanh(t.param(a)), t.param(b), keep), seed);
    });
  }});

  cases.push_back({"cross_entropy", [=](std::uint64_t seed) {
    Rng rng(seed);
    const int m = dims(rng) + 1, n = dims(rng) + 1;
    Parameter a("a", m, n);
    randomize(a, rng, 3.0);
    std::vector<int> targets;
    for (int r = 0; r < m; ++r) targets.push_back(static_cast<int>(rng.below(n)));
    targets[0] = -1;  // ignored row
    return check_gradients({&a}, [&](Tape& t) { return cross_entropy(t.param(a), targets); });
  }});

  cases.push_back({"gru_step", [=](std::uint64_t seed) {
    Rng rng(seed);
    const int batch = dims(rng), in = dims(rng), hid = dims(rng);
    Gru gru("gru", in, hid);
    gru.init(rng);
    Parameter x("x", batch, in), h("h", batch, hid);
    randomize(x, rng);
    randomize(h, rng);
    ParameterList params{&x, &h};
    gru.collect(params);
    return check_gradients(params, [&](Tape& t) {
      Var h1 = gru.step(t, t.param(x), t.param(h));
      return weighted_sum(gru.step(t, t.param(x), h1), seed);
    });
  }});

  cases.push_back({"gru_sequence", [=](std::uint64_t seed) {
    Rng rng(seed);
    const int vocab = 6, emb = dims(rng), hid = dims(rng);
    Gru gru("enc", emb, hid);
    gru.init(rng);
    Parameter table("emb", vocab, emb), h0("h0", 3, hid);
    randomize(table, rng);
    randomize(h0, rng, 0.5);
    std::vector<std::vector<int>> seqs(3);
    for (auto& s : seqs) {
      const auto len = rng.below(5);
      for (std::uint64_t i = 0; i < len; ++i) s.push_back(static_cast<int>(rng.below(vocab)));
    }
    ParameterList params{&table, &h0};
    gru.collect(params);
    return check_gradients(params, [&](Tape& t) {
      return weighted_sum(run_gru(t, gru, table, seqs, t.param(h0)), seed);
    });
  }});

  return cases;
}

}  // namespace calm::testing

#endif  // CALM_TESTS_OP_CASES_HPP_
