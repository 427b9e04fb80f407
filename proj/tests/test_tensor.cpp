// Copyright 2026 The ebmflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

using namespace ebmflow;

TEST_CASE("forward values of elementwise ops") {
  Graph g;
  const Var v = g.constant(Tensor::from_rows({{2.0}, {-3.0}}));
  const Var eye = g.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  CHECK(g.value(g.matmul(eye, v)) == g.value(v));
  const Var zero = g.constant(Tensor::scalar(0.0).reshaped({1, 1}));
  CHECK(g.value(g.sigmoid(zero))[0] == 0.5);
  CHECK(g.value(g.softplus(zero))[0] == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(g.value(g.tanh(zero))[0] == 0.0);
}

TEST_CASE("backward on small closed forms") {
  SUBCASE("sum gives ones") {
    Parameter p("p", Tensor::from_rows({{1, 2, 3}, {4, 5, 6}}));
    Graph g;
    g.backward(g.sum(g.parameter(p)));
    for (double d : p.grad.values()) CHECK(d == 1.0);
  }
  SUBCASE("sum of squares") {
    Parameter p("p", Tensor::from_rows({{3.0}}));
    Graph g;
    const Var x = g.parameter(p);
    g.backward(g.sum(g.mul(x, x)));
    CHECK(p.grad[0] == 6.0);
  }
  SUBCASE("sigmoid slope at zero times four") {
    Parameter w("w", Tensor::from_rows({{0.0}}));
    Graph g;
    const Var c = g.constant(Tensor::from_rows({{4.0}}));
    g.backward(g.sum(g.mul(g.sigmoid(g.parameter(w)), c)));
    CHECK(w.grad[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("backward runs once per graph") {
  Parameter p("p", Tensor::from_rows({{1.0}}));
  Graph g;
  const Var l = g.sum(g.parameter(p));
  g.backward(l);
  CHECK(g.consumed());
  CHECK_THROWS(g.backward(l));
}

TEST_CASE("shape mismatch is reported") {
  Graph g;
  const Var a = g.constant(Tensor::matrix(2, 3));
  const Var b = g.constant(Tensor::matrix(2, 3));
  CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
  CHECK_THROWS_AS(g.add(a, g.constant(Tensor::matrix(3, 2))), ShapeError);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  // y = x * x + x * x uses x four times.
  Parameter p("p", Tensor::from_rows({{1.5, -2.0}}));
  Graph g;
  const Var x = g.parameter(p);
  const Var xx = g.mul(x, x);
  g.backward(g.sum(g.add(xx, xx)));
  CHECK(p.grad[0] == doctest::Approx(6.0));
  CHECK(p.grad[1] == doctest::Approx(-8.0));
}

TEST_CASE("grad_check on a quadratic form and a constant") {
  Parameter p("p", Tensor::from_rows({{0.3, -0.7, 1.1}}));
  const Tensor a = Tensor::from_rows({{2.0, 0.5, 0.0}, {0.5, 1.0, -0.3}, {0.0, -0.3, 3.0}});
  auto quad = [&](Graph& g) {
    const Var x = g.parameter(p);
    return g.sum(g.mul(g.matmul(x, g.constant(a)), x));
  };
  std::vector<Parameter*> ps{&p};
  CHECK(grad_check(quad, ps, 1e-4).max_relative_error < 1e-7);
  auto constant = [&](Graph& g) {
    g.parameter(p);
    return g.constant(Tensor::from_rows({{5.0}}));
  };
  const GradCheckReport r = grad_check(constant, ps, 1e-4);
  CHECK(r.max_relative_error == 0.0);
  CHECK_THROWS_AS(grad_check(quad, ps, 1e-2), ConfigError);
}

// Property: every differentiable primitive agrees with central differences on
// random inputs.
TEST_CASE("primitive gradients agree with finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor av = Tensor::matrix(3, 4), bv = Tensor::matrix(4, 2), cv = Tensor::matrix(1, 4);
    for (double& v : av.values()) v = rng.normal();
    for (double& v : bv.values()) v = rng.normal();
    for (double& v : cv.values()) v = rng.uniform() + 0.5;
    Parameter a("a", av), b("b", bv), c("c", cv);
    auto f = [&](Graph& g) {
      const Var x = g.parameter(a), w = g.parameter(b), s = g.parameter(c);
      const Var h = g.mul(g.tanh(x), g.log(s));                  // broadcast row
      const Var y = g.matmul(g.add(h, g.sigmoid(x)), w);         // 3 x 2
      const Var z = g.concat_cols(std::vector<Var>{g.softplus(y), g.exp(g.scale(y, 0.3))});
      const Var t = g.take_cols(g.sub(z, g.add_scalar(z, 0.1)), {0, 3, 1});
      const Var r = g.reshape(g.slice_cols(z, 1, 4), 1, 9);
      return g.add(g.sum(g.sum_rows(g.mul(z, z))), g.add(g.sum(t), g.sum(g.mul(r, r))));
    };
    std::vector<Parameter*> ps{&a, &b, &c};
    CHECK(grad_check(f, ps, 1e-5).max_relative_error < 1e-5);
  }
}

TEST_CASE("custom primitive routes its vector-Jacobian product") {
  Parameter p("p", Tensor::from_rows({{0.2, 0.4}}));
  Graph g;
  const Var x = g.parameter(p);
  Tensor value = g.value(x);
  for (double& v : value.values()) v = v * v * v;
  const Tensor xv = g.value(x);
  const Var y = g.custom("cube", {x}, value, [xv](const Tensor& up, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < xv.size(); ++i) (*grads[0])[i] += up[i] * 3.0 * xv[i] * xv[i];
  });
  g.backward(g.sum(y));
  CHECK(p.grad[0] == doctest::Approx(0.12));
  CHECK(p.grad[1] == doctest::Approx(0.48));
}
