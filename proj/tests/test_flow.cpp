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
#include <memory>
#include <vector>

#include "errors.hpp"
#include "flow.hpp"
#include "oracles.hpp"

using namespace ebmflow;

namespace {

void perturb(std::vector<Parameter*> ps, Rng& rng, double scale) {
  for (Parameter* p : ps) {
    for (double& v : p->value.values()) v += scale * rng.normal();
  }
}

// Zeroes the conditioner and sets its output bias, so the coupling applies
// the same parameters to every input.
void set_constant_outputs(Coupling& c, const std::vector<double>& outputs) {
  for (Parameter* p : c.parameters()) p->value = Tensor(p->value.shape(), 0.0);
  c.net().output_bias().value = Tensor::row(outputs);
}

double raw_for_a(double a) { return 2.0 * std::atanh(a / 2.0); }

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::pair<Tensor, Tensor> run(Layer& layer, const Tensor& x) {
  Graph g;
  const FlowOutput out = layer.forward(g, g.constant(x), {});
  return {g.value(out.y), g.value(out.logdet)};
}

// log |det| of the Jacobian of a single-row map, by central differences.
double fd_logdet(FlowStack& f, const Tensor& row) {
  const std::size_t d = row.cols();
  auto fn = [&](const Eigen::VectorXd& v) {
    Tensor x = Tensor::matrix(1, d);
    for (std::size_t i = 0; i < d; ++i) x[i] = v[i];
    const Tensor z = f.forward_values(x).first;
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(z.data(), d));
  };
  return oracle::fd_log_abs_det(fn, Eigen::Map<const Eigen::VectorXd>(row.data(), d), 1e-6);
}

}  // namespace

TEST_CASE("affine coupling") {
  Rng init(1);
  Coupling c("c", CouplingKind::kAffine, Mask{{0}, {1}}, 0, 8, 0, init);
  SUBCASE("zero parameters are the identity") {
    set_constant_outputs(c, {0.0, 0.0});
    const Tensor x = Tensor::from_rows({{0.3, -1.2}});
    const auto [y, ld] = run(c, x);
    CHECK(y == x);
    CHECK(ld[0] == 0.0);
  }
  SUBCASE("scale and shift") {
    set_constant_outputs(c, {raw_for_a(std::log(2.0)), 1.0});
    const auto [y, ld] = run(c, Tensor::from_rows({{0.5, 3.0}}));
    CHECK(y[1] == doctest::Approx(7.0).epsilon(1e-14));
    CHECK(y[0] == 0.5);
    CHECK(ld[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("round trip") {
    Rng rng(2);
    perturb(c.parameters(), rng, 0.5);
    const Tensor x = random_matrix(50, 2, rng, 2.0);
    CHECK(max_abs_diff(c.inverse(run(c, x).first, {}), x) < 1e-12);
  }
}

TEST_CASE("mixture of logistics scalar forms") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> pi(3), mu(3), ls(3);
    double tot = 0.0;
    for (int k = 0; k < 3; ++k) tot += pi[k] = rng.uniform() + 0.1;
    MixtureParams m;
    for (int k = 0; k < 3; ++k) {
      pi[k] /= tot;
      mu[k] = 2.0 * rng.normal();
      ls[k] = 0.5 * rng.normal();
      m.log_pi.push_back(std::log(pi[k]));
      m.mu.push_back(mu[k]);
      m.log_scale.push_back(ls[k]);
    }
    const double x = 3.0 * rng.normal();
    const double f = oracle::mixture_cdf(x, pi, mu, ls);
    CHECK(mixture_logit_cdf(x, m) == doctest::Approx(std::log(f / (1.0 - f))).epsilon(1e-10));
    CHECK(mixture_log_pdf(x, m) == doctest::Approx(std::log(oracle::mixture_pdf(x, pi, mu, ls))).epsilon(1e-10));
    const double y = 4.0 * rng.normal();
    CHECK(std::abs(mixture_logit_cdf(mixture_inverse_logit_cdf(y, m), m) - y) < 1e-8);
  }
  // Far tails stay finite in the log domain.
  MixtureParams one{{0.0}, {0.0}, {0.0}};
  CHECK(mixture_logit_cdf(-60.0, one) == doctest::Approx(-60.0));
  CHECK(mixture_logit_cdf(60.0, one) == doctest::Approx(60.0));
  CHECK(mixture_inverse_logit_cdf(1.0, one) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mixlogcdf coupling") {
  Rng init(4);
  Coupling c("c", CouplingKind::kMixLogCdf, Mask{{0}, {1}}, 1, 8, 0, init);
  SUBCASE("single standard logistic is the identity") {
    set_constant_outputs(c, {0, 0, 0, 0, 0});
    const Tensor x = Tensor::from_rows({{0.1, 0.7}, {2.0, -3.0}});
    const auto [y, ld] = run(c, x);
    CHECK(max_abs_diff(y, x) < 1e-12);
    CHECK(std::abs(ld[0]) < 1e-12);
  }
  SUBCASE("symmetry point") {
    set_constant_outputs(c, {0, 0, 0, 1, 0});
    const auto [y, ld] = run(c, Tensor::from_rows({{0.0, 1.0}}));
    CHECK(std::abs(y[1]) < 1e-14);
  }
}

TEST_CASE("mixlogcdf logdet and round trip on random parameters") {
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    Rng init(10 + t);
    FlowStack f(2);
    f.add(std::make_unique<Coupling>("c", CouplingKind::kMixLogCdf, Mask{{0}, {1}}, 3, 8, 0, init));
    perturb(f.parameters(), rng, 0.3);
    const Tensor x = random_matrix(20, 2, rng, 2.0);
    const auto [z, ld] = f.forward_values(x);
    for (std::size_t r = 0; r < 20; ++r) {
      const Tensor row = Tensor::row({x(r, 0), x(r, 1)});
      CHECK(std::abs(fd_logdet(f, row) - ld[r]) <= 1e-5 * std::abs(ld[r]) + 1e-8);
    }
    Tensor wide = random_matrix(50, 2, rng, 5.0 / 3.0);
    for (double& v : wide.values()) v = std::clamp(v, -5.0, 5.0);
    CHECK(max_abs_diff(f.inverse(f.forward_values(wide).first), wide) < 1e-8);
    const Tensor y = random_matrix(50, 2, rng, 2.0);
    CHECK(max_abs_diff(f.forward_values(f.inverse(y)).first, y) < 1e-8);
  }
}

TEST_CASE("mixlogcdf primitive gradients") {
  Rng rng(6);
  const std::size_t b = 4, d = 2, k = 3;
  Parameter x("x", random_matrix(b, d, rng, 2.0));
  Parameter lg("logits", random_matrix(b, d * k, rng, 1.0));
  Parameter mu("mu", random_matrix(b, d * k, rng, 1.0));
  Parameter s("s", random_matrix(b, d * k, rng, 0.5));
  auto loss = [&](Graph& g) {
    const Var out = mixlogcdf_op(g, g.parameter(x), g.parameter(lg), g.parameter(mu), g.parameter(s), k);
    const Var w = g.constant(random_matrix(b, 2 * d, *std::make_unique<Rng>(7), 1.0));
    return g.sum(g.mul(out, w));
  };
  std::vector<Parameter*> ps{&x, &lg, &mu, &s};
  CHECK(grad_check(loss, ps, 1e-5).max_relative_error < 1e-5);
}

TEST_CASE("saturated CDF values are counted and stay invertible") {
  const std::size_t before = mixlogcdf_saturations();
  Graph g;
  const Var out = mixlogcdf_op(g, g.constant(Tensor::from_rows({{80.0}})), g.constant(Tensor::from_rows({{0.0}})),
                               g.constant(Tensor::from_rows({{0.0}})), g.constant(Tensor::from_rows({{0.0}})), 1);
  CHECK(g.value(out).all_finite());
  CHECK(g.value(out)(0, 0) == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(mixlogcdf_saturations() > before);
}

TEST_CASE("masks and permutations") {
  const Mask m = checkerboard_mask({1, 1, 4}, 0);
  CHECK(m.part1 == std::vector<std::size_t>{0, 2});
  CHECK(m.part2 == std::vector<std::size_t>{1, 3});
  const Mask flipped = checkerboard_mask({1, 1, 4}, 1);
  CHECK(flipped.part1 == std::vector<std::size_t>{1, 3});

  // 4 x 4 x 1 -> 2 x 2 x 4. Output pixel (0,0) holds inputs 0, 1, 4, 5.
  const std::vector<std::size_t> p = squeeze_permutation({4, 4, 1});
  CHECK(p == std::vector<std::size_t>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
  const std::vector<std::size_t> inv = invert_permutation(p);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[inv[i]] == i);

  Permutation squeeze("squeeze", p);
  Rng rng(1);
  const Tensor x = random_matrix(3, 16, rng, 1.0);
  CHECK(squeeze.inverse(run(squeeze, x).first, {}) == x);

  const Mask ch = channel_mask({2, 2, 4}, 0);
  CHECK(ch.part1.size() == 8);
  CHECK(ch.part1[0] == 0);
  CHECK(ch.part1[1] == 1);
  CHECK(ch.part2[0] == 2);
}

TEST_CASE("actnorm, invertible linear and logit layers") {
  Rng rng(8);
  const EventShape shape{2, 2, 3};
  ActNorm an("an", shape);
  InvertibleLinear il("il", shape, rng);
  LogitPreprocess lp(0.05);
  perturb(an.parameters(), rng, 0.3);
  perturb(il.parameters(), rng, 0.3);
  const Tensor x = random_matrix(4, 12, rng, 1.0);
  for (Layer* l : std::vector<Layer*>{&an, &il}) {
    CHECK(max_abs_diff(l->inverse(run(*l, x).first, {}), x) < 1e-10);
  }
  // Assembled weight against its factor-based log determinant.
  const Tensor w = il.weight();
  Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> wm(w.data());
  CHECK(il.log_abs_det() == doctest::Approx(std::log(std::abs(wm.determinant()))).epsilon(1e-12));
  CHECK(run(il, x).second[0] == doctest::Approx(4 * il.log_abs_det()).epsilon(1e-12));

  Tensor u = Tensor::matrix(4, 12);
  for (double& v : u.values()) v = rng.uniform();
  CHECK(max_abs_diff(lp.inverse(run(lp, u).first, {}), u) < 1e-12);
}

TEST_CASE("invertible linear starts orthogonal") {
  Rng rng(9);
  InvertibleLinear il("il", {1, 1, 4}, rng);
  const Tensor w = il.weight();
  Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> wm(w.data());
  CHECK((wm * wm.transpose() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stacks") {
  SUBCASE("empty stack") {
    FlowStack f(3);
    Rng rng(1);
    const Tensor x = random_matrix(2, 3, rng, 1.0);
    const auto [z, ld] = f.forward_values(x);
    CHECK(z == x);
    CHECK(ld[0] == 0.0);
  }
  SUBCASE("logdets add") {
    Rng init(2);
    FlowStack f(2);
    auto c1 = std::make_unique<Coupling>("a", CouplingKind::kAffine, Mask{{0}, {1}}, 0, 4, 0, init);
    auto c2 = std::make_unique<Coupling>("b", CouplingKind::kAffine, Mask{{1}, {0}}, 0, 4, 0, init);
    set_constant_outputs(*c1, {raw_for_a(0.3), 0.2});
    set_constant_outputs(*c2, {raw_for_a(-0.7), 0.0});
    f.add(std::move(c1));
    f.add(std::move(c2));
    CHECK(f.forward_values(Tensor::from_rows({{1.0, 2.0}})).second[0] == doctest::Approx(-0.4).epsilon(1e-14));
  }
}

// Property: for random parameterizations of the toy architecture, the summed
// logdet equals the log determinant of the numerical Jacobian.
TEST_CASE("toy stack logdet against the numerical Jacobian") {
  Rng rng(12);
  for (std::size_t d : {2u, 3u, 8u}) {
    for (CouplingKind kind : {CouplingKind::kAffine, CouplingKind::kMixLogCdf}) {
      FlowArchitecture arch;
      arch.shape = {1, 1, d};
      arch.coupling = kind;
      arch.width = 8;
      arch.toy_blocks = 3;
      FlowStack f = build_flow(arch, 40 + d);
      perturb(f.parameters(), rng, 0.2);
      const Tensor x = random_matrix(4, d, rng, 1.0);
      const auto [z, ld] = f.forward_values(x);
      for (std::size_t r = 0; r < 4; ++r) {
        Tensor row = Tensor::matrix(1, d);
        std::copy_n(x.data() + r * d, d, row.data());
        CHECK(std::abs(fd_logdet(f, row) - ld[r]) <= 1e-4 * std::abs(ld[r]) + 1e-7);
      }
      CHECK(max_abs_diff(f.inverse(z), x) < 1e-6);
    }
  }
}

TEST_CASE("image stack round trip") {
  FlowArchitecture arch;
  arch.image = true;
  arch.shape = {4, 4, 2};
  arch.width = 8;
  arch.components = 2;
  FlowStack f = build_flow(arch, 3);
  Rng rng(4);
  perturb(f.parameters(), rng, 0.05);
  Tensor x = Tensor::matrix(3, 32);
  for (double& v : x.values()) v = rng.uniform();
  const auto [z, ld] = f.forward_values(x);
  CHECK(z.all_finite());
  CHECK(max_abs_diff(f.inverse(z), x) < 1e-6);
}

TEST_CASE("layer errors carry the layer index") {
  FlowStack f(2);
  f.add(std::make_unique<ActNorm>("an", EventShape{1, 1, 3}));
  try {
    f.forward_values(Tensor::from_rows({{1.0, 2.0}}));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("flow layer 0") != std::string::npos);
  }
}
