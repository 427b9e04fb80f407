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

#include "errors.hpp"
#include "oracles.hpp"
#include "smoothed_base.hpp"

using namespace ebmflow;

namespace {

SpinModel random_rbm(std::size_t n, double scale, Rng& rng) {
  const Bipartite part = Bipartite::halves(n);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t v : part.visible) {
    for (std::size_t h : part.hidden) J(v, h) = J(h, v) = scale * (2.0 * rng.uniform() - 1.0);
  }
  Eigen::VectorXd h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = 2.0 * rng.uniform() - 1.0;
  return SpinModel(J, h, part);
}

double exact_log_zz(const SmoothedBase& b) {
  return continuous_log_z(b, LogZMode::kExact, {}).log_z;
}

// Mixture form of the smoothed density: sum_s p(s) N(z; s, Jt^{-1}).
double mixture_density(const SpinModel& m, double delta, const Eigen::VectorXd& z) {
  const Eigen::MatrixXd jt = m.couplings() + delta * Eigen::MatrixXd::Identity(m.size(), m.size());
  const Eigen::MatrixXd cov = jt.inverse();
  const double lz = oracle::log_z(m.couplings(), m.biases());
  const double norm = std::pow(2.0 * oracle::kPi, -0.5 * m.size()) / std::sqrt(cov.determinant());
  double acc = 0.0;
  for (const auto& s : oracle::all_spins(static_cast<int>(m.size()))) {
    const Eigen::VectorXd d = z - s;
    acc += std::exp(oracle::neg_energy(m.couplings(), m.biases(), s) - lz) * norm * std::exp(-0.5 * d.dot(jt * d));
  }
  return acc;
}

}  // namespace

TEST_CASE("build") {
  SUBCASE("dflow with unit delta") {
    const SmoothedBase b = SmoothedBase::build(BaseKind::kDFlow, SpinModel(4), 1.0);
    CHECK(b.jtilde().isIdentity(0.0));
    CHECK(b.log_det_jtilde() == 0.0);
  }
  SUBCASE("diagonal shift") {
    const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, SpinModel(3, Bipartite::halves(3)), 2.5);
    CHECK(b.log_det_jtilde() == doctest::Approx(3 * std::log(2.5)).epsilon(1e-14));
  }
  SUBCASE("indefinite coupling") {
    Eigen::MatrixXd J(2, 2);
    J << 0, -2.6, -2.6, 0;  // eigenvalues +-2.6
    CHECK_THROWS_AS(SmoothedBase::build(BaseKind::kRbm, SpinModel(J, Eigen::Vector2d::Zero(), Bipartite::halves(2)), 2.5),
                    PdFailure);
  }
  SUBCASE("dflow rejects couplings") {
    Eigen::MatrixXd J(2, 2);
    J << 0, 0.1, 0.1, 0;
    CHECK_THROWS_AS(SmoothedBase::build(BaseKind::kDFlow, SpinModel(J, Eigen::Vector2d::Zero()), 1.0), ConfigError);
  }
}

TEST_CASE("densities at known points") {
  const SmoothedBase one = SmoothedBase::build(BaseKind::kDFlow, SpinModel(1), 1.0);
  const double lzz = exact_log_zz(one);
  CHECK(lzz == doctest::Approx(2.112086).epsilon(1e-7));
  const double at0 = one.log_prob_z(std::vector<double>{0.0}, lzz);
  CHECK(std::abs(at0 + 1.418939) < 1e-6);
  CHECK(std::abs(at0 - (-0.5 * std::log(2 * oracle::kPi) - 0.5)) < 1e-12);
  const double mix = std::log(0.5 * oracle::normal_pdf(0, 0, 1) + 0.5 * oracle::normal_pdf(2, 0, 1));
  CHECK(std::abs(one.log_prob_z(std::vector<double>{1.0}, lzz) - mix) < 1e-10);
  const SmoothedBase g = SmoothedBase::gaussian(2);
  CHECK(g.log_prob_z(std::vector<double>{0, 0}, exact_log_zz(g)) == doctest::Approx(-std::log(2 * oracle::kPi)));
}

TEST_CASE("dflow log Z factorizes") {
  for (double delta : {0.5, 1.0, 3.0}) {
    const SmoothedBase b = SmoothedBase::build(BaseKind::kDFlow, SpinModel(5), delta);
    const double ref = 5 * (std::log(2.0) + 0.5 * std::log(2 * oracle::kPi) - 0.5 * std::log(delta) + delta / 2);
    CHECK(exact_log_zz(b) == doctest::Approx(ref).epsilon(1e-13));
  }
}

// Property: the smoothed density equals the spin mixture it was derived from.
TEST_CASE("density equals the Gaussian mixture over spins") {
  Rng rng(4);
  for (std::size_t n : {1u, 2u, 3u, 5u}) {
    const SpinModel m = random_rbm(n, 0.6, rng);
    const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, m, 2.5);
    const double lzz = exact_log_zz(b);
    for (int t = 0; t < 5; ++t) {
      Eigen::VectorXd z(n);
      for (std::size_t i = 0; i < n; ++i) z[i] = 1.5 * rng.normal();
      const std::vector<double> zv(z.data(), z.data() + n);
      CHECK(std::abs(b.log_prob_z(zv, lzz) - std::log(mixture_density(m, 2.5, z))) < 1e-10);
    }
  }
}

TEST_CASE("two-dimensional normalization by quadrature") {
  Rng rng(6);
  const SpinModel m = random_rbm(2, 0.8, rng);
  const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, m, 2.5);
  const double unnorm = oracle::simpson2(
      [&](double x, double y) { return std::exp(b.log_unnormalized(std::vector<double>{x, y})); }, -8, 8, 400);
  CHECK(std::abs(std::log(unnorm) - exact_log_zz(b)) < 1e-6);
}

TEST_CASE("multicov and gaussian") {
  Eigen::MatrixXd c(2, 2);
  c << 1.5, 0, -0.4, 0.7;
  const SmoothedBase b = SmoothedBase::multicov(c, 0.0);
  const double lzz = exact_log_zz(b);
  const Eigen::MatrixXd cov = (c * c.transpose()).inverse();
  for (double x : {-1.0, 0.0, 0.3}) {
    const Eigen::Vector2d z(x, 0.5 - x);
    const double ref = -std::log(2 * oracle::kPi) - 0.5 * std::log(cov.determinant()) - 0.5 * z.dot(cov.inverse() * z);
    CHECK(b.log_prob_z(std::vector<double>{z[0], z[1]}, lzz) == doctest::Approx(ref).epsilon(1e-12));
  }
  const LogZEstimate a = continuous_log_z(SmoothedBase::gaussian(3), LogZMode::kAis, {});
  CHECK(a.log_z == doctest::Approx(1.5 * std::log(2 * oracle::kPi)));
  CHECK(a.std_error == 0.0);
}

TEST_CASE("sampling") {
  SUBCASE("symmetric dflow") {
    const SmoothedBase b = SmoothedBase::build(BaseKind::kDFlow, SpinModel(3), 2.0);
    const SmoothedBase::Draw d = b.sample_z(20000, 3, 0);
    const double sd = std::sqrt(1.0 + 1.0 / 2.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(d.z.col(i).mean()) < 3 * sd / std::sqrt(20000.0));
  }
  SUBCASE("gaussian covariance") {
    const SmoothedBase::Draw d = SmoothedBase::gaussian(4).sample_z(100000, 5, 0);
    const Eigen::MatrixXd cov = d.z.transpose() * d.z / 100000.0;
    // SE of a sample (co)variance of unit normals is at most sqrt(2 / N).
    CHECK((cov - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 3 * std::sqrt(2.0 / 100000));
  }
  SUBCASE("rbm covariance by total covariance") {
    Rng rng(13);
    const SpinModel m = random_rbm(8, 0.4, rng);
    const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, m, 2.5);
    const oracle::Moments mom = oracle::moments(m.couplings(), m.biases());
    const Eigen::MatrixXd ref = b.jtilde_inverse() + mom.second - mom.mean * mom.mean.transpose();
    const std::size_t n = 20000;
    const SmoothedBase::Draw d = b.sample_z(n, 8, 100);
    const Eigen::RowVectorXd mean = d.z.colwise().mean();
    const Eigen::MatrixXd centered = d.z.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
    int outside = 0;
    for (int i = 0; i < 8; ++i) {
      for (int j = i; j < 8; ++j) {
        // Per-entry SE estimated from the products.
        const Eigen::ArrayXd prod = centered.col(i).array() * centered.col(j).array();
        const double se = std::sqrt((prod - prod.mean()).square().mean() / n);
        outside += std::abs(cov(i, j) - ref(i, j)) > 3 * se;
      }
    }
    CHECK(outside <= 1);  // 36 entries at 3 SE
  }
  SUBCASE("fixed seed repeats") {
    const SmoothedBase b = SmoothedBase::build(BaseKind::kDFlow, SpinModel(2), 1.0);
    CHECK(b.sample_z(5, 9, 0).z == b.sample_z(5, 9, 0).z);
  }
}

TEST_CASE("gradient of log density in z") {
  Rng rng(2);
  const SpinModel m = random_rbm(4, 0.7, rng);
  const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, m, 2.5);
  SpinMatrix z(3, 4);
  for (long i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  const SpinMatrix grad = b.gradient_z(z);
  for (long r = 0; r < 3; ++r) {
    for (long c = 0; c < 4; ++c) {
      std::vector<double> up(z.row(r).data(), z.row(r).data() + 4), dn = up;
      up[c] += 1e-5;
      dn[c] -= 1e-5;
      CHECK(grad(r, c) == doctest::Approx((b.log_unnormalized(up) - b.log_unnormalized(dn)) / 2e-5).epsilon(1e-7));
    }
  }
}

TEST_CASE("parameter gradients with the exact negative phase") {
  Rng rng(17);
  const std::size_t n = 6;
  const SpinModel m = random_rbm(n, 0.5, rng);
  SpinMatrix z(5, n);
  for (long i = 0; i < z.size(); ++i) z.data()[i] = 1.2 * rng.normal();
  auto mean_log_prob = [&](const Eigen::MatrixXd& J, const Eigen::VectorXd& h) {
    const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, SpinModel(J, h, m.partition()), 2.5);
    return b.log_unnormalized(z).mean() - exact_log_zz(b);
  };
  const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, m, 2.5);
  const BaseGradients g = base_grads(b, z, exact_negative_phase(b));
  const double eps = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd hp = m.biases(), hm = hp;
    hp[i] += eps;
    hm[i] -= eps;
    const double num = (mean_log_prob(m.couplings(), hp) - mean_log_prob(m.couplings(), hm)) / (2 * eps);
    worst = std::max(worst, std::abs(g.bias[i] - num) / (std::abs(g.bias[i]) + 1e-8));
  }
  const Bipartite part = *m.partition();
  for (std::size_t v : part.visible) {
    for (std::size_t h : part.hidden) {
      Eigen::MatrixXd jp = m.couplings(), jm = jp;
      jp(v, h) += eps, jp(h, v) += eps, jm(v, h) -= eps, jm(h, v) -= eps;
      const double num = (mean_log_prob(jp, m.biases()) - mean_log_prob(jm, m.biases())) / (2 * eps);
      worst = std::max(worst, std::abs(g.coupling(v, h) - num) / (std::abs(g.coupling(v, h)) + 1e-8));
    }
  }
  CHECK(worst < 1e-4);
  for (std::size_t a : part.visible) {
    for (std::size_t c : part.visible) CHECK(g.coupling(a, c) == 0.0);
  }
}

TEST_CASE("symmetric batch gives zero bias gradient") {
  const SmoothedBase b = SmoothedBase::build(BaseKind::kRbm, SpinModel(4, Bipartite::halves(4)), 2.5);
  Rng rng(1);
  SpinMatrix z(20, 4);
  for (long r = 0; r < 10; ++r) {
    for (long c = 0; c < 4; ++c) z(r + 10, c) = -(z(r, c) = rng.normal());
  }
  const BaseGradients g = base_grads(b, z, exact_negative_phase(b));
  CHECK(g.bias.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dflow coupling gradient is masked") {
  const SmoothedBase b = SmoothedBase::build(BaseKind::kDFlow, SpinModel(Eigen::MatrixXd::Zero(3, 3), Eigen::Vector3d(0.3, -1, 0)), 1.0);
  SpinMatrix z = SpinMatrix::Constant(4, 3, 0.7);
  const BaseGradients g = base_grads(b, z, exact_negative_phase(b));
  CHECK(g.coupling.isZero(0.0));
  CHECK(exact_negative_phase(b).mean[0] == doctest::Approx(std::tanh(0.3)));
}

// The graph primitives carry the same gradients into the raw parameters.
TEST_CASE("graph primitives pass grad_check") {
  for (BaseKind kind : {BaseKind::kRbm, BaseKind::kDFlow, BaseKind::kMultiCov}) {
    CAPTURE(to_string(kind));
    BaseParameters params(kind, 4, default_delta(kind));
    Rng rng(29);
    for (Parameter* p : params.parameters()) {
      for (double& v : p->value.values()) v = 0.3 * rng.normal();
    }
    Tensor zv = Tensor::matrix(6, 4);
    for (double& v : zv.values()) v = rng.normal();
    Parameter zp("z", zv);
    auto loss = [&](Graph& g) {
      const SmoothedBase base = params.build();
      const double log_z_s = base.has_spins() ? exact_log_z(base.spin_model()) : 0.0;
      const Var lu = log_unnormalized_op(g, g.parameter(zp), base, params);
      const Var lz = log_partition_op(g, base, params, exact_negative_phase(base), log_z_s);
      return g.sub(g.scale(g.sum(lu), 1.0 / 6.0), lz);
    };
    std::vector<Parameter*> ps = params.parameters();
    ps.push_back(&zp);
    CHECK(grad_check(loss, ps, 1e-5).max_relative_error < 1e-4);
  }
}
