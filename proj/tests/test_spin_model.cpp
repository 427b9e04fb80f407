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
#include "spin_model.hpp"

using namespace ebmflow;

namespace {

SpinModel random_rbm(std::size_t n, double scale, Rng& rng) {
  const Bipartite part = Bipartite::halves(n);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t v : part.visible) {
    for (std::size_t h : part.hidden) J(v, h) = J(h, v) = scale * (2.0 * rng.uniform() - 1.0);
  }
  Eigen::VectorXd h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = 0.5 * (2.0 * rng.uniform() - 1.0);
  return SpinModel(J, h, part);
}

}  // namespace

TEST_CASE("energy by hand") {
  SpinModel zero(3);
  const std::vector<double> s{1, -1, 1};
  CHECK(zero.energy(s) == 0.0);
  Eigen::MatrixXd J(2, 2);
  J << 0, 1, 1, 0;
  CHECK(SpinModel(J, Eigen::Vector2d(0, 0)).energy(std::vector<double>{1, 1}) == -1.0);
  CHECK(SpinModel(J, Eigen::Vector2d(0.5, -0.5)).energy(std::vector<double>{1, -1}) == 0.0);
  CHECK_THROWS_AS(zero.energy(std::vector<double>{1, 0.5, 1}), ConfigError);
  CHECK_THROWS_AS(zero.energy(std::vector<double>{1, 1}), ConfigError);
}

TEST_CASE("exact log Z against closed forms and brute force") {
  CHECK(exact_log_z(SpinModel(5)) == doctest::Approx(5 * std::log(2.0)).epsilon(1e-14));
  CHECK(exact_log_z(SpinModel(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, 0.5))) ==
        doctest::Approx(std::log(2.0 * std::cosh(0.5))).epsilon(1e-14));
  Rng rng(3);
  for (std::size_t n = 2; n <= 12; n += 2) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) J(i, j) = J(j, i) = rng.normal() * 0.4;
    }
    Eigen::VectorXd h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = rng.normal();
    const SpinModel m(J, h);
    CHECK(std::abs(exact_log_z(m) - oracle::log_z(J, h)) < 1e-10);
    const SpinMoments mom = exact_moments(m);
    const oracle::Moments ref = oracle::moments(J, h);
    CHECK((mom.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd off = ref.second;
    off.diagonal().setZero();
    CHECK((mom.second - off).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Gibbs conditionals") {
  SUBCASE("uniform at zero field") {
    PcdState st(4000, 1, 5);
    gibbs_sweep(SpinModel(1), st);
    const double mean = st.spins.mean();
    CHECK(std::abs(mean) < 3.0 / std::sqrt(4000.0));
  }
  SUBCASE("strong field pins the spin") {
    PcdState st(1000, 1, 5);
    gibbs_sweep(SpinModel(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, 20.0)), st);
    CHECK(st.spins.minCoeff() == 1.0);
  }
}

TEST_CASE("long chain correlation matches enumeration") {
  Eigen::MatrixXd J(2, 2);
  J << 0, 0.5, 0.5, 0;
  const SpinModel m(J, Eigen::Vector2d::Zero(), Bipartite::halves(2));
  const double exact = oracle::moments(J, Eigen::Vector2d::Zero()).second(0, 1);
  PcdState st(64, 2, 9);
  const NegativeStats stats = pcd_negative_stats(m, st, 2000);
  CHECK(std::abs(stats.second(0, 1) - exact) < 3.0 * stats.second_se(0, 1) + 1e-12);
}

TEST_CASE("PCD statistics") {
  SUBCASE("zero model") {
    PcdState st(256, 3, 2);
    const NegativeStats s = pcd_negative_stats(SpinModel(3, Bipartite::halves(3)), st, 50);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(s.mean[i]) < 3.0 * s.mean_se[i]);
  }
  SUBCASE("single field") {
    PcdState st(256, 1, 2);
    const SpinModel m(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, 1.0), Bipartite::halves(1));
    const NegativeStats s = pcd_negative_stats(m, st, 50);
    CHECK(std::abs(s.mean[0] - std::tanh(1.0)) < 3.0 * s.mean_se[0]);
  }
  SUBCASE("n = 8 RBM against enumeration") {
    Rng rng(21);
    const SpinModel m = random_rbm(8, 0.5, rng);
    const oracle::Moments ref = oracle::moments(m.couplings(), m.biases());
    PcdState st(256, 8, 4);
    pcd_negative_stats(m, st, 100);
    const NegativeStats s = pcd_negative_stats(m, st, 1);
    int outside = 0;
    for (int i = 0; i < 8; ++i) outside += std::abs(s.mean[i] - ref.mean[i]) > 3.0 * s.mean_se[i];
    int pairs_outside = 0;
    for (int i = 0; i < 8; ++i) {
      for (int j = i + 1; j < 8; ++j) pairs_outside += std::abs(s.second(i, j) - ref.second(i, j)) > 3.0 * s.second_se(i, j);
    }
    // 36 statistics at 3 SE: allow the odd excursion.
    CHECK(outside <= 1);
    CHECK(pairs_outside <= 2);
  }
}

TEST_CASE("AIS") {
  SUBCASE("zero couplings reproduce the closed form") {
    const SpinModel m(Eigen::MatrixXd::Zero(4, 4), Eigen::Vector4d(0.1, -0.4, 2.0, 0.0), Bipartite::halves(4));
    const AisEstimate a = ais_log_z(m, 100, 16, 1);
    double ref = 0.0;
    for (int i = 0; i < 4; ++i) ref += std::log(2.0 * std::cosh(m.biases()[i]));
    CHECK(a.log_z == doctest::Approx(ref).epsilon(1e-12));
    CHECK(a.std_error == doctest::Approx(0.0));
  }
  SUBCASE("n = 12 RBM against enumeration") {
    Rng rng(8);
    const SpinModel m = random_rbm(12, 0.2, rng);
    const AisEstimate a = ais_log_z(m, 1000, 256, 17);
    CHECK(std::abs(a.log_z - exact_log_z(m)) < 3.0 * a.std_error);
  }
  SUBCASE("deterministic for a seed") {
    Rng rng(8);
    const SpinModel m = random_rbm(6, 0.5, rng);
    CHECK(ais_log_z(m, 50, 8, 3).log_z == ais_log_z(m, 50, 8, 3).log_z);
  }
}

TEST_CASE("sampled spins follow the enumerated distribution") {
  Rng rng(30);
  const SpinModel m = random_rbm(4, 0.8, rng);
  const SpinMatrix s = sample_spins_gibbs(m, 20000, 50, 12);
  const double lz = oracle::log_z(m.couplings(), m.biases());
  double tv = 0.0;
  for (const auto& cfg : oracle::all_spins(4)) {
    long hits = 0;
    for (long r = 0; r < s.rows(); ++r) hits += (s.row(r).transpose() - cfg).cwiseAbs().sum() == 0.0;
    tv += std::abs(hits / 20000.0 - std::exp(oracle::neg_energy(m.couplings(), m.biases(), cfg) - lz));
  }
  CHECK(0.5 * tv < 0.02);
}

TEST_CASE("log 2cosh is stable") {
  CHECK(log_2cosh(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(log_2cosh(800.0) == doctest::Approx(800.0));
  CHECK(log_2cosh(-800.0) == doctest::Approx(800.0));
}
