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

#pragma once

// Reference computations written independently of the library: plain loops,
// no shared helpers.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

// All 2^n spin vectors, bit i of the index set -> s_i = +1.
inline std::vector<Eigen::VectorXd> all_spins(int n) {
  std::vector<Eigen::VectorXd> out;
  for (long m = 0; m < (1L << n); ++m) {
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = (m >> i) & 1 ? 1.0 : -1.0;
    out.push_back(s);
  }
  return out;
}

inline double neg_energy(const Eigen::MatrixXd& J, const Eigen::VectorXd& h, const Eigen::VectorXd& s) {
  return 0.5 * s.dot(J * s) + h.dot(s);
}

inline double log_z(const Eigen::MatrixXd& J, const Eigen::VectorXd& h) {
  std::vector<double> terms;
  double mx = -1e300;
  for (const auto& s : all_spins(static_cast<int>(h.size()))) {
    terms.push_back(neg_energy(J, h, s));
    mx = std::max(mx, terms.back());
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd second;  // full E[s s'], ones on the diagonal
};

inline Moments moments(const Eigen::MatrixXd& J, const Eigen::VectorXd& h) {
  const double lz = log_z(J, h);
  const long n = h.size();
  Moments m{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  for (const auto& s : all_spins(static_cast<int>(n))) {
    const double p = std::exp(neg_energy(J, h, s) - lz);
    m.mean += p * s;
    m.second += p * s * s.transpose();
  }
  return m;
}

// Composite Simpson on [a, b] with an even number of intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int intervals) {
  const double step = (b - a) / intervals;
  double acc = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * step);
  return acc * step / 3.0;
}

inline double simpson2(const std::function<double(double, double)>& f, double a, double b, int intervals) {
  return simpson([&](double x) { return simpson([&](double y) { return f(x, y); }, a, b, intervals); }, a, b,
                 intervals);
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * kPi * var);
}

// Plain-probability mixture of logistics.
inline double mixture_cdf(double x, const std::vector<double>& pi, const std::vector<double>& mu,
                          const std::vector<double>& log_s) {
  double f = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k) f += pi[k] / (1.0 + std::exp(-(x - mu[k]) / std::exp(log_s[k])));
  return f;
}

inline double mixture_pdf(double x, const std::vector<double>& pi, const std::vector<double>& mu,
                          const std::vector<double>& log_s) {
  double f = 0.0;
  for (std::size_t k = 0; k < pi.size(); ++k) {
    const double sc = std::exp(log_s[k]);
    const double e = std::exp(-(x - mu[k]) / sc);
    f += pi[k] * e / (sc * (1.0 + e) * (1.0 + e));
  }
  return f;
}

// log |det| of the central-difference Jacobian of f at x.
inline double fd_log_abs_det(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x, double eps) {
  const long n = x.size();
  Eigen::MatrixXd jac(n, n);
  for (long j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += eps;
    xm[j] -= eps;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * eps);
  }
  return std::log(std::abs(jac.determinant()));
}

}  // namespace oracle
