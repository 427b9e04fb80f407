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

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spin_model.hpp"
#include "tensor.hpp"

namespace ebmflow {

enum class BaseKind { kRbm, kDFlow, kMultiCov, kGaussian };

std::string_view to_string(BaseKind kind);
// Accepts rbm | dflow | multicov | gaussian; throws ConfigError otherwise.
BaseKind parse_base_kind(std::string_view name);
// 2.5 for RBM and MULTICOV, 1.0 for DFLOW, 0 (unused) for GAUSSIAN.
double default_delta(BaseKind kind);

// Expectations under the spin model that enter d(log Z_s): E[s] and E[s_i s_j]
// (zero diagonal).
struct NegativePhase {
  Eigen::VectorXd mean;
  Eigen::MatrixXd second;
};

enum class LogZMode { kExact, kAis };

struct AisSettings {
  std::size_t temps = 1000;
  std::size_t chains = 256;
  std::uint64_t seed = 0;
};

struct LogZEstimate {
  double log_z = 0.0;
  double std_error = 0.0;
};

// Continuous base density p(z).
//
// RBM and DFLOW smooth a spin model: z | s ~ N(s, Jt^{-1}) with Jt = J + delta*I,
// giving
//   log p(z) = -1/2 z'Jt z + sum_i log 2cosh(ht_i(z)) - log Z_z,  ht(z) = Jt z + h,
//   log Z_z  = log Z_s + N/2 log(2 pi) - 1/2 log det Jt + N delta / 2.
// MULTICOV is N(0, Jt^{-1}) with Jt = C C' for a lower-triangular C, and
// GAUSSIAN is N(0, I). Sampling solves against the Cholesky factor L of Jt
// (z = s + L^{-T} eps); the covariance is never formed.
//
// Immutable once built; rebuild after every parameter update.
class SmoothedBase {
 public:
  // Throws PdFailure when J + delta*I has a non-positive pivot and ConfigError
  // for DFLOW with nonzero couplings or delta <= 0.
  static SmoothedBase build(BaseKind kind, SpinModel model, double delta);
  // `cholesky` must be lower triangular with a positive diagonal.
  static SmoothedBase multicov(const Eigen::MatrixXd& cholesky, double delta);
  static SmoothedBase gaussian(std::size_t n);

  BaseKind kind() const { return kind_; }
  std::size_t dim() const { return n_; }
  double delta() const { return delta_; }
  bool has_spins() const { return model_.has_value(); }
  const SpinModel& spin_model() const;
  const Eigen::MatrixXd& jtilde() const { return jtilde_; }
  const Eigen::MatrixXd& jtilde_inverse() const { return jtilde_inv_; }
  const Eigen::MatrixXd& cholesky_lower() const { return chol_; }
  double log_det_jtilde() const { return log_det_; }

  // Per-row log of the unnormalized density.
  Eigen::VectorXd log_unnormalized(const SpinMatrix& z) const;
  double log_unnormalized(std::span<const double> z) const;
  // Gradient of log_unnormalized with respect to each row of z.
  SpinMatrix gradient_z(const SpinMatrix& z) const;
  // tanh(ht(z)) row-wise; the posterior mean E[s | z].
  SpinMatrix spin_posterior_mean(const SpinMatrix& z) const;

  // log Z_z from the spin partition function (ignored by the Gaussian kinds).
  double log_z_continuous(double log_z_s) const;
  double log_prob_z(std::span<const double> z, double log_z_z) const {
    return log_unnormalized(z) - log_z_z;
  }

  struct Draw {
    SpinMatrix z;
    SpinMatrix s;  // conditioning spins; zero rows for the Gaussian kinds
  };
  // Ancestral sampling. RBM spins come from `count` Gibbs chains run for
  // burn_in sweeps; DFLOW spins are drawn exactly from sigmoid(2h).
  Draw sample_z(std::size_t count, std::uint64_t seed, std::size_t burn_in) const;
  // z ~ N(s, Jt^{-1}) for given spin rows.
  SpinMatrix sample_z_given_spins(const SpinMatrix& spins, std::uint64_t seed) const;

 private:
  SmoothedBase() = default;
  void factorize(const Eigen::MatrixXd& jt);

  BaseKind kind_ = BaseKind::kGaussian;
  std::size_t n_ = 0;
  double delta_ = 0.0;
  std::optional<SpinModel> model_;
  Eigen::MatrixXd jtilde_;
  Eigen::MatrixXd jtilde_inv_;
  Eigen::MatrixXd chol_;
  double log_det_ = 0.0;
};

// Continuous log partition function. Analytic for DFLOW, MULTICOV and
// GAUSSIAN in either mode; RBM uses enumeration (n <= 20) or AIS.
LogZEstimate continuous_log_z(const SmoothedBase& base, LogZMode mode, const AisSettings& ais);

// Exact spin expectations where available in closed form (DFLOW: E[s] =
// tanh h) or by enumeration (RBM, n <= 20).
NegativePhase exact_negative_phase(const SmoothedBase& base);

struct BaseGradients {
  Eigen::MatrixXd coupling;  // tied-pair d/dJ_ij, zero diagonal, masked
  Eigen::VectorXd bias;
  double delta = 0.0;  // reported only; delta is never trained
};

// Gradient of the batch-mean log p(z) for RBM / DFLOW bases, with the log Z_s
// term supplied by `negative` (PCD or exact) and the log det / delta terms in
// closed form. DFLOW coupling gradients are masked to zero, RBM gradients to
// the bipartite pattern.
BaseGradients base_grads(const SmoothedBase& base, const SpinMatrix& z_batch,
                         const NegativePhase& negative);

// Trainable raw parameters behind a base kind:
//   RBM       base.coupling (|V| x |H| block of J), base.bias (1 x n)
//   DFLOW     base.bias
//   MULTICOV  base.cholesky (strict lower part = C, diagonal = log C_ii)
//   GAUSSIAN  none
// Couplings start at zero and biases at zero.
class BaseParameters {
 public:
  BaseParameters(BaseKind kind, std::size_t n, double delta);

  BaseKind kind() const { return kind_; }
  std::size_t dim() const { return n_; }
  double delta() const { return delta_; }
  const std::optional<Bipartite>& partition() const { return partition_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  SpinModel spin_model() const;
  // Throws PdFailure when the current values do not give a positive-definite Jt.
  SmoothedBase build() const;

  // Adds tied-pair coupling and bias gradients into the raw parameter grads.
  void accumulate(const Eigen::MatrixXd& d_coupling, const Eigen::VectorXd& d_bias);
  double l2_norm_squared() const;

 private:
  BaseKind kind_;
  std::size_t n_;
  double delta_;
  std::optional<Bipartite> partition_;
  Parameter coupling_;
  Parameter bias_;
  Parameter cholesky_;
};

// Graph primitive: rows x 1 log-unnormalized density of z with hand-written
// vector-Jacobian products into z and the raw base parameters. `base` must
// have been built from `params`' current values.
Var log_unnormalized_op(Graph& g, Var z, const SmoothedBase& base, BaseParameters& params);

// Graph primitive: 1 x 1 log Z_z whose gradient is the negative phase
// d(log Z_s) = E[.] from `negative` plus the closed-form -1/2 d log det Jt.
// The value uses `log_z_s` (only meaningful for reporting).
Var log_partition_op(Graph& g, const SmoothedBase& base, BaseParameters& params,
                     const NegativePhase& negative, double log_z_s);

}  // namespace ebmflow
