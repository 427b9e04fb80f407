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
#include <optional>
#include <span>
#include <vector>

#include "rng.hpp"

namespace ebmflow {

// Visible/hidden split of a restricted Boltzmann machine. Couplings within a
// side are zero, which is what makes block Gibbs updates exact.
struct Bipartite {
  std::vector<std::size_t> visible;
  std::vector<std::size_t> hidden;

  // Visible = [0, ceil(n/2)), hidden = the rest.
  static Bipartite halves(std::size_t n);
  bool operator==(const Bipartite&) const = default;
};

using SpinMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Boltzmann machine over s in {-1,+1}^n with E(s) = -1/2 s'Js - h's.
class SpinModel {
 public:
  explicit SpinModel(std::size_t n, std::optional<Bipartite> partition = std::nullopt);
  SpinModel(Eigen::MatrixXd couplings, Eigen::VectorXd biases,
            std::optional<Bipartite> partition = std::nullopt);

  std::size_t size() const { return static_cast<std::size_t>(h_.size()); }
  const Eigen::MatrixXd& couplings() const { return J_; }
  const Eigen::VectorXd& biases() const { return h_; }
  const std::optional<Bipartite>& partition() const { return partition_; }
  bool is_bipartite() const { return partition_.has_value(); }
  bool has_zero_couplings() const { return J_.isZero(0.0); }

  // Throws ConfigError on wrong length or an entry outside {-1,+1}.
  double energy(std::span<const double> s) const;

 private:
  Eigen::MatrixXd J_;
  Eigen::VectorXd h_;
  std::optional<Bipartite> partition_;
};

// Persistent Gibbs chains, one row per chain, each with its own stream.
struct PcdState {
  PcdState() = default;
  // Chains start from independent uniform spins.
  PcdState(std::size_t chains, std::size_t n, std::uint64_t seed);

  std::size_t chain_count() const { return static_cast<std::size_t>(spins.rows()); }

  SpinMatrix spins;
  std::vector<Rng> streams;
};

struct SweepInfo {
  // False when the model had no bipartite partition and the sweep fell back
  // to sequential single-site updates in index order.
  bool block = true;
};

// One sweep on every chain: all hidden spins given the visible ones, then all
// visible given hidden, with p(s_i=+1|rest) = sigmoid(2(J_i.s + h_i)).
SweepInfo gibbs_sweep(const SpinModel& model, PcdState& state);

// Single chain sweep with couplings scaled by beta (used by AIS).
void gibbs_sweep_chain(const SpinModel& model, std::span<double> s, Rng& rng, double beta = 1.0);

constexpr std::size_t kMaxEnumerationSpins = 24;
constexpr std::size_t kMaxMomentSpins = 20;

// log sum_s exp(-E(s)) by Gray-code enumeration; n <= 24.
double exact_log_z(const SpinModel& model);

// Model expectations. `second` holds E[s_i s_j] off the diagonal and zero on
// it, i.e. d(log Z)/dJ_ij for a tied symmetric pair.
struct SpinMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd second;
  double log_z = 0.0;
};

// Exact moments by enumeration; n <= 20.
SpinMoments exact_moments(const SpinModel& model);

struct AisEstimate {
  double log_z = 0.0;
  double std_error = 0.0;
};

// Annealed importance sampling along beta*J (biases held at h) from the
// zero-coupling model, whose log Z = sum_i log(2 cosh h_i). The beta grid has
// n_temps equally spaced points in [0, 1]; std_error is a bootstrap over
// chains.
AisEstimate ais_log_z(const SpinModel& model, std::size_t n_temps, std::size_t n_chains,
                      std::uint64_t seed);

struct NegativeStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd second;
  Eigen::VectorXd mean_se;
  Eigen::MatrixXd second_se;
};

// Advances every persistent chain by k sweeps and returns chain-averaged
// sufficient statistics with their standard errors.
NegativeStats pcd_negative_stats(const SpinModel& model, PcdState& state, std::size_t k);

// `count` independent chains from uniform starts, each run for burn_in sweeps;
// row c is the final state of chain c.
SpinMatrix sample_spins_gibbs(const SpinModel& model, std::size_t count, std::size_t burn_in,
                              std::uint64_t seed);

// log(2 cosh x), stable for large |x|.
double log_2cosh(double x);

}  // namespace ebmflow
