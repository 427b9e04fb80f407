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

#include "spin_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "errors.hpp"
#include "parallel.hpp"

namespace ebmflow {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double draw_spin(double field, Rng& rng) { return rng.uniform() < sigmoid(2.0 * field) ? 1.0 : -1.0; }

void validate_partition(const Bipartite& p, const Eigen::MatrixXd& J) {
  const auto n = static_cast<std::size_t>(J.rows());
  std::vector<int> side(n, -1);
  auto mark = [&](const std::vector<std::size_t>& idx, int s) {
    for (std::size_t i : idx) {
      if (i >= n || side[i] != -1) throw ConfigError("bipartite partition is not a disjoint cover");
      side[i] = s;
    }
  };
  mark(p.visible, 0);
  mark(p.hidden, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (side[i] == -1) throw ConfigError("bipartite partition is not a disjoint cover");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (side[i] == side[j] && J(i, j) != 0.0) {
        throw ConfigError("coupling J(" + std::to_string(i) + "," + std::to_string(j) +
                          ") connects two spins on the same side of the partition");
      }
    }
  }
}

// Streaming log-sum-exp accumulator.
struct LogSumExp {
  double max = -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  void add(double v) {
    if (v <= max) {
      acc += std::exp(v - max);
    } else {
      acc = acc * std::exp(max - v) + 1.0;
      max = v;
    }
  }
  double value() const { return max + std::log(acc); }
};

// Visits all 2^n states in Gray-code order, calling visit(s, energy).
template <typename Visit>
void enumerate_states(const SpinModel& m, Visit&& visit) {
  const std::size_t n = m.size();
  const Eigen::MatrixXd& J = m.couplings();
  const Eigen::VectorXd& h = m.biases();
  Eigen::VectorXd s = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), -1.0);
  Eigen::VectorXd field = J * s;
  double energy = -0.5 * s.dot(field) - h.dot(s);
  visit(s, energy);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t t = 1; t < total; ++t) {
    const auto i = static_cast<Eigen::Index>(std::countr_zero(t));
    const double ds = -2.0 * s[i];
    energy -= ds * (field[i] + h[i]);
    s[i] += ds;
    field += J.col(i) * ds;
    visit(s, energy);
  }
}

}  // namespace

double log_2cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a));
}

Bipartite Bipartite::halves(std::size_t n) {
  Bipartite b;
  const std::size_t nv = (n + 1) / 2;
  for (std::size_t i = 0; i < n; ++i) (i < nv ? b.visible : b.hidden).push_back(i);
  return b;
}

SpinModel::SpinModel(std::size_t n, std::optional<Bipartite> partition)
    : SpinModel(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), std::move(partition)) {}

SpinModel::SpinModel(Eigen::MatrixXd couplings, Eigen::VectorXd biases,
                     std::optional<Bipartite> partition)
    : J_(std::move(couplings)), h_(std::move(biases)), partition_(std::move(partition)) {
  if (J_.rows() != J_.cols() || J_.rows() != h_.size()) {
    throw ConfigError("spin model: J must be n x n and h of length n");
  }
  if (!J_.allFinite() || !h_.allFinite()) throw NumericError("spin model: non-finite parameters");
  for (Eigen::Index i = 0; i < J_.rows(); ++i) {
    if (J_(i, i) != 0.0) throw ConfigError("spin model: J must have a zero diagonal");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (J_(i, j) != J_(j, i)) throw ConfigError("spin model: J must be symmetric");
    }
  }
  if (partition_) validate_partition(*partition_, J_);
}

double SpinModel::energy(std::span<const double> s) const {
  if (s.size() != size()) {
    throw ConfigError("energy: spin vector has length " + std::to_string(s.size()) + ", expected " +
                      std::to_string(size()));
  }
  for (double v : s) {
    if (v != 1.0 && v != -1.0) throw ConfigError("energy: spin entries must be -1 or +1");
  }
  Eigen::Map<const Eigen::VectorXd> sv(s.data(), static_cast<Eigen::Index>(s.size()));
  return -0.5 * sv.dot(J_ * sv) - h_.dot(sv);
}

PcdState::PcdState(std::size_t chains, std::size_t n, std::uint64_t seed)
    : spins(static_cast<Eigen::Index>(chains), static_cast<Eigen::Index>(n)) {
  Rng root(seed, 0x5eedULL);
  streams.reserve(chains);
  for (std::size_t c = 0; c < chains; ++c) {
    streams.push_back(root.split(c));
    for (std::size_t i = 0; i < n; ++i) {
      spins(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) =
          streams.back().uniform() < 0.5 ? -1.0 : 1.0;
    }
  }
}

void gibbs_sweep_chain(const SpinModel& model, std::span<double> s, Rng& rng, double beta) {
  const Eigen::MatrixXd& J = model.couplings();
  const Eigen::VectorXd& h = model.biases();
  Eigen::Map<Eigen::VectorXd> sv(s.data(), static_cast<Eigen::Index>(s.size()));
  auto update = [&](std::size_t i) {
    const auto k = static_cast<Eigen::Index>(i);
    sv[k] = draw_spin(beta * J.col(k).dot(sv) + h[k], rng);
  };
  if (const auto& p = model.partition()) {
    // Within-side couplings vanish, so updating one side site-by-site equals
    // a joint block update given the other side.
    for (std::size_t i : p->hidden) update(i);
    for (std::size_t i : p->visible) update(i);
  } else {
    for (std::size_t i = 0; i < model.size(); ++i) update(i);
  }
}

SweepInfo gibbs_sweep(const SpinModel& model, PcdState& state) {
  if (static_cast<std::size_t>(state.spins.cols()) != model.size()) {
    throw ConfigError("gibbs_sweep: chain width does not match the model");
  }
  const std::size_t n = model.size();
  parallel_for(state.chain_count(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      gibbs_sweep_chain(model, {state.spins.row(static_cast<Eigen::Index>(c)).data(), n},
                        state.streams[c]);
    }
  });
  return {model.is_bipartite()};
}

double exact_log_z(const SpinModel& model) {
  if (model.size() > kMaxEnumerationSpins) {
    throw ConfigError("exact_log_z: " + std::to_string(model.size()) +
                      " spins exceeds the enumeration limit of " +
                      std::to_string(kMaxEnumerationSpins));
  }
  LogSumExp lse;
  enumerate_states(model, [&](const Eigen::VectorXd&, double e) { lse.add(-e); });
  return lse.value();
}

SpinMoments exact_moments(const SpinModel& model) {
  const std::size_t n = model.size();
  if (n > kMaxMomentSpins) {
    throw ConfigError("exact_moments: " + std::to_string(n) + " spins exceeds the limit of " +
                      std::to_string(kMaxMomentSpins));
  }
  SpinMoments out;
  out.log_z = exact_log_z(model);
  const auto N = static_cast<Eigen::Index>(n);
  out.mean = Eigen::VectorXd::Zero(N);
  out.second = Eigen::MatrixXd::Zero(N, N);
  enumerate_states(model, [&](const Eigen::VectorXd& s, double e) {
    const double w = std::exp(-e - out.log_z);
    out.mean += w * s;
    out.second.noalias() += w * s * s.transpose();
  });
  out.second.diagonal().setZero();
  return out;
}

AisEstimate ais_log_z(const SpinModel& model, std::size_t n_temps, std::size_t n_chains,
                      std::uint64_t seed) {
  if (n_temps < 2) throw ConfigError("ais_log_z: need at least 2 temperatures");
  if (n_chains < 2) throw ConfigError("ais_log_z: need at least 2 chains");
  const std::size_t n = model.size();
  const Eigen::MatrixXd& J = model.couplings();
  const Eigen::VectorXd& h = model.biases();

  double log_z0 = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) log_z0 += log_2cosh(h[i]);

  std::vector<double> log_w(n_chains, 0.0);
  const Rng root(seed, 0xA15ULL);
  parallel_for(n_chains, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd s(static_cast<Eigen::Index>(n));
    for (std::size_t c = begin; c < end; ++c) {
      Rng rng = root.split(c);
      for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = draw_spin(h[i], rng);
      double lw = 0.0;
      double prev_beta = 0.0;
      for (std::size_t k = 1; k < n_temps; ++k) {
        const double beta = static_cast<double>(k) / static_cast<double>(n_temps - 1);
        lw += (beta - prev_beta) * 0.5 * s.dot(J * s);
        prev_beta = beta;
        if (k + 1 < n_temps) gibbs_sweep_chain(model, {s.data(), n}, rng, beta);
      }
      log_w[c] = lw;
    }
  });

  auto log_mean_exp = [](const std::vector<double>& v) {
    LogSumExp lse;
    for (double x : v) lse.add(x);
    return lse.value() - std::log(static_cast<double>(v.size()));
  };

  AisEstimate est;
  est.log_z = log_z0 + log_mean_exp(log_w);

  constexpr std::size_t kBootstrap = 400;
  Rng boot(seed, 0xB007ULL);
  std::vector<double> resample(n_chains), stats(kBootstrap);
  for (std::size_t b = 0; b < kBootstrap; ++b) {
    for (std::size_t c = 0; c < n_chains; ++c) resample[c] = log_w[boot.below(n_chains)];
    stats[b] = log_mean_exp(resample);
  }
  double mean = 0.0;
  for (double v : stats) mean += v;
  mean /= static_cast<double>(kBootstrap);
  double var = 0.0;
  for (double v : stats) var += (v - mean) * (v - mean);
  est.std_error = std::sqrt(var / static_cast<double>(kBootstrap - 1));
  return est;
}

NegativeStats pcd_negative_stats(const SpinModel& model, PcdState& state, std::size_t k) {
  if (state.chain_count() == 0) throw ConfigError("pcd_negative_stats: no chains");
  if (k < 1) throw ConfigError("pcd_negative_stats: k must be at least 1");
  const std::size_t n = model.size();
  if (static_cast<std::size_t>(state.spins.cols()) != n) {
    throw ConfigError("pcd_negative_stats: chain width does not match the model");
  }
  parallel_for(state.chain_count(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      std::span<double> s{state.spins.row(static_cast<Eigen::Index>(c)).data(), n};
      for (std::size_t sweep = 0; sweep < k; ++sweep) gibbs_sweep_chain(model, s, state.streams[c]);
    }
  });

  const auto C = static_cast<double>(state.chain_count());
  NegativeStats out;
  const Eigen::MatrixXd S = state.spins;
  out.mean = S.colwise().mean().transpose();
  out.second = (S.transpose() * S) / C;
  out.second.diagonal().setZero();

  // Spins are +-1, so the per-chain variance of s_i is 1 - mean_i^2 (and
  // likewise for s_i s_j); SE = sqrt(unbiased variance / C).
  const double dof = std::max(C - 1.0, 1.0);
  out.mean_se = ((1.0 - out.mean.array().square()).max(0.0) / dof).sqrt().matrix();
  out.second_se = ((1.0 - out.second.array().square()).max(0.0) / dof).sqrt().matrix();
  out.second_se.diagonal().setZero();
  return out;
}

SpinMatrix sample_spins_gibbs(const SpinModel& model, std::size_t count, std::size_t burn_in,
                              std::uint64_t seed) {
  PcdState chains(count, model.size(), seed);
  const std::size_t n = model.size();
  parallel_for(count, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      std::span<double> s{chains.spins.row(static_cast<Eigen::Index>(c)).data(), n};
      for (std::size_t sweep = 0; sweep < burn_in; ++sweep) {
        gibbs_sweep_chain(model, s, chains.streams[c]);
      }
    }
  });
  return chains.spins;
}

}  // namespace ebmflow
