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
#include <string_view>
#include <vector>

#include "flow.hpp"
#include "smoothed_base.hpp"

namespace ebmflow {

enum class Dequant { kNone, kUniform, kVariational };

std::string_view to_string(Dequant d);
Dequant parse_dequant(std::string_view name);

struct ModelSpec {
  FlowArchitecture flow;
  BaseKind base = BaseKind::kRbm;
  double delta = 2.5;
  Dequant dequant = Dequant::kNone;
  std::size_t dequant_blocks = 4;
  // Gibbs sweeps per chain before an RBM spin sample is taken.
  std::size_t sample_burn_in = 1000;
};

// log(256) per dimension: the density change from {0..255} to [0, 1).
double dequant_log_scale(std::size_t dims);
// [-log p(x_cont) + D log 256] / (D log 2).
double bits_per_dim(double log_density_cont, std::size_t dims);

struct ModelSamples {
  Tensor x;  // count x D, data space (continuous)
  Tensor z;  // latent draws
  Tensor s;  // conditioning spins (zero rows for the Gaussian kinds)
};

struct Dequantized {
  Var x_cont;  // (x + u) / 256
  Var log_q;   // rows x 1, log density of u under the noise model (0 for uniform)
};

// EBM-Flow: a flow f from data to latent space, a smoothed base density over
// f(x), and an optional dequantizer for 8-bit data.
//   log p(x) = log p_base(f(x)) + log |det df/dx|
//   energy(x) = -(log_unnorm_base(f(x)) + log |det df/dx|)
class EbmFlowModel {
 public:
  EbmFlowModel(const ModelSpec& spec, std::uint64_t seed);
  EbmFlowModel(const EbmFlowModel&) = delete;
  EbmFlowModel& operator=(const EbmFlowModel&) = delete;

  const ModelSpec& spec() const { return spec_; }
  std::size_t dim() const { return spec_.flow.shape.size(); }
  FlowStack& flow() { return flow_; }
  BaseParameters& base_params() { return base_; }
  FlowStack* noise_flow() { return noise_ ? &*noise_ : nullptr; }

  // Flow parameters, then base, then noise flow, in a fixed order.
  std::vector<Parameter*> parameters();

  // Throws PdFailure if the current base parameters are not admissible.
  SmoothedBase build_base() const { return base_.build(); }
  LogZEstimate log_z(const SmoothedBase& base, LogZMode mode, const AisSettings& ais) const;

  // Graph form: rows x 1 of log_unnorm_base(f(x)) + logdet.
  Var log_unnormalized(Graph& g, Var x, const SmoothedBase& base, const FlowContext& ctx = {});

  // Value forms on continuous inputs.
  Eigen::VectorXd log_likelihood(const Tensor& x, const SmoothedBase& base, double log_z);
  Eigen::VectorXd energy_x(const Tensor& x, const SmoothedBase& base);

  // Ancestral sampling: s from the spin model, z ~ N(s, Jt^{-1}), x = f^{-1}(z).
  ModelSamples sample(std::size_t count, std::uint64_t seed);
  // per_column draws for each spin vector; row c * per_column + i belongs to
  // s_list row c.
  Tensor conditional_grid(const Tensor& s_list, std::size_t per_column, std::uint64_t seed);

  // Uniform: u ~ U[0,1). Variational: u = sigmoid(g_x(eps)), eps ~ N(0, I),
  // with log q(u|x) = log N(eps) - logdet g_x - sum log sigmoid'(v).
  Dequantized dequantize(Graph& g, const Tensor& x_discrete, Rng& rng, const FlowContext& ctx = {});

 private:
  ModelSpec spec_;
  FlowStack flow_;
  BaseParameters base_;
  std::optional<FlowStack> noise_;
};

// Pixel values must be integers in [0, 255].
void validate_pixels(const Tensor& x);

}  // namespace ebmflow
