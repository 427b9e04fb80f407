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

#include "model.hpp"

#include <cmath>
#include <numbers>

#include "errors.hpp"

namespace ebmflow {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

SpinMatrix to_spins(const Tensor& t) {
  SpinMatrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  std::copy(t.data(), t.data() + t.size(), m.data());
  return m;
}

Tensor from_spins(const SpinMatrix& m) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  std::copy(m.data(), m.data() + m.size(), t.data());
  return t;
}

Eigen::VectorXd column(const Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

FlowStack build_noise_flow(const ModelSpec& spec, std::uint64_t seed) {
  const EventShape shape = spec.flow.shape;
  const std::size_t D = shape.size();
  const Rng root(seed, 0xDE0ULL);
  FlowStack stack(D);
  for (std::size_t i = 0; i < spec.dequant_blocks; ++i) {
    Rng init = root.split(i);
    const std::string prefix = "dequant." + std::to_string(i);
    stack.add(std::make_unique<ActNorm>(prefix + ".actnorm", shape));
    stack.add(std::make_unique<Coupling>(prefix + ".coupling", CouplingKind::kAffine,
                                         checkerboard_mask(shape, static_cast<int>(i % 2)), 0,
                                         spec.flow.width, D, init));
  }
  return stack;
}

}  // namespace

std::string_view to_string(Dequant d) {
  switch (d) {
    case Dequant::kNone: return "none";
    case Dequant::kUniform: return "uniform";
    case Dequant::kVariational: return "variational";
  }
  return "none";
}

Dequant parse_dequant(std::string_view name) {
  if (name == "none") return Dequant::kNone;
  if (name == "uniform") return Dequant::kUniform;
  if (name == "variational") return Dequant::kVariational;
  throw ConfigError("unknown dequantization '" + std::string(name) +
                    "' (expected none, uniform or variational)");
}

double dequant_log_scale(std::size_t dims) { return static_cast<double>(dims) * std::log(256.0); }

double bits_per_dim(double log_density_cont, std::size_t dims) {
  const double D = static_cast<double>(dims);
  return (-log_density_cont + dequant_log_scale(dims)) / (D * std::numbers::ln2);
}

void validate_pixels(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
      throw ConfigError("pixel value " + std::to_string(v) + " outside {0..255}");
    }
  }
}

EbmFlowModel::EbmFlowModel(const ModelSpec& spec, std::uint64_t seed)
    : spec_(spec),
      flow_(build_flow(spec.flow, seed)),
      base_(spec.base, spec.flow.shape.size(), spec.delta) {
  if (spec.dequant == Dequant::kVariational) noise_ = build_noise_flow(spec, seed);
}

std::vector<Parameter*> EbmFlowModel::parameters() {
  std::vector<Parameter*> out = flow_.parameters();
  for (Parameter* p : base_.parameters()) out.push_back(p);
  if (noise_) {
    for (Parameter* p : noise_->parameters()) out.push_back(p);
  }
  return out;
}

LogZEstimate EbmFlowModel::log_z(const SmoothedBase& base, LogZMode mode,
                                 const AisSettings& ais) const {
  return continuous_log_z(base, mode, ais);
}

Var EbmFlowModel::log_unnormalized(Graph& g, Var x, const SmoothedBase& base, const FlowContext& ctx) {
  const FlowOutput out = flow_.forward(g, x, ctx);
  return g.add(log_unnormalized_op(g, out.y, base, base_), out.logdet);
}

Eigen::VectorXd EbmFlowModel::log_likelihood(const Tensor& x, const SmoothedBase& base, double log_z) {
  return (-energy_x(x, base)).array() - log_z;
}

Eigen::VectorXd EbmFlowModel::energy_x(const Tensor& x, const SmoothedBase& base) {
  const auto [z, logdet] = flow_.forward_values(x);
  return -(base.log_unnormalized(to_spins(z)) + column(logdet));
}

ModelSamples EbmFlowModel::sample(std::size_t count, std::uint64_t seed) {
  const SmoothedBase base = build_base();
  ModelSamples out;
  if (count == 0) {
    out.x = out.z = out.s = Tensor::matrix(0, dim());
    return out;
  }
  const SmoothedBase::Draw d = base.sample_z(count, seed, spec_.sample_burn_in);
  out.z = from_spins(d.z);
  out.s = from_spins(d.s);
  out.x = flow_.inverse(out.z);
  return out;
}

Tensor EbmFlowModel::conditional_grid(const Tensor& s_list, std::size_t per_column,
                                      std::uint64_t seed) {
  const SmoothedBase base = build_base();
  if (!base.has_spins()) {
    throw ConfigError("conditional grids need a spin base (rbm or dflow), model has '" +
                      std::string(to_string(base.kind())) + "'");
  }
  if (s_list.rank() != 2 || s_list.cols() != dim()) {
    throw ConfigError("spin list must be k x " + std::to_string(dim()));
  }
  for (double v : s_list.values()) {
    if (v != 1.0 && v != -1.0) throw ConfigError("spin vectors must have entries in {-1, +1}");
  }
  const std::size_t cols = s_list.rows();
  SpinMatrix spins(static_cast<Eigen::Index>(cols * per_column), static_cast<Eigen::Index>(dim()));
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t i = 0; i < per_column; ++i) {
      for (std::size_t j = 0; j < dim(); ++j) {
        spins(static_cast<Eigen::Index>(c * per_column + i), static_cast<Eigen::Index>(j)) = s_list(c, j);
      }
    }
  }
  if (spins.rows() == 0) return Tensor::matrix(0, dim());
  return flow_.inverse(from_spins(base.sample_z_given_spins(spins, seed)));
}

Dequantized EbmFlowModel::dequantize(Graph& g, const Tensor& x_discrete, Rng& rng,
                                     const FlowContext& ctx) {
  if (spec_.dequant == Dequant::kNone) throw ConfigError("model has no dequantizer");
  validate_pixels(x_discrete);
  const std::size_t rows = x_discrete.rows(), D = x_discrete.cols();
  if (D != dim()) throw ShapeError("dequantize: width mismatch");
  Var x = g.constant(x_discrete);
  if (spec_.dequant == Dequant::kUniform) {
    Tensor u = Tensor::matrix(rows, D);
    for (double& v : u.values()) v = rng.uniform();
    return {g.scale(g.add(x, g.constant(std::move(u))), 1.0 / 256.0),
            g.constant(Tensor::matrix(rows, 1))};
  }
  Tensor eps = Tensor::matrix(rows, D);
  Tensor log_n = Tensor::matrix(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = -0.5 * static_cast<double>(D) * kLog2Pi;
    for (std::size_t j = 0; j < D; ++j) {
      const double e = rng.normal();
      eps(r, j) = e;
      acc -= 0.5 * e * e;
    }
    log_n[r] = acc;
  }
  Tensor context = x_discrete;
  for (double& v : context.values()) v = v / 255.0 - 0.5;
  FlowContext noise_ctx = ctx;
  noise_ctx.context = g.constant(context);
  noise_ctx.context_value = nullptr;
  const FlowOutput v = noise_->forward(g, g.constant(std::move(eps)), noise_ctx);
  Var u = g.sigmoid(v.y);
  // log sigmoid'(v) = -softplus(-v) - softplus(v)
  Var log_dsig = g.scale(g.add(g.softplus(g.scale(v.y, -1.0)), g.softplus(v.y)), -1.0);
  Var log_q = g.sub(g.sub(g.constant(std::move(log_n)), v.logdet), g.sum_rows(log_dsig));
  return {g.scale(g.add(x, u), 1.0 / 256.0), log_q};
}

}  // namespace ebmflow
