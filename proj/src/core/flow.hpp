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

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace ebmflow {

// Spatial layout of one example, stored flat in HWC order. Toy vectors are
// 1 x 1 x D.
struct EventShape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  std::size_t pixels() const { return height * width; }
  bool operator==(const EventShape&) const = default;
};

// Index partition (part1 is passed through, part2 is transformed).
struct Mask {
  std::vector<std::size_t> part1;
  std::vector<std::size_t> part2;
};

// Checkerboard split. For 1 x 1 x D shapes this is the even/odd split of the
// flat index; otherwise whole pixels with (h + w) % 2 == parity go to part1.
Mask checkerboard_mask(const EventShape& shape, int parity);
// First half of the channels versus the second half (swapped when parity is 1).
Mask channel_mask(const EventShape& shape, int parity);

// Squeeze (H, W, C) -> (H/2, W/2, 4C). Output channel (2*di + dj)*C + c of
// pixel (i, j) holds input pixel (2i + di, 2j + dj), channel c: the four
// corners appear top-left, top-right, bottom-left, bottom-right.
// Returned as a gather: out[k] = in[perm[k]].
std::vector<std::size_t> squeeze_permutation(const EventShape& shape);
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);

// Per-call options for a forward pass.
struct FlowContext {
  // Dropout inside conditioners; active only when rng is set and rate > 0.
  Rng* dropout_rng = nullptr;
  double dropout = 0.0;
  // Extra conditioner input (variational dequantization conditions on x).
  Var context;
  const Tensor* context_value = nullptr;  // same values, for inverse()
};

struct FlowOutput {
  Var y;
  Var logdet;  // rows x 1, or 1 x 1 when independent of the input
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string_view kind() const = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual FlowOutput forward(Graph& g, Var x, const FlowContext& ctx) = 0;
  virtual Tensor inverse(const Tensor& y, const FlowContext& ctx) = 0;
};

// Two hidden tanh layers, the second a gated residual:
//   h1 = tanh(x W1 + b1)
//   h2 = h1 + tanh(h1 W2 + b2) * sigmoid(h1 Wg + bg)
//   out = h2 Wo + bo
// Dropout is applied to h1 and h2 during training.
class Conditioner {
 public:
  Conditioner(std::string prefix, std::size_t in, std::size_t width, std::size_t out, Rng& init);

  Var forward(Graph& g, Var x, const FlowContext& ctx);
  std::vector<Parameter*> parameters();
  Parameter& output_bias() { return bo_; }
  std::size_t inputs() const { return in_; }
  std::size_t outputs() const { return out_; }

 private:
  std::size_t in_, width_, out_;
  Parameter w1_, b1_, w2_, b2_, wg_, bg_, wo_, bo_;
};

// Per-channel scale and shift, y = x * exp(logscale) + shift. Starts at the
// identity.
class ActNorm : public Layer {
 public:
  ActNorm(std::string prefix, const EventShape& shape);
  std::string_view kind() const override { return "actnorm"; }
  std::vector<Parameter*> parameters() override { return {&logscale_, &shift_}; }
  FlowOutput forward(Graph& g, Var x, const FlowContext& ctx) override;
  Tensor inverse(const Tensor& y, const FlowContext& ctx) override;

  Parameter& logscale() { return logscale_; }
  Parameter& shift() { return shift_; }

 private:
  EventShape shape_;
  Parameter logscale_, shift_;
};

// Invertible 1 x 1 convolution: every pixel's channel vector is multiplied by
// W = P (L + I) (U + diag(sign * exp(logs))) with a fixed permutation P and
// signs. Starts at a random rotation.
class InvertibleLinear : public Layer {
 public:
  InvertibleLinear(std::string prefix, const EventShape& shape, Rng& init);
  std::string_view kind() const override { return "invlinear"; }
  std::vector<Parameter*> parameters() override { return {&lower_, &upper_, &logs_}; }
  FlowOutput forward(Graph& g, Var x, const FlowContext& ctx) override;
  Tensor inverse(const Tensor& y, const FlowContext& ctx) override;

  // Assembled C x C matrix and its log |det| from the LU factors.
  Tensor weight() const;
  double log_abs_det() const;

 private:
  EventShape shape_;
  Tensor perm_;  // C x C permutation matrix
  Tensor sign_;  // 1 x C
  Parameter lower_, upper_, logs_;
};

// Fixed gather y[k] = x[perm[k]].
class Permutation : public Layer {
 public:
  Permutation(std::string name, std::vector<std::size_t> perm);
  std::string_view kind() const override { return name_; }
  FlowOutput forward(Graph& g, Var x, const FlowContext& ctx) override;
  Tensor inverse(const Tensor& y, const FlowContext& ctx) override;

 private:
  std::string name_;
  std::vector<std::size_t> perm_, inverse_;
};

// Maps [0, 1] data to the real line: y = logit(alpha + (1 - 2 alpha) x).
class LogitPreprocess : public Layer {
 public:
  explicit LogitPreprocess(double alpha) : alpha_(alpha) {}
  std::string_view kind() const override { return "logit"; }
  FlowOutput forward(Graph& g, Var x, const FlowContext& ctx) override;
  Tensor inverse(const Tensor& y, const FlowContext& ctx) override;

 private:
  double alpha_;
};

enum class CouplingKind { kAffine, kMixLogCdf };

std::string_view to_string(CouplingKind kind);
CouplingKind parse_coupling_kind(std::string_view name);

// Coupling layer over a mask. The conditioner sees part1 (and the context, if
// any) and emits per transformed element:
//   affine     a, b                         y2 = x2 exp(a) + b
//   mixlogcdf  a, b, K logits, K mu, K s    y2 = logit(F(x2)) exp(a) + b
// with F the CDF of sum_k pi_k Logistic(mu_k, exp(s_k)). The a outputs pass
// through a soft clamp 2 tanh(a/2).
class Coupling : public Layer {
 public:
  Coupling(std::string prefix, CouplingKind kind, Mask mask, std::size_t components,
           std::size_t width, std::size_t context_dim, Rng& init);
  std::string_view kind() const override;
  std::vector<Parameter*> parameters() override { return net_.parameters(); }
  FlowOutput forward(Graph& g, Var x, const FlowContext& ctx) override;
  Tensor inverse(const Tensor& y, const FlowContext& ctx) override;

  const Mask& mask() const { return mask_; }
  Conditioner& net() { return net_; }
  std::size_t components() const { return k_; }

 private:
  struct Params {
    Var a, b, logits, mu, s;
  };
  Params split(Graph& g, Var raw) const;
  Var conditioner_input(Graph& g, Var x1, const FlowContext& ctx);

  CouplingKind kind_;
  Mask mask_;
  std::size_t k_;
  std::size_t context_dim_;
  Conditioner net_;
};

// Elementwise mixture-of-logistics transform used by the MixLogCDF coupling.
// Inputs x (B x d), logits, mu, s (B x dK; element j owns columns jK..jK+K-1).
// Output B x 2d: [logit F(x) | log F'(x) - log F(x) - log(1 - F(x))], all in
// the log domain, so logit F stays exact where F rounds to 0 or 1. Entries
// with F outside [1e-12, 1 - 1e-12] are counted as saturations.
Var mixlogcdf_op(Graph& g, Var x, Var logits, Var mu, Var s, std::size_t components);

// Scalar forms for tests and inversion.
struct MixtureParams {
  std::vector<double> log_pi;  // normalized
  std::vector<double> mu;
  std::vector<double> log_scale;
};
double mixture_logit_cdf(double x, const MixtureParams& m);  // logit F(x), unclamped
double mixture_log_pdf(double x, const MixtureParams& m);
// Bisection on the increasing map x -> logit F(x).
double mixture_inverse_logit_cdf(double target_logit, const MixtureParams& m);

// Total number of saturated CDF values seen by mixlogcdf_op in this process.
std::size_t mixlogcdf_saturations();

// Ordered composition; forward goes data -> latent.
class FlowStack {
 public:
  FlowStack() = default;
  explicit FlowStack(std::size_t dim) : dim_(dim) {}
  FlowStack(FlowStack&&) = default;
  FlowStack& operator=(FlowStack&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  std::vector<Parameter*> parameters();

  // logdet is rows x 1. Layer errors are rethrown with the layer index.
  FlowOutput forward(Graph& g, Var x, const FlowContext& ctx = {});
  Tensor inverse(const Tensor& z, const FlowContext& ctx = {});

  // Graph-free conveniences (no dropout).
  std::pair<Tensor, Tensor> forward_values(const Tensor& x, const Tensor* context = nullptr);

 private:
  std::size_t dim_ = 0;
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct FlowArchitecture {
  bool image = false;
  EventShape shape;  // toy: 1 x 1 x D
  CouplingKind coupling = CouplingKind::kMixLogCdf;
  std::size_t components = 4;
  std::size_t width = 64;
  std::size_t toy_blocks = 6;
  double logit_alpha = 0.05;
};

// Toy: toy_blocks x [actnorm, invlinear, coupling] with alternating even/odd
// masks. Image: logit, 4 checkerboard blocks, squeeze, 2 channel-split blocks,
// 4 checkerboard blocks, each block [actnorm, invlinear, coupling].
FlowStack build_flow(const FlowArchitecture& arch, std::uint64_t seed);

}  // namespace ebmflow
