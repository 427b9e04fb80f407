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

#include "flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace ebmflow {

namespace {

constexpr double kCdfFloor = 1e-12;
const double kLogitMax = std::log((1.0 - kCdfFloor) / kCdfFloor);

std::atomic<std::size_t> g_saturations{0};

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double log_sigmoid(double x) { return -softplus(-x); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

// One mixture element evaluated in the log domain. Scratch arrays hold the
// per-component terms needed by the backward pass.
struct Element {
  double lf = 0.0, l1f = 0.0, lfp = 0.0;
  std::vector<double> lp, sig, u, inv_scale, A, B, C;

  void resize(std::size_t k) {
    for (auto* v : {&lp, &sig, &u, &inv_scale, &A, &B, &C}) v->resize(k);
  }

  void eval(double x, const double* logits, const double* mu, const double* s, std::size_t k,
            bool normalized) {
    resize(k);
    const double norm = normalized ? 0.0 : log_sum_exp(logits, k);
    for (std::size_t c = 0; c < k; ++c) {
      lp[c] = logits[c] - norm;
      inv_scale[c] = std::exp(-s[c]);
      u[c] = (x - mu[c]) * inv_scale[c];
      sig[c] = sigmoid(u[c]);
      const double ls = log_sigmoid(u[c]);
      const double l1s = log_sigmoid(-u[c]);
      A[c] = lp[c] + ls;
      B[c] = lp[c] + l1s;
      C[c] = lp[c] + ls + l1s - s[c];
    }
    lf = log_sum_exp(A.data(), k);
    l1f = log_sum_exp(B.data(), k);
    lfp = log_sum_exp(C.data(), k);
  }
};

Tensor select_cols(const Tensor& t, const std::vector<std::size_t>& cols) {
  Tensor out = Tensor::matrix(t.rows(), cols.size());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = t(r, cols[j]);
  }
  return out;
}

Tensor eye(std::size_t n) {
  Tensor t = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Tensor from_eigen(const RowMatrix& m) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  std::copy(m.data(), m.data() + m.size(), t.data());
  return t;
}

Tensor normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Masks and reshapes

Mask checkerboard_mask(const EventShape& shape, int parity) {
  Mask m;
  const auto p = static_cast<std::size_t>(parity & 1);
  if (shape.pixels() == 1) {
    for (std::size_t i = 0; i < shape.channels; ++i) (i % 2 == p ? m.part1 : m.part2).push_back(i);
  } else {
    for (std::size_t h = 0; h < shape.height; ++h) {
      for (std::size_t w = 0; w < shape.width; ++w) {
        auto& part = (h + w) % 2 == p ? m.part1 : m.part2;
        for (std::size_t c = 0; c < shape.channels; ++c) {
          part.push_back((h * shape.width + w) * shape.channels + c);
        }
      }
    }
  }
  if (m.part1.empty() || m.part2.empty()) throw ShapeError("checkerboard mask needs at least 2 elements");
  return m;
}

Mask channel_mask(const EventShape& shape, int parity) {
  if (shape.channels < 2) throw ShapeError("channel mask needs at least 2 channels");
  Mask m;
  const std::size_t half = shape.channels / 2;
  for (std::size_t px = 0; px < shape.pixels(); ++px) {
    for (std::size_t c = 0; c < shape.channels; ++c) {
      const bool first = (c < half) == ((parity & 1) == 0);
      (first ? m.part1 : m.part2).push_back(px * shape.channels + c);
    }
  }
  return m;
}

std::vector<std::size_t> squeeze_permutation(const EventShape& shape) {
  if (shape.height % 2 != 0 || shape.width % 2 != 0) {
    throw ShapeError("squeeze needs even spatial dimensions, got " + std::to_string(shape.height) +
                     "x" + std::to_string(shape.width));
  }
  const std::size_t H2 = shape.height / 2, W2 = shape.width / 2, C = shape.channels;
  std::vector<std::size_t> perm;
  perm.reserve(shape.size());
  for (std::size_t i = 0; i < H2; ++i) {
    for (std::size_t j = 0; j < W2; ++j) {
      for (std::size_t corner = 0; corner < 4; ++corner) {
        const std::size_t di = corner / 2, dj = corner % 2;
        for (std::size_t c = 0; c < C; ++c) {
          perm.push_back(((2 * i + di) * shape.width + (2 * j + dj)) * C + c);
        }
      }
    }
  }
  return perm;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    if (perm[k] >= perm.size() || inv[perm[k]] != perm.size()) {
      throw ShapeError("not a permutation");
    }
    inv[perm[k]] = k;
  }
  return inv;
}

// ---------------------------------------------------------------------------
// Conditioner

Conditioner::Conditioner(std::string prefix, std::size_t in, std::size_t width, std::size_t out,
                         Rng& init)
    : in_(in), width_(width), out_(out) {
  if (in == 0 || width == 0 || out == 0) throw ConfigError("conditioner dimensions must be positive");
  const double s_in = 1.0 / std::sqrt(static_cast<double>(in));
  const double s_w = 1.0 / std::sqrt(static_cast<double>(width));
  w1_ = Parameter(prefix + ".w1", normal_matrix(in, width, s_in, init));
  b1_ = Parameter(prefix + ".b1", Tensor::matrix(1, width));
  w2_ = Parameter(prefix + ".w2", normal_matrix(width, width, s_w, init));
  b2_ = Parameter(prefix + ".b2", Tensor::matrix(1, width));
  wg_ = Parameter(prefix + ".wg", normal_matrix(width, width, s_w, init));
  bg_ = Parameter(prefix + ".bg", Tensor::matrix(1, width));
  wo_ = Parameter(prefix + ".wo", normal_matrix(width, out, 0.01, init));
  bo_ = Parameter(prefix + ".bo", Tensor::matrix(1, out));
}

std::vector<Parameter*> Conditioner::parameters() {
  return {&w1_, &b1_, &w2_, &b2_, &wg_, &bg_, &wo_, &bo_};
}

Var Conditioner::forward(Graph& g, Var x, const FlowContext& ctx) {
  if (g.value(x).cols() != in_) {
    throw ShapeError("conditioner expects " + std::to_string(in_) + " inputs, got " +
                     std::to_string(g.value(x).cols()));
  }
  const std::size_t rows = g.value(x).rows();
  auto dropout = [&](Var h) {
    if (!ctx.dropout_rng || ctx.dropout <= 0.0) return h;
    const double keep = 1.0 - ctx.dropout;
    Tensor m = Tensor::matrix(rows, width_);
    for (double& v : m.values()) v = ctx.dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    return g.mul(h, g.constant(std::move(m)));
  };
  Var h1 = g.tanh(g.add(g.matmul(x, g.parameter(w1_)), g.parameter(b1_)));
  h1 = dropout(h1);
  Var upd = g.tanh(g.add(g.matmul(h1, g.parameter(w2_)), g.parameter(b2_)));
  Var gate = g.sigmoid(g.add(g.matmul(h1, g.parameter(wg_)), g.parameter(bg_)));
  Var h2 = dropout(g.add(h1, g.mul(upd, gate)));
  return g.add(g.matmul(h2, g.parameter(wo_)), g.parameter(bo_));
}

// ---------------------------------------------------------------------------
// ActNorm

ActNorm::ActNorm(std::string prefix, const EventShape& shape)
    : shape_(shape),
      logscale_(prefix + ".logscale", Tensor::matrix(1, shape.channels)),
      shift_(prefix + ".shift", Tensor::matrix(1, shape.channels)) {}

FlowOutput ActNorm::forward(Graph& g, Var x, const FlowContext&) {
  const std::size_t rows = g.value(x).rows();
  Var ls = g.parameter(logscale_);
  Var flat = g.reshape(x, rows * shape_.pixels(), shape_.channels);
  Var y = g.add(g.mul(flat, g.exp(ls)), g.parameter(shift_));
  return {g.reshape(y, rows, shape_.size()),
          g.scale(g.sum(ls), static_cast<double>(shape_.pixels()))};
}

Tensor ActNorm::inverse(const Tensor& y, const FlowContext&) {
  Tensor x = y;
  const std::size_t C = shape_.channels;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = i % C;
    x[i] = (y[i] - shift_.value[c]) * std::exp(-logscale_.value[c]);
  }
  return x;
}

// ---------------------------------------------------------------------------
// InvertibleLinear

InvertibleLinear::InvertibleLinear(std::string prefix, const EventShape& shape, Rng& init)
    : shape_(shape) {
  const std::size_t C = shape.channels;
  const auto n = static_cast<Eigen::Index>(C);
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) G(i, j) = init.normal();
  }
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(Q);
  const Eigen::MatrixXd LU = lu.matrixLU();
  // Q = P^T L U with P the row permutation applied by the factorization.
  const Eigen::MatrixXd Pt = Eigen::MatrixXd(lu.permutationP()).transpose();

  perm_ = Tensor::matrix(C, C);
  sign_ = Tensor::matrix(1, C);
  Tensor lower = Tensor::matrix(C, C), upper = Tensor::matrix(C, C), logs = Tensor::matrix(1, C);
  for (std::size_t i = 0; i < C; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < C; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      perm_(i, j) = Pt(ii, jj);
      if (j < i) lower(i, j) = LU(ii, jj);
      if (j > i) upper(i, j) = LU(ii, jj);
    }
    sign_[i] = LU(ii, ii) < 0.0 ? -1.0 : 1.0;
    logs[i] = std::log(std::abs(LU(ii, ii)));
  }
  lower_ = Parameter(prefix + ".lower", std::move(lower));
  upper_ = Parameter(prefix + ".upper", std::move(upper));
  logs_ = Parameter(prefix + ".logs", std::move(logs));
}

Tensor InvertibleLinear::weight() const {
  const std::size_t C = shape_.channels;
  RowMatrix L = RowMatrix::Identity(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C));
  RowMatrix U = RowMatrix::Zero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C));
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      if (j < i) L(ii, jj) = lower_.value(i, j);
      if (j > i) U(ii, jj) = upper_.value(i, j);
    }
    U(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = sign_[i] * std::exp(logs_.value[i]);
  }
  return from_eigen(view(perm_) * L * U);
}

double InvertibleLinear::log_abs_det() const {
  double s = 0.0;
  for (double v : logs_.value.values()) s += v;
  return s;
}

FlowOutput InvertibleLinear::forward(Graph& g, Var x, const FlowContext&) {
  const std::size_t C = shape_.channels;
  const std::size_t rows = g.value(x).rows();
  Tensor lower_mask = Tensor::matrix(C, C), upper_mask = Tensor::matrix(C, C);
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      if (j < i) lower_mask(i, j) = 1.0;
      if (j > i) upper_mask(i, j) = 1.0;
    }
  }
  Var I = g.constant(eye(C));
  Var logs = g.parameter(logs_);
  Var L = g.add(g.mul(g.parameter(lower_), g.constant(std::move(lower_mask))), I);
  Var diag = g.mul(I, g.mul(g.constant(sign_), g.exp(logs)));
  Var U = g.add(g.mul(g.parameter(upper_), g.constant(std::move(upper_mask))), diag);
  Var W = g.matmul(g.constant(perm_), g.matmul(L, U));
  Var flat = g.reshape(x, rows * shape_.pixels(), C);
  Var y = g.reshape(g.matmul(flat, W), rows, shape_.size());
  return {y, g.scale(g.sum(logs), static_cast<double>(shape_.pixels()))};
}

Tensor InvertibleLinear::inverse(const Tensor& y, const FlowContext&) {
  const RowMatrix W = view(weight());
  const RowMatrix Winv = W.partialPivLu().inverse();
  const std::size_t C = shape_.channels;
  const Tensor flat = y.reshaped({y.rows() * shape_.pixels(), C});
  return from_eigen(view(flat) * Winv).reshaped({y.rows(), shape_.size()});
}

// ---------------------------------------------------------------------------
// Permutation / logit

Permutation::Permutation(std::string name, std::vector<std::size_t> perm)
    : name_(std::move(name)), perm_(std::move(perm)), inverse_(invert_permutation(perm_)) {}

FlowOutput Permutation::forward(Graph& g, Var x, const FlowContext&) {
  if (g.value(x).cols() != perm_.size()) throw ShapeError("permutation: width mismatch");
  return {g.take_cols(x, perm_), g.constant(Tensor::matrix(1, 1))};
}

Tensor Permutation::inverse(const Tensor& y, const FlowContext&) {
  if (y.cols() != perm_.size()) throw ShapeError("permutation: width mismatch");
  return select_cols(y, inverse_);
}

FlowOutput LogitPreprocess::forward(Graph& g, Var x, const FlowContext&) {
  const Tensor& X = g.value(x);
  for (double v : X.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ShapeError("logit preprocessing expects inputs in [0, 1]");
  }
  const double span = 1.0 - 2.0 * alpha_;
  Var p = g.add_scalar(g.scale(x, span), alpha_);
  Var lp = g.log(p);
  Var l1p = g.log(g.add_scalar(g.scale(p, -1.0), 1.0));
  Var ld = g.add_scalar(g.scale(g.sum_rows(g.add(lp, l1p)), -1.0),
                        static_cast<double>(X.cols()) * std::log(span));
  return {g.sub(lp, l1p), ld};
}

Tensor LogitPreprocess::inverse(const Tensor& y, const FlowContext&) {
  Tensor x = y;
  for (double& v : x.values()) v = (sigmoid(v) - alpha_) / (1.0 - 2.0 * alpha_);
  return x;
}

// ---------------------------------------------------------------------------
// Mixture of logistics

std::size_t mixlogcdf_saturations() { return g_saturations.load(); }

Var mixlogcdf_op(Graph& g, Var x, Var logits, Var mu, Var s, std::size_t components) {
  const Tensor& X = g.value(x);
  const Tensor& Lg = g.value(logits);
  const Tensor& Mu = g.value(mu);
  const Tensor& S = g.value(s);
  const std::size_t K = components;
  const std::size_t rows = X.rows(), d = X.cols();
  for (const Tensor* t : {&Lg, &Mu, &S}) {
    if (t->rows() != rows || t->cols() != d * K) {
      throw ShapeError("mixlogcdf: parameter block has shape " + t->shape_string() + ", expected " +
                       std::to_string(rows) + "x" + std::to_string(d * K));
    }
  }
  Tensor out = Tensor::matrix(rows, 2 * d);
  Element e;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t off = r * d * K + j * K;
      e.eval(X(r, j), Lg.data() + off, Mu.data() + off, S.data() + off, K, false);
      const double lf = e.lf, l1f = e.l1f;
      const double ell = lf - l1f;
      if (std::abs(ell) > kLogitMax) ++hits;
      out(r, j) = ell;
      out(r, d + j) = e.lfp - lf - l1f;
    }
  }
  if (hits) g_saturations += hits;

  return g.custom(
      "mixlogcdf", {x, logits, mu, s}, std::move(out),
      [X, Lg, Mu, S, K, rows, d](
          const Tensor& up, std::span<Tensor* const> grads) {
        Element e;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t off = r * d * K + j * K;
            e.eval(X(r, j), Lg.data() + off, Mu.data() + off, S.data() + off, K, false);
            const double u_ell = up(r, j), u_g = up(r, d + j);
            const double d_lf = u_ell - u_g, d_l1f = -u_ell - u_g;
            const double d_lfp = u_g;
            double dx = 0.0;
            for (std::size_t c = 0; c < K; ++c) {
              const double rk = std::exp(e.A[c] - e.lf);
              const double qk = std::exp(e.B[c] - e.l1f);
              const double wk = std::exp(e.C[c] - e.lfp);
              const double pk = std::exp(e.lp[c]);
              const double sg = e.sig[c], is = e.inv_scale[c], u = e.u[c];
              const double du = d_lf * rk * (1.0 - sg) - d_l1f * qk * sg + d_lfp * wk * (1.0 - 2.0 * sg);
              dx += du * is;
              if (grads[2]) (*grads[2])[off + c] -= du * is;
              if (grads[3]) (*grads[3])[off + c] += -du * u - d_lfp * wk;
              if (grads[1]) {
                (*grads[1])[off + c] += d_lf * (rk - pk) + d_l1f * (qk - pk) + d_lfp * (wk - pk);
              }
            }
            if (grads[0]) (*grads[0])(r, j) += dx;
          }
        }
      });
}

double mixture_logit_cdf(double x, const MixtureParams& m) {
  Element e;
  e.eval(x, m.log_pi.data(), m.mu.data(), m.log_scale.data(), m.mu.size(), true);
  return e.lf - e.l1f;
}

double mixture_log_pdf(double x, const MixtureParams& m) {
  Element e;
  e.eval(x, m.log_pi.data(), m.mu.data(), m.log_scale.data(), m.mu.size(), true);
  return e.lfp;
}

double mixture_inverse_logit_cdf(double target, const MixtureParams& m) {
  if (!std::isfinite(target)) throw NumericError("mixlogcdf inverse: non-finite target");
  const auto [mu_lo, mu_hi] = std::minmax_element(m.mu.begin(), m.mu.end());
  const double max_scale = std::exp(*std::max_element(m.log_scale.begin(), m.log_scale.end()));
  double lo = *mu_lo - 30.0 * max_scale, hi = *mu_hi + 30.0 * max_scale;
  for (int expand = 0; mixture_logit_cdf(lo, m) > target; ++expand) {
    if (expand == 64) throw NumericError("mixlogcdf inverse: bracket failure below");
    lo -= hi - lo;
  }
  for (int expand = 0; mixture_logit_cdf(hi, m) < target; ++expand) {
    if (expand == 64) throw NumericError("mixlogcdf inverse: bracket failure above");
    hi += hi - lo;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mixture_logit_cdf(mid, m) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Coupling

std::string_view to_string(CouplingKind kind) {
  return kind == CouplingKind::kAffine ? "affine" : "mixlogcdf";
}

CouplingKind parse_coupling_kind(std::string_view name) {
  if (name == "affine") return CouplingKind::kAffine;
  if (name == "mixlogcdf") return CouplingKind::kMixLogCdf;
  throw ConfigError("unknown coupling '" + std::string(name) + "' (expected affine or mixlogcdf)");
}

namespace {

std::size_t coupling_outputs(CouplingKind kind, std::size_t d2, std::size_t k) {
  return kind == CouplingKind::kAffine ? 2 * d2 : d2 * (2 + 3 * k);
}

}  // namespace

Coupling::Coupling(std::string prefix, CouplingKind kind, Mask mask, std::size_t components,
                   std::size_t width, std::size_t context_dim, Rng& init)
    : kind_(kind),
      mask_(std::move(mask)),
      k_(kind == CouplingKind::kAffine ? 0 : components),
      context_dim_(context_dim),
      net_(prefix + ".net", mask_.part1.size() + context_dim, width,
           coupling_outputs(kind, mask_.part2.size(), components), init) {
  if (kind == CouplingKind::kMixLogCdf && components == 0) {
    throw ConfigError("mixlogcdf coupling needs at least one component");
  }
  if (k_ > 0) {
    // Spread the initial component locations.
    const std::size_t d2 = mask_.part2.size();
    Tensor& bo = net_.output_bias().value;
    for (std::size_t j = 0; j < d2; ++j) {
      for (std::size_t c = 0; c < k_; ++c) {
        bo[2 * d2 + d2 * k_ + j * k_ + c] =
            (static_cast<double>(c) - 0.5 * static_cast<double>(k_ - 1)) * 2.0 / static_cast<double>(k_);
      }
    }
  }
}

std::string_view Coupling::kind() const { return to_string(kind_); }

Coupling::Params Coupling::split(Graph& g, Var raw) const {
  const std::size_t d2 = mask_.part2.size();
  Params p;
  p.a = g.scale(g.tanh(g.scale(g.slice_cols(raw, 0, d2), 0.5)), 2.0);
  p.b = g.slice_cols(raw, d2, 2 * d2);
  if (k_ > 0) {
    const std::size_t blk = d2 * k_;
    p.logits = g.slice_cols(raw, 2 * d2, 2 * d2 + blk);
    p.mu = g.slice_cols(raw, 2 * d2 + blk, 2 * d2 + 2 * blk);
    p.s = g.slice_cols(raw, 2 * d2 + 2 * blk, 2 * d2 + 3 * blk);
  }
  return p;
}

Var Coupling::conditioner_input(Graph& g, Var x1, const FlowContext& ctx) {
  if (context_dim_ == 0) return x1;
  if (!ctx.context.valid()) throw ShapeError("coupling expects a context input");
  const Var parts[] = {x1, ctx.context};
  return g.concat_cols(parts);
}

FlowOutput Coupling::forward(Graph& g, Var x, const FlowContext& ctx) {
  const std::size_t D = mask_.part1.size() + mask_.part2.size();
  if (g.value(x).cols() != D) {
    throw ShapeError("coupling expects width " + std::to_string(D) + ", got " +
                     std::to_string(g.value(x).cols()));
  }
  Var x1 = g.take_cols(x, mask_.part1);
  Var x2 = g.take_cols(x, mask_.part2);
  Var raw = net_.forward(g, conditioner_input(g, x1, ctx), ctx);
  const Params p = split(g, raw);
  Var y2, logdet;
  if (kind_ == CouplingKind::kAffine) {
    y2 = g.add(g.mul(x2, g.exp(p.a)), p.b);
    logdet = g.sum_rows(p.a);
  } else {
    const std::size_t d2 = mask_.part2.size();
    Var o = mixlogcdf_op(g, x2, p.logits, p.mu, p.s, k_);
    y2 = g.add(g.mul(g.slice_cols(o, 0, d2), g.exp(p.a)), p.b);
    logdet = g.sum_rows(g.add(g.slice_cols(o, d2, 2 * d2), p.a));
  }
  std::vector<std::size_t> order(mask_.part1);
  order.insert(order.end(), mask_.part2.begin(), mask_.part2.end());
  const Var parts[] = {x1, y2};
  return {g.take_cols(g.concat_cols(parts), invert_permutation(order)), logdet};
}

Tensor Coupling::inverse(const Tensor& y, const FlowContext& ctx) {
  const std::size_t d2 = mask_.part2.size();
  const Tensor y1 = select_cols(y, mask_.part1);
  const Tensor y2 = select_cols(y, mask_.part2);
  Tensor raw;
  {
    Graph g;
    FlowContext eval;
    if (context_dim_ > 0) {
      if (!ctx.context_value) throw ShapeError("coupling inverse expects a context value");
      eval.context = g.constant(*ctx.context_value);
    }
    raw = g.value(net_.forward(g, conditioner_input(g, g.constant(y1), eval), eval));
  }
  Tensor x = y;
  MixtureParams m;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (std::size_t j = 0; j < d2; ++j) {
      const double a = 2.0 * std::tanh(0.5 * raw(r, j));
      const double b = raw(r, d2 + j);
      const double t = (y2(r, j) - b) * std::exp(-a);
      double xv = t;
      if (k_ > 0) {
        const std::size_t blk = d2 * k_;
        m.log_pi.assign(k_, 0.0);
        m.mu.assign(k_, 0.0);
        m.log_scale.assign(k_, 0.0);
        for (std::size_t c = 0; c < k_; ++c) {
          m.log_pi[c] = raw(r, 2 * d2 + j * k_ + c);
          m.mu[c] = raw(r, 2 * d2 + blk + j * k_ + c);
          m.log_scale[c] = raw(r, 2 * d2 + 2 * blk + j * k_ + c);
        }
        const double norm = log_sum_exp(m.log_pi.data(), k_);
        for (double& v : m.log_pi) v -= norm;
        xv = mixture_inverse_logit_cdf(t, m);
      }
      x(r, mask_.part2[j]) = xv;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// FlowStack

std::vector<Parameter*> FlowStack::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (Parameter* p : l->parameters()) out.push_back(p);
  }
  return out;
}

namespace {

[[noreturn]] void rethrow_with_layer(std::size_t i, std::string_view kind) {
  const std::string where = "flow layer " + std::to_string(i) + " (" + std::string(kind) + "): ";
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const Error& e) {
    throw Error(where + e.what());
  }
}

}  // namespace

FlowOutput FlowStack::forward(Graph& g, Var x, const FlowContext& ctx) {
  const std::size_t rows = g.value(x).rows();
  if (dim_ != 0 && g.value(x).cols() != dim_) {
    throw ShapeError("flow expects width " + std::to_string(dim_) + ", got " +
                     std::to_string(g.value(x).cols()));
  }
  Var total = g.constant(Tensor::matrix(rows, 1));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      const FlowOutput out = layers_[i]->forward(g, x, ctx);
      x = out.y;
      total = g.add(total, out.logdet);
    } catch (const Error&) {
      rethrow_with_layer(i, layers_[i]->kind());
    }
  }
  return {x, total};
}

Tensor FlowStack::inverse(const Tensor& z, const FlowContext& ctx) {
  if (dim_ != 0 && z.cols() != dim_) throw ShapeError("flow inverse: width mismatch");
  Tensor x = z;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    try {
      x = layers_[i]->inverse(x, ctx);
    } catch (const Error&) {
      rethrow_with_layer(i, layers_[i]->kind());
    }
  }
  return x;
}

std::pair<Tensor, Tensor> FlowStack::forward_values(const Tensor& x, const Tensor* context) {
  Graph g;
  FlowContext ctx;
  if (context) ctx.context = g.constant(*context);
  const FlowOutput out = forward(g, g.constant(x), ctx);
  return {g.value(out.y), g.value(out.logdet)};
}

// ---------------------------------------------------------------------------

FlowStack build_flow(const FlowArchitecture& arch, std::uint64_t seed) {
  if (arch.shape.size() < 2) throw ConfigError("flow needs at least 2 dimensions");
  const Rng root(seed, 0xF10ULL);
  FlowStack stack(arch.shape.size());
  std::size_t index = 0;
  auto block = [&](const EventShape& shape, Mask mask) {
    Rng init = root.split(index);
    const std::string prefix = "flow." + std::to_string(index++);
    stack.add(std::make_unique<ActNorm>(prefix + ".actnorm", shape));
    stack.add(std::make_unique<InvertibleLinear>(prefix + ".invlinear", shape, init));
    stack.add(std::make_unique<Coupling>(prefix + ".coupling", arch.coupling, std::move(mask),
                                         arch.components, arch.width, 0, init));
  };
  if (!arch.image) {
    const EventShape shape{1, 1, arch.shape.size()};
    for (std::size_t i = 0; i < arch.toy_blocks; ++i) {
      block(shape, checkerboard_mask(shape, static_cast<int>(i % 2)));
    }
    return stack;
  }
  const EventShape s0 = arch.shape;
  stack.add(std::make_unique<LogitPreprocess>(arch.logit_alpha));
  for (int i = 0; i < 4; ++i) block(s0, checkerboard_mask(s0, i % 2));
  stack.add(std::make_unique<Permutation>("squeeze", squeeze_permutation(s0)));
  const EventShape s1{s0.height / 2, s0.width / 2, 4 * s0.channels};
  for (int i = 0; i < 2; ++i) block(s1, channel_mask(s1, i % 2));
  for (int i = 0; i < 4; ++i) block(s1, checkerboard_mask(s1, i % 2));
  return stack;
}

}  // namespace ebmflow
