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

#include "smoothed_base.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "errors.hpp"

namespace ebmflow {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

SpinMatrix to_matrix(std::span<const double> z) {
  SpinMatrix m(1, idx(z.size()));
  for (std::size_t i = 0; i < z.size(); ++i) m(0, idx(i)) = z[i];
  return m;
}

SpinMatrix tensor_to_matrix(const Tensor& t) {
  SpinMatrix m(idx(t.rows()), idx(t.cols()));
  std::copy(t.data(), t.data() + t.size(), m.data());
  return m;
}

Tensor row_tensor(const Eigen::VectorXd& v) {
  return Tensor::row(std::vector<double>(v.data(), v.data() + v.size()));
}

// Keeps only couplings allowed by the base kind: none for DFLOW, the
// visible-hidden block for RBM.
void mask_couplings(BaseKind kind, const std::optional<Bipartite>& partition, Eigen::MatrixXd& dJ) {
  dJ.diagonal().setZero();
  if (kind == BaseKind::kDFlow) {
    dJ.setZero();
    return;
  }
  if (partition) {
    for (std::size_t a : partition->visible) {
      for (std::size_t b : partition->visible) dJ(idx(a), idx(b)) = 0.0;
    }
    for (std::size_t a : partition->hidden) {
      for (std::size_t b : partition->hidden) dJ(idx(a), idx(b)) = 0.0;
    }
  }
}

// Tied-pair gradient of sum_b u_b * log_unnormalized(z_b) for the spin kinds.
void spin_unnormalized_grads(const SmoothedBase& base, const SpinMatrix& Z,
                             const Eigen::VectorXd& u, Eigen::MatrixXd& dJ, Eigen::VectorXd& dh) {
  const SpinMatrix T = base.spin_posterior_mean(Z);
  const Eigen::MatrixXd UZ = u.asDiagonal() * Z;
  const Eigen::MatrixXd UT = u.asDiagonal() * T;
  dJ = -Z.transpose() * UZ + T.transpose() * UZ + Z.transpose() * UT;
  dh = UT.colwise().sum().transpose();
}

}  // namespace

std::string_view to_string(BaseKind kind) {
  switch (kind) {
    case BaseKind::kRbm: return "rbm";
    case BaseKind::kDFlow: return "dflow";
    case BaseKind::kMultiCov: return "multicov";
    case BaseKind::kGaussian: return "gaussian";
  }
  return "unknown";
}

BaseKind parse_base_kind(std::string_view name) {
  if (name == "rbm") return BaseKind::kRbm;
  if (name == "dflow") return BaseKind::kDFlow;
  if (name == "multicov") return BaseKind::kMultiCov;
  if (name == "gaussian") return BaseKind::kGaussian;
  throw ConfigError("unknown base kind '" + std::string(name) +
                    "' (expected rbm, dflow, multicov or gaussian)");
}

double default_delta(BaseKind kind) {
  switch (kind) {
    case BaseKind::kRbm:
    case BaseKind::kMultiCov: return 2.5;
    case BaseKind::kDFlow: return 1.0;
    case BaseKind::kGaussian: return 0.0;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// SmoothedBase

void SmoothedBase::factorize(const Eigen::MatrixXd& jt) {
  Eigen::LLT<Eigen::MatrixXd> llt(jt);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "J + delta*I is not positive definite (delta=" << delta_ << ")";
    throw PdFailure(os.str());
  }
  jtilde_ = jt;
  chol_ = llt.matrixL();
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  jtilde_inv_ = llt.solve(Eigen::MatrixXd::Identity(jt.rows(), jt.cols()));
}

SmoothedBase SmoothedBase::build(BaseKind kind, SpinModel model, double delta) {
  if (kind != BaseKind::kRbm && kind != BaseKind::kDFlow) {
    throw ConfigError("SmoothedBase::build only smooths spin models (rbm, dflow)");
  }
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  if (kind == BaseKind::kDFlow && !model.has_zero_couplings()) {
    throw ConfigError("dflow base requires zero couplings");
  }
  SmoothedBase b;
  b.kind_ = kind;
  b.n_ = model.size();
  b.delta_ = delta;
  const auto n = idx(b.n_);
  b.factorize(model.couplings() + delta * Eigen::MatrixXd::Identity(n, n));
  b.model_ = std::move(model);
  return b;
}

SmoothedBase SmoothedBase::multicov(const Eigen::MatrixXd& cholesky, double delta) {
  if (cholesky.rows() != cholesky.cols()) throw ConfigError("multicov: factor must be square");
  for (Eigen::Index i = 0; i < cholesky.rows(); ++i) {
    if (!(cholesky(i, i) > 0.0)) throw PdFailure("multicov: factor diagonal must be positive");
  }
  SmoothedBase b;
  b.kind_ = BaseKind::kMultiCov;
  b.n_ = static_cast<std::size_t>(cholesky.rows());
  b.delta_ = delta;
  const Eigen::MatrixXd C = cholesky.triangularView<Eigen::Lower>();
  b.chol_ = C;
  b.jtilde_ = C * C.transpose();
  b.log_det_ = 2.0 * C.diagonal().array().log().sum();
  b.jtilde_inv_ = b.jtilde_.llt().solve(Eigen::MatrixXd::Identity(C.rows(), C.cols()));
  return b;
}

SmoothedBase SmoothedBase::gaussian(std::size_t n) {
  SmoothedBase b;
  b.kind_ = BaseKind::kGaussian;
  b.n_ = n;
  b.jtilde_ = Eigen::MatrixXd::Identity(idx(n), idx(n));
  b.jtilde_inv_ = b.jtilde_;
  b.chol_ = b.jtilde_;
  return b;
}

const SpinModel& SmoothedBase::spin_model() const {
  if (!model_) throw ConfigError("base kind '" + std::string(to_string(kind_)) + "' has no spins");
  return *model_;
}

SpinMatrix SmoothedBase::spin_posterior_mean(const SpinMatrix& z) const {
  SpinMatrix ht = z * jtilde_;
  ht.rowwise() += model_->biases().transpose();
  return ht.array().tanh().matrix();
}

Eigen::VectorXd SmoothedBase::log_unnormalized(const SpinMatrix& z) const {
  if (static_cast<std::size_t>(z.cols()) != n_) throw ShapeError("log_unnormalized: width mismatch");
  const SpinMatrix zj = z * jtilde_;
  Eigen::VectorXd out = -0.5 * (z.array() * zj.array()).rowwise().sum().matrix();
  if (model_) {
    const Eigen::VectorXd& h = model_->biases();
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < z.cols(); ++i) acc += log_2cosh(zj(r, i) + h[i]);
      out[r] += acc;
    }
  }
  return out;
}

double SmoothedBase::log_unnormalized(std::span<const double> z) const {
  return log_unnormalized(to_matrix(z))[0];
}

SpinMatrix SmoothedBase::gradient_z(const SpinMatrix& z) const {
  SpinMatrix g = -z * jtilde_;
  if (model_) g += spin_posterior_mean(z) * jtilde_;
  return g;
}

double SmoothedBase::log_z_continuous(double log_z_s) const {
  const double N = static_cast<double>(n_);
  switch (kind_) {
    case BaseKind::kRbm:
    case BaseKind::kDFlow:
      return log_z_s + 0.5 * N * kLog2Pi - 0.5 * log_det_ + 0.5 * N * delta_;
    case BaseKind::kMultiCov: return 0.5 * N * kLog2Pi - 0.5 * log_det_;
    case BaseKind::kGaussian: return 0.5 * N * kLog2Pi;
  }
  return 0.0;
}

SpinMatrix SmoothedBase::sample_z_given_spins(const SpinMatrix& spins, std::uint64_t seed) const {
  if (static_cast<std::size_t>(spins.cols()) != n_) throw ShapeError("sample_z: spin width mismatch");
  const Rng root(seed, 0x2ULL);
  SpinMatrix z(spins.rows(), spins.cols());
  Eigen::VectorXd eps(idx(n_));
  for (Eigen::Index r = 0; r < spins.rows(); ++r) {
    Rng rng = root.split(static_cast<std::uint64_t>(r));
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    const Eigen::VectorXd x = chol_.transpose().triangularView<Eigen::Upper>().solve(eps);
    z.row(r) = spins.row(r) + x.transpose();
  }
  return z;
}

SmoothedBase::Draw SmoothedBase::sample_z(std::size_t count, std::uint64_t seed,
                                          std::size_t burn_in) const {
  Draw d;
  const auto rows = static_cast<Eigen::Index>(count);
  switch (kind_) {
    case BaseKind::kRbm:
      d.s = sample_spins_gibbs(*model_, count, burn_in, seed);
      break;
    case BaseKind::kDFlow: {
      d.s.resize(rows, idx(n_));
      const Rng root(seed, 0x1ULL);
      const Eigen::VectorXd& h = model_->biases();
      for (Eigen::Index r = 0; r < rows; ++r) {
        Rng rng = root.split(static_cast<std::uint64_t>(r));
        for (Eigen::Index i = 0; i < h.size(); ++i) {
          const double p_up = 1.0 / (1.0 + std::exp(-2.0 * h[i]));
          d.s(r, i) = rng.uniform() < p_up ? 1.0 : -1.0;
        }
      }
      break;
    }
    case BaseKind::kMultiCov:
    case BaseKind::kGaussian:
      d.s = SpinMatrix::Zero(rows, idx(n_));
      break;
  }
  d.z = sample_z_given_spins(d.s, seed);
  return d;
}

// ---------------------------------------------------------------------------

LogZEstimate continuous_log_z(const SmoothedBase& base, LogZMode mode, const AisSettings& ais) {
  switch (base.kind()) {
    case BaseKind::kGaussian:
    case BaseKind::kMultiCov:
      return {base.log_z_continuous(0.0), 0.0};
    case BaseKind::kDFlow: {
      double log_z_s = 0.0;
      const Eigen::VectorXd& h = base.spin_model().biases();
      for (Eigen::Index i = 0; i < h.size(); ++i) log_z_s += log_2cosh(h[i]);
      return {base.log_z_continuous(log_z_s), 0.0};
    }
    case BaseKind::kRbm: {
      if (mode == LogZMode::kExact) {
        if (base.dim() > kMaxMomentSpins) {
          throw ConfigError("exact log Z requested for " + std::to_string(base.dim()) +
                            " spins; enumeration is limited to " +
                            std::to_string(kMaxMomentSpins) + ", use AIS instead");
        }
        return {base.log_z_continuous(exact_log_z(base.spin_model())), 0.0};
      }
      const AisEstimate est = ais_log_z(base.spin_model(), ais.temps, ais.chains, ais.seed);
      return {base.log_z_continuous(est.log_z), est.std_error};
    }
  }
  return {};
}

NegativePhase exact_negative_phase(const SmoothedBase& base) {
  const auto n = idx(base.dim());
  NegativePhase out{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  if (base.kind() == BaseKind::kDFlow) {
    out.mean = base.spin_model().biases().array().tanh().matrix();
    out.second = out.mean * out.mean.transpose();
    out.second.diagonal().setZero();
  } else if (base.kind() == BaseKind::kRbm) {
    SpinMoments m = exact_moments(base.spin_model());
    out.mean = std::move(m.mean);
    out.second = std::move(m.second);
  }
  return out;
}

BaseGradients base_grads(const SmoothedBase& base, const SpinMatrix& z_batch,
                         const NegativePhase& negative) {
  if (!base.has_spins()) throw ConfigError("base_grads: requires an rbm or dflow base");
  if (z_batch.rows() == 0) throw ConfigError("base_grads: empty batch");
  const double B = static_cast<double>(z_batch.rows());
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(z_batch.rows(), 1.0 / B);
  BaseGradients g;
  spin_unnormalized_grads(base, z_batch, u, g.coupling, g.bias);
  g.coupling += -negative.second + base.jtilde_inverse();
  mask_couplings(base.kind(), base.spin_model().partition(), g.coupling);
  g.bias -= negative.mean;

  const SpinMatrix T = base.spin_posterior_mean(z_batch);
  const double data_term =
      (-0.5 * z_batch.array().square().rowwise().sum() + (T.array() * z_batch.array()).rowwise().sum())
          .mean();
  g.delta = data_term + 0.5 * base.jtilde_inverse().trace() - 0.5 * static_cast<double>(base.dim());
  return g;
}

// ---------------------------------------------------------------------------
// BaseParameters

BaseParameters::BaseParameters(BaseKind kind, std::size_t n, double delta)
    : kind_(kind), n_(n), delta_(delta) {
  if (n == 0) throw ConfigError("base dimension must be positive");
  if (kind != BaseKind::kGaussian && !(delta > 0.0)) throw ConfigError("delta must be positive");
  if (kind == BaseKind::kRbm) {
    if (n < 2) throw ConfigError("rbm base needs at least 2 spins");
    partition_ = Bipartite::halves(n);
    coupling_ = Parameter("base.coupling",
                          Tensor::matrix(partition_->visible.size(), partition_->hidden.size()));
  }
  if (kind == BaseKind::kRbm || kind == BaseKind::kDFlow) {
    bias_ = Parameter("base.bias", Tensor::matrix(1, n));
  }
  if (kind == BaseKind::kMultiCov) {
    Tensor c = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) c(i, i) = 0.5 * std::log(delta);
    cholesky_ = Parameter("base.cholesky", std::move(c));
  }
}

std::vector<Parameter*> BaseParameters::parameters() {
  switch (kind_) {
    case BaseKind::kRbm: return {&coupling_, &bias_};
    case BaseKind::kDFlow: return {&bias_};
    case BaseKind::kMultiCov: return {&cholesky_};
    case BaseKind::kGaussian: return {};
  }
  return {};
}

std::vector<const Parameter*> BaseParameters::parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<BaseParameters*>(this)->parameters()) out.push_back(p);
  return out;
}

SpinModel BaseParameters::spin_model() const {
  const auto n = idx(n_);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(n);
  if (kind_ == BaseKind::kRbm) {
    for (std::size_t a = 0; a < partition_->visible.size(); ++a) {
      for (std::size_t b = 0; b < partition_->hidden.size(); ++b) {
        const double w = coupling_.value(a, b);
        J(idx(partition_->visible[a]), idx(partition_->hidden[b])) = w;
        J(idx(partition_->hidden[b]), idx(partition_->visible[a])) = w;
      }
    }
  }
  if (kind_ == BaseKind::kRbm || kind_ == BaseKind::kDFlow) {
    for (std::size_t i = 0; i < n_; ++i) h[idx(i)] = bias_.value[i];
  } else {
    throw ConfigError("base kind '" + std::string(to_string(kind_)) + "' has no spins");
  }
  return SpinModel(std::move(J), std::move(h), partition_);
}

SmoothedBase BaseParameters::build() const {
  switch (kind_) {
    case BaseKind::kRbm:
    case BaseKind::kDFlow: return SmoothedBase::build(kind_, spin_model(), delta_);
    case BaseKind::kMultiCov: {
      const auto n = idx(n_);
      Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < i; ++j) C(idx(i), idx(j)) = cholesky_.value(i, j);
        C(idx(i), idx(i)) = std::exp(cholesky_.value(i, i));
      }
      return SmoothedBase::multicov(C, delta_);
    }
    case BaseKind::kGaussian: return SmoothedBase::gaussian(n_);
  }
  throw ConfigError("unknown base kind");
}

void BaseParameters::accumulate(const Eigen::MatrixXd& d_coupling, const Eigen::VectorXd& d_bias) {
  if (kind_ == BaseKind::kRbm) {
    for (std::size_t a = 0; a < partition_->visible.size(); ++a) {
      for (std::size_t b = 0; b < partition_->hidden.size(); ++b) {
        coupling_.grad(a, b) += d_coupling(idx(partition_->visible[a]), idx(partition_->hidden[b]));
      }
    }
  }
  if (kind_ == BaseKind::kRbm || kind_ == BaseKind::kDFlow) {
    for (std::size_t i = 0; i < n_; ++i) bias_.grad[i] += d_bias[idx(i)];
  }
}

double BaseParameters::l2_norm_squared() const {
  double s = 0.0;
  for (const Parameter* p : parameters()) {
    if (p == &cholesky_) continue;
    for (double v : p->value.values()) s += v * v;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Graph primitives

namespace {

// Raw-parameter gradient tensors (in BaseParameters::parameters() order) from
// tied-pair coupling and bias gradients.
std::vector<Tensor> raw_spin_grads(BaseKind kind, const std::optional<Bipartite>& partition,
                                   const Eigen::MatrixXd& dJ, const Eigen::VectorXd& dh) {
  std::vector<Tensor> out;
  if (kind == BaseKind::kRbm) {
    Tensor w = Tensor::matrix(partition->visible.size(), partition->hidden.size());
    for (std::size_t a = 0; a < partition->visible.size(); ++a) {
      for (std::size_t b = 0; b < partition->hidden.size(); ++b) {
        w(a, b) = dJ(idx(partition->visible[a]), idx(partition->hidden[b]));
      }
    }
    out.push_back(std::move(w));
  }
  out.push_back(row_tensor(dh));
  return out;
}

void add_into(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

}  // namespace

Var log_unnormalized_op(Graph& g, Var z, const SmoothedBase& base, BaseParameters& params) {
  if (base.kind() != params.kind() || base.dim() != params.dim()) {
    throw ConfigError("log_unnormalized_op: base and parameters disagree");
  }
  const SpinMatrix Z = tensor_to_matrix(g.value(z));
  if (static_cast<std::size_t>(Z.cols()) != base.dim()) {
    throw ShapeError("log_unnormalized_op: z has " + std::to_string(Z.cols()) + " columns, base has " +
                     std::to_string(base.dim()));
  }
  const Eigen::VectorXd value = base.log_unnormalized(Z);
  std::vector<Var> inputs{z};
  for (Parameter* p : params.parameters()) inputs.push_back(g.parameter(*p));

  Tensor out = Tensor::matrix(static_cast<std::size_t>(Z.rows()), 1);
  for (Eigen::Index r = 0; r < Z.rows(); ++r) out[static_cast<std::size_t>(r)] = value[r];

  auto shared = std::make_shared<const SmoothedBase>(base);
  const BaseKind kind = params.kind();
  const auto partition = params.partition();
  return g.custom(
      "base_log_unnormalized", std::move(inputs), std::move(out),
      [shared, Z, kind, partition](const Tensor& up, std::span<Tensor* const> grads) {
        const Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(up.data(), idx(up.size()));
        if (grads[0]) {
          const SpinMatrix dz = u.asDiagonal() * shared->gradient_z(Z);
          for (std::size_t i = 0; i < grads[0]->size(); ++i) (*grads[0])[i] += dz.data()[i];
        }
        if (kind == BaseKind::kRbm || kind == BaseKind::kDFlow) {
          Eigen::MatrixXd dJ;
          Eigen::VectorXd dh;
          spin_unnormalized_grads(*shared, Z, u, dJ, dh);
          mask_couplings(kind, partition, dJ);
          const std::vector<Tensor> raw = raw_spin_grads(kind, partition, dJ, dh);
          for (std::size_t k = 0; k < raw.size(); ++k) add_into(grads[1 + k], raw[k]);
        } else if (kind == BaseKind::kMultiCov && grads[1]) {
          // log_unnormalized = -1/2 |C'z|^2; raw diagonal stores log C_ii.
          const Eigen::MatrixXd& C = shared->cholesky_lower();
          const Eigen::MatrixXd V = Z * C;
          const Eigen::MatrixXd dC = -(Z.transpose() * (u.asDiagonal() * V));
          Tensor& G = *grads[1];
          const std::size_t n = shared->dim();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < i; ++j) G(i, j) += dC(idx(i), idx(j));
            G(i, i) += dC(idx(i), idx(i)) * C(idx(i), idx(i));
          }
        }
      });
}

Var log_partition_op(Graph& g, const SmoothedBase& base, BaseParameters& params,
                     const NegativePhase& negative, double log_z_s) {
  if (base.kind() != params.kind()) throw ConfigError("log_partition_op: kind mismatch");
  std::vector<Var> inputs;
  for (Parameter* p : params.parameters()) inputs.push_back(g.parameter(*p));
  Tensor value({1, 1}, std::vector<double>{base.log_z_continuous(log_z_s)});
  if (inputs.empty()) return g.constant(std::move(value));

  const BaseKind kind = params.kind();
  const auto partition = params.partition();
  const std::size_t n = base.dim();
  Eigen::MatrixXd dJ;
  Eigen::VectorXd dh;
  if (kind == BaseKind::kRbm || kind == BaseKind::kDFlow) {
    if (static_cast<std::size_t>(negative.mean.size()) != n) {
      throw ConfigError("log_partition_op: negative phase has the wrong dimension");
    }
    dJ = kind == BaseKind::kRbm ? Eigen::MatrixXd(negative.second - base.jtilde_inverse())
                                : Eigen::MatrixXd::Zero(idx(n), idx(n));
    mask_couplings(kind, partition, dJ);
    dh = negative.mean;
  }
  return g.custom("base_log_partition", std::move(inputs), std::move(value),
                  [kind, partition, dJ, dh, n](const Tensor& up, std::span<Tensor* const> grads) {
                    const double u = up[0];
                    if (kind == BaseKind::kMultiCov) {
                      if (!grads[0]) return;
                      for (std::size_t i = 0; i < n; ++i) (*grads[0])(i, i) -= u;
                      return;
                    }
                    const std::vector<Tensor> raw = raw_spin_grads(kind, partition, dJ * u, dh * u);
                    for (std::size_t k = 0; k < raw.size(); ++k) add_into(grads[k], raw[k]);
                  });
}

}  // namespace ebmflow
