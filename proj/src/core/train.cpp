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

#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "errors.hpp"

namespace ebmflow {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Tensor take_rows(const Tensor& x, std::span<const std::size_t> rows) {
  Tensor out = Tensor::matrix(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data() + rows[i] * x.cols(), x.cols(), out.data() + i * x.cols());
  }
  return out;
}

Tensor row_range(const Tensor& x, std::size_t begin, std::size_t end) {
  Tensor out = Tensor::matrix(end - begin, x.cols());
  std::copy(x.data() + begin * x.cols(), x.data() + end * x.cols(), out.data());
  return out;
}

bool spin_kind(BaseKind k) { return k == BaseKind::kRbm || k == BaseKind::kDFlow; }

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string(what));
  };
  positive(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate must be >= 0");
  positive(batch_size >= 1, "batch_size must be >= 1");
  positive(pcd_k >= 1, "pcd_k must be >= 1");
  positive(pcd_chains >= 1, "pcd_chains must be >= 1");
  positive(l2_coeff >= 0.0, "l2_coeff must be >= 0");
  positive(clip_norm > 0.0, "clip_norm must be positive");
  positive(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  positive(ais.temps >= 2, "ais_temps must be >= 2");
  positive(ais.chains >= 2, "ais_chains must be >= 2");
  positive(eval_batch >= 1, "eval_batch must be >= 1");
}

Trainer::Trainer(EbmFlowModel& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), rng_(cfg_.seed, 0x7EA1ULL) {
  cfg_.validate();
  for (Parameter* p : model_.parameters()) {
    adam_.m.emplace_back(p->value.shape(), 0.0);
    adam_.v.emplace_back(p->value.shape(), 0.0);
  }
  if (model_.spec().base == BaseKind::kRbm) {
    pcd_ = PcdState(cfg_.pcd_chains, model_.dim(), Rng(cfg_.seed, 0x9CDULL).next_u64());
  }
}

NegativePhase Trainer::negative_phase(const SmoothedBase& base) {
  if (base.kind() == BaseKind::kRbm && cfg_.negative == NegativeMode::kPcd) {
    NegativeStats st = pcd_negative_stats(base.spin_model(), pcd_, cfg_.pcd_k);
    return {std::move(st.mean), std::move(st.second)};
  }
  return exact_negative_phase(base);
}

Var Trainer::loss(Graph& g, const Tensor& batch, const SmoothedBase& base,
                  const NegativePhase& negative, bool train_mode) {
  FlowContext ctx;
  if (train_mode) {
    ctx.dropout_rng = &rng_;
    ctx.dropout = cfg_.dropout;
  }
  Var per_row;
  if (model_.spec().dequant != Dequant::kNone) {
    const Dequantized dq = model_.dequantize(g, batch, rng_, ctx);
    per_row = g.sub(model_.log_unnormalized(g, dq.x_cont, base, ctx), dq.log_q);
  } else {
    per_row = model_.log_unnormalized(g, g.constant(batch), base, ctx);
  }
  const double rows = static_cast<double>(batch.rows());
  double log_z_s = 0.0;
  if (base.kind() == BaseKind::kDFlow) {
    const Eigen::VectorXd& h = base.spin_model().biases();
    for (Eigen::Index i = 0; i < h.size(); ++i) log_z_s += log_2cosh(h[i]);
  }
  Var l = g.add(g.scale(g.sum(per_row), -1.0 / rows),
                log_partition_op(g, base, model_.base_params(), negative, log_z_s));
  if (cfg_.l2_mode == L2Mode::kPenalty && cfg_.l2_coeff > 0.0 && spin_kind(base.kind())) {
    for (Parameter* p : model_.base_params().parameters()) {
      Var v = g.parameter(*p);
      l = g.add(l, g.scale(g.sum(g.mul(v, v)), cfg_.l2_coeff));
    }
  }
  return l;
}

void Trainer::clip_base() {
  if (!spin_kind(model_.spec().base)) return;
  for (Parameter* p : model_.base_params().parameters()) {
    double sq = 0.0;
    for (double v : p->value.values()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) {
      for (double& v : p->value.values()) v *= cfg_.clip_norm / norm;
    }
  }
}

StepResult Trainer::step(const Tensor& batch) {
  if (batch.rank() != 2 || batch.rows() == 0 || batch.cols() != model_.dim()) {
    throw ShapeError("training batch must be rows x " + std::to_string(model_.dim()));
  }
  const SmoothedBase base = model_.build_base();
  const bool may_fail = model_.spec().base == BaseKind::kRbm;
  std::optional<PcdState> pcd_saved;
  if (may_fail) pcd_saved = pcd_;
  const NegativePhase negative = negative_phase(base);

  const std::vector<Parameter*> params = model_.parameters();
  for (Parameter* p : params) p->zero_grad();
  StepResult result;
  {
    Graph g;
    Var l = loss(g, batch, base, negative, true);
    result.objective = g.value(l)[0];
    if (!std::isfinite(result.objective)) {
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch_));
    }
    g.backward(l);
  }
  for (Parameter* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient for " + p->name + " at epoch " + std::to_string(epoch_));
    }
  }

  std::vector<Tensor> values_saved;
  AdamState adam_saved;
  if (may_fail) {
    for (Parameter* p : params) values_saved.push_back(p->value);
    adam_saved = adam_;
  }
  adam_.t += 1;
  const double t = static_cast<double>(adam_.t);
  const double c1 = 1.0 - std::pow(kBeta1, t), c2 = 1.0 - std::pow(kBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& val = params[k]->value;
    const Tensor& grad = params[k]->grad;
    Tensor& m = adam_.m[k];
    Tensor& v = adam_.v[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      val[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
    }
  }
  if (cfg_.l2_mode == L2Mode::kClip) clip_base();
  if (may_fail) {
    try {
      (void)model_.build_base();
    } catch (const PdFailure&) {
      for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = std::move(values_saved[k]);
      adam_ = std::move(adam_saved);
      pcd_ = std::move(*pcd_saved);
      ++pd_failures_;
      result.rejected = true;
    }
  }
  return result;
}

double Trainer::run_epoch(const Dataset& train) {
  if (train.size() == 0) throw ConfigError("empty training set");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);
  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t b = 0; b < order.size(); b += cfg_.batch_size) {
    const std::size_t e = std::min(order.size(), b + cfg_.batch_size);
    const Tensor batch = take_rows(train.x, std::span(order).subspan(b, e - b));
    total += step(batch).objective;
    ++steps;
  }
  ++epoch_;
  return total / static_cast<double>(steps);
}

EvalMetrics eval_model(EbmFlowModel& model, const Dataset& data, LogZMode mode,
                       const AisSettings& ais, std::size_t batch) {
  if (data.size() == 0) throw ConfigError("empty evaluation set");
  if (data.dim() != model.dim()) {
    throw ConfigError("dataset has " + std::to_string(data.dim()) + " dimensions, model expects " +
                      std::to_string(model.dim()));
  }
  const SmoothedBase base = model.build_base();
  const LogZEstimate lz = model.log_z(base, mode, ais);
  const bool discrete = model.spec().dequant != Dequant::kNone;
  double sum = 0.0;
  for (std::size_t b = 0; b < data.size(); b += batch) {
    Tensor x = row_range(data.x, b, std::min(data.size(), b + batch));
    if (discrete) {
      validate_pixels(x);
      for (double& v : x.values()) v = (v + 0.5) / 256.0;
    }
    sum += model.log_likelihood(x, base, lz.log_z).sum();
  }
  EvalMetrics m;
  m.count = data.size();
  m.nll_nats = -sum / static_cast<double>(data.size());
  if (discrete) m.nll_nats += dequant_log_scale(data.dim());
  m.bpd = m.nll_nats / (static_cast<double>(data.dim()) * std::numbers::ln2);
  m.log_z = lz.log_z;
  m.log_z_stderr = lz.std_error;
  if (!std::isfinite(m.nll_nats)) throw NumericError("non-finite evaluation NLL");
  return m;
}

double sample_quality_2d(const Tensor& samples, const Tensor& reference, std::size_t grid) {
  if (samples.rank() != 2 || reference.rank() != 2 || samples.cols() != 2 || reference.cols() != 2) {
    throw ConfigError("sample_quality_2d needs 2-D point sets");
  }
  if (samples.rows() == 0 || reference.rows() == 0) throw ConfigError("sample_quality_2d: empty dataset");
  if (grid == 0) throw ConfigError("sample_quality_2d: grid must be positive");
  double lo[2] = {reference(0, 0), reference(0, 1)}, hi[2] = {lo[0], lo[1]};
  for (std::size_t i = 0; i < reference.rows(); ++i) {
    for (int d = 0; d < 2; ++d) {
      lo[d] = std::min(lo[d], reference(i, d));
      hi[d] = std::max(hi[d], reference(i, d));
    }
  }
  auto histogram = [&](const Tensor& pts) {
    std::vector<double> h(grid * grid, 1.0);
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      std::size_t cell[2];
      for (int d = 0; d < 2; ++d) {
        const double w = hi[d] > lo[d] ? hi[d] - lo[d] : 1.0;
        const double f = std::floor((pts(i, d) - lo[d]) / w * static_cast<double>(grid));
        const double c = std::isfinite(f) ? std::clamp(f, 0.0, static_cast<double>(grid - 1)) : 0.0;
        cell[d] = static_cast<std::size_t>(c);
      }
      h[cell[0] * grid + cell[1]] += 1.0;
    }
    const double total = std::accumulate(h.begin(), h.end(), 0.0);
    for (double& v : h) v /= total;
    return h;
  };
  const std::vector<double> p = histogram(samples), q = histogram(reference);
  double kl_pq = 0.0, kl_qp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    kl_pq += p[i] * std::log(p[i] / q[i]);
    kl_qp += q[i] * std::log(q[i] / p[i]);
  }
  return 0.5 * (kl_pq + kl_qp);
}

std::string metrics_header() { return "epoch,nll_nats,bpd,logz,logz_stderr,pd_failures,seconds"; }

std::string metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.10f,%.10f,%.10f,%.10f,%zu,%.3f", m.epoch, m.eval.nll_nats,
                m.eval.bpd, m.eval.log_z, m.eval.log_z_stderr, m.pd_failures, m.seconds);
  return buf;
}

}  // namespace ebmflow
