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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "datasets.hpp"
#include "model.hpp"
#include "spin_model.hpp"

namespace ebmflow {

enum class L2Mode { kPenalty, kClip };
enum class NegativeMode { kPcd, kExact };

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 20;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t pcd_k = 200;
  std::size_t pcd_chains = 64;
  // RBM / DFLOW couplings and biases.
  double l2_coeff = 1e-4;
  L2Mode l2_mode = L2Mode::kPenalty;
  double clip_norm = 10.0;
  double dropout = 0.2;
  NegativeMode negative = NegativeMode::kPcd;
  // log Z estimator for per-epoch metrics; exact falls back to nothing, so
  // callers pick AIS for large spin counts.
  LogZMode metrics_logz = LogZMode::kExact;
  AisSettings ais;
  std::size_t eval_batch = 1000;

  void validate() const;
};

struct StepResult {
  double objective = 0.0;  // batch loss with the log Z_s term omitted for RBM
  bool rejected = false;
};

struct EvalMetrics {
  double nll_nats = 0.0;  // per example; discrete-data NLL in image mode
  double bpd = 0.0;
  double log_z = 0.0;
  double log_z_stderr = 0.0;
  std::size_t count = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  EvalMetrics eval;
  std::size_t pd_failures = 0;  // cumulative
  double seconds = 0.0;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t t = 0;
};

// Owns the mutable training state: model parameters, Adam moments, PCD
// chains and the stream driving batching, dropout and dequantization noise.
class Trainer {
 public:
  Trainer(EbmFlowModel& model, TrainConfig cfg);

  // One Adam step on a batch (rows of data space values or pixels). A
  // proposed update that makes Jt indefinite is undone and counted; the PCD
  // chains are restored with it. Non-finite losses throw NumericError.
  StepResult step(const Tensor& batch);
  // One shuffled pass over `train`.
  double run_epoch(const Dataset& train);

  EbmFlowModel& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t pd_failures() const { return pd_failures_; }
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t e) { epoch_ = e; }
  void set_pd_failures(std::size_t n) { pd_failures_ = n; }
  AdamState& adam() { return adam_; }
  PcdState& pcd() { return pcd_; }
  Rng& rng() { return rng_; }

  // Loss on a batch as a fresh graph. Exposed for gradient checks; `exact`
  // replaces PCD by the enumerated negative phase and disables dropout.
  Var loss(Graph& g, const Tensor& batch, const SmoothedBase& base, const NegativePhase& negative,
           bool train_mode);

 private:
  NegativePhase negative_phase(const SmoothedBase& base);
  void clip_base();

  EbmFlowModel& model_;
  TrainConfig cfg_;
  AdamState adam_;
  PcdState pcd_;
  Rng rng_;
  std::size_t pd_failures_ = 0;
  std::size_t epoch_ = 0;
};

// Mean test NLL with the log Z estimate attached. Image data is evaluated at
// bin centers (x + 0.5) / 256 without importance sampling.
EvalMetrics eval_model(EbmFlowModel& model, const Dataset& data, LogZMode mode,
                       const AisSettings& ais, std::size_t batch = 1000);

// Symmetrized KL 0.5 (KL(p||q) + KL(q||p)) between grid x grid histograms
// over the bounding box of `reference`, each bin Laplace-smoothed by one
// count. Points outside the box fall into the nearest edge bin.
double sample_quality_2d(const Tensor& samples, const Tensor& reference, std::size_t grid);

// Metrics CSV: header `epoch,nll_nats,bpd,logz,logz_stderr,pd_failures,seconds`.
std::string metrics_header();
std::string metrics_row(const EpochMetrics& m);

}  // namespace ebmflow
