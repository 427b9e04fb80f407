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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "datasets.hpp"
#include "model.hpp"
#include "train.hpp"

namespace ebmflow {

// File form of a training run. INI sections:
//
//   [data]          dataset (required), train_size, test_size
//   [architecture]  base (required), delta, coupling, components, width,
//                   blocks, dequant, dequant_blocks, logit_alpha,
//                   sample_burn_in
//   [training]      learning_rate, batch_size, epochs, seed, pcd_k,
//                   pcd_chains, l2_coeff, l2_mode, clip_norm, dropout,
//                   negative_phase, logz, ais_temps, ais_chains, eval_batch,
//                   output_dir, checkpoint_every, record_time
//
// Unknown sections or keys are rejected.
struct RunConfig {
  std::optional<DatasetId> dataset;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;

  std::optional<BaseKind> base;
  std::optional<double> delta;  // default depends on the base kind
  CouplingKind coupling = CouplingKind::kMixLogCdf;
  std::size_t components = 4;
  std::size_t width = 64;
  std::size_t blocks = 6;
  std::optional<Dequant> dequant;  // none for toy data, uniform for images
  std::size_t dequant_blocks = 4;
  double logit_alpha = 0.05;
  std::size_t sample_burn_in = 1000;

  TrainConfig train;
  std::optional<LogZMode> logz;  // exact when the spin count allows it
  std::string output_dir = "run";
  std::size_t checkpoint_every = 1;
  bool record_time = true;

  // Throws ConfigError naming the offending key.
  void set(std::string_view key, std::string_view value);
  // Checks required fields and ranges.
  void validate() const;
  // Canonical INI text (every key, fixed order).
  std::string to_ini() const;

  // Model layout for data of the given shape.
  ModelSpec model_spec(const EventShape& shape, bool image) const;
  LogZMode metrics_logz(std::size_t spins) const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace ebmflow
