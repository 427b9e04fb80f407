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

#include <ostream>
#include <string>

#include "config.hpp"
#include "train.hpp"

namespace ebmflow {

struct RunData {
  Dataset train;
  Dataset test;
};

// Toy sets draw train and test from independent streams of the run seed;
// image files are split into the first train_size and the next test_size
// images.
RunData load_run_data(const RunConfig& cfg);

struct RunSummary {
  std::size_t epochs_run = 0;  // in this invocation
  std::size_t final_epoch = 0;
  bool has_metrics = false;
  EpochMetrics last;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Trains for cfg.train.epochs total epochs, writing <output_dir>/metrics.csv
// (one row per epoch) and <output_dir>/checkpoint.ebmf at the configured
// cadence and at the end. With `resume`, training continues from the
// checkpoint in output_dir, whose architecture must match the config; metric
// rows past the checkpoint epoch are dropped before appending.
RunSummary train_run(const RunConfig& cfg, bool resume, std::ostream* log = nullptr);

}  // namespace ebmflow
