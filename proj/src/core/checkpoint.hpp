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
#include <optional>
#include <string>
#include <vector>

#include "model.hpp"
#include "train.hpp"

namespace ebmflow {

// Checkpoint file:
//   "EBMFCKPT" | u32 version | u64 header length | header JSON
//   | parameter payload | [Adam m, Adam v, PCD spins, PCD streams] | u32 crc32
// The header carries the architecture echo (model layout and the seed that
// fixes non-trainable permutations), epoch, PD-failure count, trainer RNG
// state, and the name and shape of every parameter.
constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainerSnapshot {
  std::size_t epoch = 0;
  std::size_t pd_failures = 0;
  Rng rng;
  AdamState adam;
  PcdState pcd;
};

struct Checkpoint {
  std::unique_ptr<EbmFlowModel> model;
  std::uint64_t model_seed = 0;
  std::string dataset;
  std::size_t epoch = 0;
  std::string architecture;  // canonical JSON echo
  std::optional<TrainerSnapshot> trainer;
};

// Canonical JSON of the model layout, used to validate resumes.
std::string architecture_echo(const ModelSpec& spec, std::uint64_t model_seed);

std::vector<unsigned char> encode_checkpoint(EbmFlowModel& model, std::uint64_t model_seed,
                                             const std::string& dataset, std::size_t epoch,
                                             Trainer* trainer);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::string& path, EbmFlowModel& model, std::uint64_t model_seed,
                     const std::string& dataset, std::size_t epoch, Trainer* trainer);
Checkpoint load_checkpoint(const std::string& path);

// Copies Adam moments, PCD chains, RNG, epoch and failure count into `trainer`.
void restore_trainer(Trainer& trainer, const TrainerSnapshot& snap);

}  // namespace ebmflow
