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
#include <string>
#include <string_view>

#include "flow.hpp"
#include "tensor.hpp"

namespace ebmflow {

enum class DatasetKind { kMoons, kRings, kGauss8, kChecker, kBinImg };

// "moons", "rings", "gauss8", "checker" or "binimg:<path>".
struct DatasetId {
  DatasetKind kind = DatasetKind::kMoons;
  std::string path;

  static DatasetId parse(std::string_view text);
  std::string str() const;
  bool image() const { return kind == DatasetKind::kBinImg; }
};

struct Dataset {
  Tensor x;  // n x D; images are flattened HWC with values in {0..255}
  bool image = false;
  EventShape shape;

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
};

// Toy sets are 2-D:
//   moons   two interleaved half circles, Gaussian noise 0.1
//   rings   radii 1 and 2, equal mass, Gaussian noise 0.08
//   gauss8  8 Gaussians centered on a radius-2 circle, sigma 0.1
//   checker 2 x 4 checkerboard of uniform squares on [-2, 2]^2
// binimg reads an N x H x W x C tensor file and keeps the first n images.
Dataset make_dataset(const DatasetId& id, std::size_t n, std::uint64_t seed);

// Center of GAUSS8 component k.
std::pair<double, double> gauss8_center(std::size_t k);

}  // namespace ebmflow
