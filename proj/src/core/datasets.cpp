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

#include "datasets.hpp"

#include <cmath>
#include <numbers>

#include "errors.hpp"
#include "model.hpp"
#include "tensor_io.hpp"

namespace ebmflow {

DatasetId DatasetId::parse(std::string_view text) {
  DatasetId id;
  if (text == "moons") {
    id.kind = DatasetKind::kMoons;
  } else if (text == "rings") {
    id.kind = DatasetKind::kRings;
  } else if (text == "gauss8") {
    id.kind = DatasetKind::kGauss8;
  } else if (text == "checker") {
    id.kind = DatasetKind::kChecker;
  } else if (text.starts_with("binimg:") && text.size() > 7) {
    id.kind = DatasetKind::kBinImg;
    id.path = std::string(text.substr(7));
  } else {
    throw ConfigError("unknown dataset '" + std::string(text) +
                      "' (expected moons, rings, gauss8, checker or binimg:<path>)");
  }
  return id;
}

std::string DatasetId::str() const {
  switch (kind) {
    case DatasetKind::kMoons: return "moons";
    case DatasetKind::kRings: return "rings";
    case DatasetKind::kGauss8: return "gauss8";
    case DatasetKind::kChecker: return "checker";
    case DatasetKind::kBinImg: return "binimg:" + path;
  }
  return "";
}

std::pair<double, double> gauss8_center(std::size_t k) {
  const double t = 2.0 * std::numbers::pi * static_cast<double>(k % 8) / 8.0;
  return {2.0 * std::cos(t), 2.0 * std::sin(t)};
}

Dataset make_dataset(const DatasetId& id, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  Dataset ds;
  if (id.kind == DatasetKind::kBinImg) {
    const Tensor all = read_tensor(id.path);
    if (all.rank() != 4) {
      throw FormatError(id.path + ": image tensor must be N x H x W x C, got " + all.shape_string());
    }
    const auto& s = all.shape();
    if (n > s[0]) {
      throw ConfigError(id.path + " holds " + std::to_string(s[0]) + " images, " +
                        std::to_string(n) + " requested");
    }
    ds.image = true;
    ds.shape = {s[1], s[2], s[3]};
    const std::size_t D = ds.shape.size();
    ds.x = Tensor::matrix(n, D);
    std::copy(all.data(), all.data() + n * D, ds.x.data());
    validate_pixels(ds.x);
    return ds;
  }

  Rng rng(seed, 0xDA7AULL);
  ds.shape = {1, 1, 2};
  ds.x = Tensor::matrix(n, 2);
  const double pi = std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    double a = 0.0, b = 0.0;
    switch (id.kind) {
      case DatasetKind::kMoons: {
        const double t = pi * rng.uniform();
        if (rng.uniform() < 0.5) {
          a = std::cos(t), b = std::sin(t);
        } else {
          a = 1.0 - std::cos(t), b = 0.5 - std::sin(t);
        }
        a += 0.1 * rng.normal();
        b += 0.1 * rng.normal();
        break;
      }
      case DatasetKind::kRings: {
        const double r = rng.uniform() < 0.5 ? 1.0 : 2.0;
        const double t = 2.0 * pi * rng.uniform();
        a = r * std::cos(t) + 0.08 * rng.normal();
        b = r * std::sin(t) + 0.08 * rng.normal();
        break;
      }
      case DatasetKind::kGauss8: {
        const auto [cx, cy] = gauss8_center(rng.below(8));
        a = cx + 0.1 * rng.normal();
        b = cy + 0.1 * rng.normal();
        break;
      }
      case DatasetKind::kChecker: {
        // Column k in [-2, 2) of unit width; filled rows alternate with k.
        a = 4.0 * rng.uniform() - 2.0;
        const double col = std::floor(a);
        const double row = 2.0 * static_cast<double>(rng.below(2)) - 2.0;
        const double parity = std::fmod(std::abs(col), 2.0);
        b = row + parity + rng.uniform();
        break;
      }
      case DatasetKind::kBinImg: break;
    }
    ds.x(i, 0) = a;
    ds.x(i, 1) = b;
  }
  return ds;
}

}  // namespace ebmflow
