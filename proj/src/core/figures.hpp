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

#include <string>
#include <vector>

#include "flow.hpp"
#include "tensor.hpp"

namespace ebmflow {

// Numeric CSV with a header row. Throws ConfigError when empty, ragged or
// non-numeric.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns[0].size(); }
  const std::vector<double>& column(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);
std::string to_csv(const Tensor& points, const std::vector<std::string>& header);

struct Series {
  std::string name;
  std::vector<double> x, y;
};

// Line chart, one polyline per series.
std::string svg_curves(const std::string& title, const std::vector<Series>& series);
// Scatter of an n x 2 point set.
std::string svg_scatter(const std::string& title, const Tensor& points);
// Side-by-side scatter panels sharing one bounding box.
std::string svg_panels(const std::string& title, const std::vector<Tensor>& panels,
                       const std::vector<std::string>& labels);

// Binary PPM (P6) tiling of images (rows of flattened HWC pixel values in
// [0, 255]) in column-major order: image c * per_column + r lands in grid
// column c, row r. Grayscale images are replicated to RGB.
std::vector<unsigned char> ppm_grid(const Tensor& images, const EventShape& shape,
                                    std::size_t per_column);

}  // namespace ebmflow
