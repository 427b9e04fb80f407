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

#include "figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "errors.hpp"

namespace ebmflow {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Box {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;

  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  void finish() {
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  }
};

// Plot area inside a panel of the given origin and size.
struct Frame {
  double left, top, width, height;
  Box box;

  double px(double x) const { return left + (x - box.x0) / (box.x1 - box.x0) * width; }
  double py(double y) const { return top + height - (y - box.y0) / (box.y1 - box.y0) * height; }

  void axes(std::ostringstream& os) const {
    os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(width)
       << "\" height=\"" << num(height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << num(left) << "\" y=\"" << num(top + height + 16) << "\" font-size=\"11\">"
       << label(box.x0) << "</text>\n";
    os << "<text x=\"" << num(left + width) << "\" y=\"" << num(top + height + 16)
       << "\" font-size=\"11\" text-anchor=\"end\">" << label(box.x1) << "</text>\n";
    os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(top + height)
       << "\" font-size=\"11\" text-anchor=\"end\">" << label(box.y0) << "</text>\n";
    os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(top + 10)
       << "\" font-size=\"11\" text-anchor=\"end\">" << label(box.y1) << "</text>\n";
  }
};

void header(std::ostringstream& os, double w, double h, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" viewBox=\"0 0 " << num(w) << " " << num(h) << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(w / 2) << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
     << escape(title) << "</text>\n";
}

void points(std::ostringstream& os, const Frame& f, const Tensor& pts, const char* color) {
  os << "<g fill=\"" << color << "\" fill-opacity=\"0.5\">\n";
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    if (!std::isfinite(pts(i, 0)) || !std::isfinite(pts(i, 1))) continue;
    os << "<circle cx=\"" << num(f.px(pts(i, 0))) << "\" cy=\"" << num(f.py(pts(i, 1)))
       << "\" r=\"1.2\"/>\n";
  }
  os << "</g>\n";
}

void check_points(const Tensor& pts) {
  if (pts.rank() != 2 || pts.cols() != 2) {
    throw ConfigError("scatter input must have exactly 2 columns, got shape " + pts.shape_string());
  }
}

}  // namespace

const std::vector<double>& CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return columns[i];
  }
  throw ConfigError("CSV has no column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (t.header.empty()) {
      t.header = cells;
      t.columns.assign(cells.size(), {});
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ConfigError("malformed CSV: line " + std::to_string(lineno) + " has " +
                        std::to_string(cells.size()) + " fields, expected " +
                        std::to_string(t.header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (cells[c].empty() || end != cells[c].c_str() + cells[c].size()) {
        throw ConfigError("malformed CSV: non-numeric field '" + cells[c] + "' on line " +
                          std::to_string(lineno));
      }
      t.columns[c].push_back(v);
    }
  }
  if (t.header.empty()) throw ConfigError("malformed CSV: empty input");
  if (t.rows() == 0) throw ConfigError("malformed CSV: no data rows");
  return t;
}

std::string to_csv(const Tensor& pts, const std::vector<std::string>& header) {
  if (pts.rank() != 2 || pts.cols() != header.size()) throw ShapeError("to_csv: header width mismatch");
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  out += "\n";
  char buf[40];
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    for (std::size_t j = 0; j < pts.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", pts(i, j));
      out += (j ? "," : "");
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string svg_curves(const std::string& title, const std::vector<Series>& series) {
  if (series.empty()) throw ConfigError("curve plot needs at least one series");
  Frame f{60, 40, 520, 320, {}};
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) f.box.add(s.x[i], s.y[i]);
  }
  f.box.finish();
  std::ostringstream os;
  header(os, 640, 420, title);
  f.axes(os);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      if (!std::isfinite(series[k].y[i])) continue;
      os << num(f.px(series[k].x[i])) << "," << num(f.py(series[k].y[i])) << " ";
    }
    os << "\"/>\n<text x=\"" << num(f.left + f.width - 4) << "\" y=\"" << num(f.top + 14 + 14 * k)
       << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(series[k].name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_scatter(const std::string& title, const Tensor& pts) {
  check_points(pts);
  Frame f{60, 40, 400, 400, {}};
  for (std::size_t i = 0; i < pts.rows(); ++i) f.box.add(pts(i, 0), pts(i, 1));
  f.box.finish();
  std::ostringstream os;
  header(os, 500, 480, title);
  f.axes(os);
  points(os, f, pts, kPalette[0]);
  os << "</svg>\n";
  return os.str();
}

std::string svg_panels(const std::string& title, const std::vector<Tensor>& panels,
                       const std::vector<std::string>& labels) {
  if (panels.empty()) throw ConfigError("panel plot needs at least one panel");
  if (labels.size() != panels.size()) throw ShapeError("one label per panel required");
  Box box;
  for (const Tensor& p : panels) {
    check_points(p);
    for (std::size_t i = 0; i < p.rows(); ++i) box.add(p(i, 0), p(i, 1));
  }
  box.finish();
  const double size = 200, gap = 50;
  const double w = 50 + static_cast<double>(panels.size()) * (size + gap);
  std::ostringstream os;
  header(os, w, size + 100, title);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    Frame f{50 + static_cast<double>(k) * (size + gap), 50, size, size, box};
    f.axes(os);
    os << "<text x=\"" << num(f.left + size / 2) << "\" y=\"" << num(f.top - 6)
       << "\" font-size=\"11\" text-anchor=\"middle\">" << escape(labels[k]) << "</text>\n";
    points(os, f, panels[k], kPalette[k % 8]);
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<unsigned char> ppm_grid(const Tensor& images, const EventShape& shape,
                                    std::size_t per_column) {
  if (images.rank() != 2 || images.cols() != shape.size()) {
    throw ShapeError("image grid expects rows of " + std::to_string(shape.size()) + " pixel values");
  }
  if (shape.channels != 1 && shape.channels != 3) throw ConfigError("image grid needs 1 or 3 channels");
  if (per_column == 0) throw ConfigError("per_column must be positive");
  const std::size_t n = images.rows();
  const std::size_t cols = std::max<std::size_t>(1, (n + per_column - 1) / per_column);
  const std::size_t pad = 1;
  const std::size_t W = cols * (shape.width + pad) + pad, H = per_column * (shape.height + pad) + pad;
  std::vector<unsigned char> rgb(W * H * 3, 128);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t gc = k / per_column, gr = k % per_column;
    const std::size_t ox = pad + gc * (shape.width + pad), oy = pad + gr * (shape.height + pad);
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t src = (y * shape.width + x) * shape.channels + (shape.channels == 1 ? 0 : c);
          const double v = std::clamp(std::round(images(k, src)), 0.0, 255.0);
          rgb[((oy + y) * W + ox + x) * 3 + c] = static_cast<unsigned char>(v);
        }
      }
    }
  }
  const std::string head = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  std::vector<unsigned char> out(head.begin(), head.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

}  // namespace ebmflow
