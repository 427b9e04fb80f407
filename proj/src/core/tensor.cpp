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

#include "tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ebmflow {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::size_t product(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require_rank2(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + t.shape_string());
  }
}

double sigmoid_fn(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_fn(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string());
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_string());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_string());
  return shape_[1];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string() + " to a different element count");
  }
  return Tensor(std::move(shape), data_);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::push(std::string_view op, Tensor value, std::vector<std::size_t> inputs, Vjp vjp) {
  if (consumed_) throw Error("graph already consumed by backward()");
  if (!value.all_finite()) {
    throw NumericError("non-finite output from '" + std::string(op) + "'");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.vjp = std::move(vjp);
  for (std::size_t i : inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.index >= nodes_.size()) throw Error("invalid graph variable");
  return nodes_[v.index];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

Var Graph::constant(Tensor value) {
  if (value.rank() == 0) value = value.reshaped({1, 1});
  require_rank2(value, "constant");
  return push("constant", std::move(value), {}, nullptr);
}

Var Graph::parameter(Parameter& p) {
  Tensor v = p.value.rank() == 0 ? p.value.reshaped({1, 1}) : p.value;
  require_rank2(v, "parameter");
  Var out = push("parameter", std::move(v), {}, nullptr);
  nodes_[out.index].param = &p;
  nodes_[out.index].needs_grad = true;
  return out;
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: " + A.shape_string() + " x " + B.shape_string());
  }
  Tensor out = Tensor::matrix(A.rows(), B.cols());
  as_matrix(out).noalias() = as_matrix(A) * as_matrix(B);
  const std::size_t ia = a.index, ib = b.index;
  return push("matmul", std::move(out), {ia, ib},
              [this, ia, ib](const Tensor& g, std::span<Tensor* const> grads) {
                if (grads[0]) as_matrix(*grads[0]).noalias() += as_matrix(g) * as_matrix(nodes_[ib].value).transpose();
                if (grads[1]) as_matrix(*grads[1]).noalias() += as_matrix(nodes_[ia].value).transpose() * as_matrix(g);
              });
}

Var Graph::binary(std::string_view op, Var a, Var b, int kind) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  const std::size_t ar = A.rows(), ac = A.cols(), br = B.rows(), bc = B.cols();
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op) + ": cannot broadcast " + A.shape_string() + " with " +
                     B.shape_string());
  };
  const std::size_t r = dim(ar, br), c = dim(ac, bc);
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ai = ar == 1 ? 0 : i, bi = br == 1 ? 0 : i;
    for (std::size_t j = 0; j < c; ++j) {
      const double x = A(ai, ac == 1 ? 0 : j);
      const double y = B(bi, bc == 1 ? 0 : j);
      out(i, j) = kind == 0 ? x + y : kind == 1 ? x - y : x * y;
    }
  }
  const std::size_t ia = a.index, ib = b.index;
  return push(op, std::move(out), {ia, ib},
              [this, ia, ib, kind, r, c](const Tensor& g, std::span<Tensor* const> grads) {
                const Tensor& A = nodes_[ia].value;
                const Tensor& B = nodes_[ib].value;
                const std::size_t ar = A.rows(), ac = A.cols(), br = B.rows(), bc = B.cols();
                for (std::size_t i = 0; i < r; ++i) {
                  const std::size_t ai = ar == 1 ? 0 : i, bi = br == 1 ? 0 : i;
                  for (std::size_t j = 0; j < c; ++j) {
                    const std::size_t aj = ac == 1 ? 0 : j, bj = bc == 1 ? 0 : j;
                    const double gij = g(i, j);
                    if (grads[0]) (*grads[0])(ai, aj) += kind == 2 ? gij * B(bi, bj) : gij;
                    if (grads[1]) {
                      (*grads[1])(bi, bj) += kind == 0 ? gij : kind == 1 ? -gij : gij * A(ai, aj);
                    }
                  }
                }
              });
}

Var Graph::add(Var a, Var b) { return binary("add", a, b, 0); }
Var Graph::sub(Var a, Var b) { return binary("sub", a, b, 1); }
Var Graph::mul(Var a, Var b) { return binary("mul", a, b, 2); }

Var Graph::unary(std::string_view op, Var a, double (*f)(double), double (*df)(double, double)) {
  const Tensor& A = node(a).value;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
  const std::size_t ia = a.index;
  Var v = push(op, std::move(out), {ia}, nullptr);
  const std::size_t io = v.index;
  nodes_[io].vjp = [this, ia, io, df](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    const Tensor& x = nodes_[ia].value;
    const Tensor& y = nodes_[io].value;
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * df(x[i], y[i]);
  };
  return v;
}

Var Graph::tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var Graph::sigmoid(Var a) {
  return unary("sigmoid", a, sigmoid_fn, [](double, double y) { return y * (1.0 - y); });
}

Var Graph::softplus(Var a) {
  return unary("softplus", a, softplus_fn, [](double x, double) { return sigmoid_fn(x); });
}

Var Graph::exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var Graph::log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var Graph::sum(Var a) {
  const Tensor& A = node(a).value;
  double s = 0.0;
  for (double v : A.values()) s += v;
  const std::size_t ia = a.index;
  return push("sum", Tensor({1, 1}, std::vector<double>{s}), {ia},
              [](const Tensor& g, std::span<Tensor* const> grads) {
                if (!grads[0]) return;
                for (double& v : grads[0]->values()) v += g[0];
              });
}

Var Graph::sum_rows(Var a) {
  const Tensor& A = node(a).value;
  Tensor out = Tensor::matrix(A.rows(), 1);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double s = 0.0;
    for (double v : A.row_span(i)) s += v;
    out[i] = s;
  }
  const std::size_t ia = a.index;
  return push("sum_rows", std::move(out), {ia},
              [](const Tensor& g, std::span<Tensor* const> grads) {
                if (!grads[0]) return;
                Tensor& G = *grads[0];
                for (std::size_t i = 0; i < G.rows(); ++i) {
                  for (double& v : G.row_span(i)) v += g[i];
                }
              });
}

Var Graph::scale(Var a, double factor) {
  const Tensor& A = node(a).value;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * factor;
  const std::size_t ia = a.index;
  return push("scale", std::move(out), {ia},
              [factor](const Tensor& g, std::span<Tensor* const> grads) {
                if (!grads[0]) return;
                for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * factor;
              });
}

Var Graph::add_scalar(Var a, double offset) {
  const Tensor& A = node(a).value;
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + offset;
  const std::size_t ia = a.index;
  return push("add_scalar", std::move(out), {ia},
              [](const Tensor& g, std::span<Tensor* const> grads) {
                if (!grads[0]) return;
                for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
              });
}

Var Graph::take_cols(Var a, std::vector<std::size_t> columns) {
  const Tensor& A = node(a).value;
  const std::size_t rows = A.rows(), in_cols = A.cols(), out_cols = columns.size();
  for (std::size_t c : columns) {
    if (c >= in_cols) throw ShapeError("take_cols: column index out of range");
  }
  Tensor out = Tensor::matrix(rows, out_cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < out_cols; ++j) out(i, j) = A(i, columns[j]);
  }
  const std::size_t ia = a.index;
  return push("take_cols", std::move(out), {ia},
              [columns = std::move(columns)](const Tensor& g, std::span<Tensor* const> grads) {
                if (!grads[0]) return;
                Tensor& G = *grads[0];
                for (std::size_t i = 0; i < g.rows(); ++i) {
                  for (std::size_t j = 0; j < columns.size(); ++j) G(i, columns[j]) += g(i, j);
                }
              });
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
  if (begin > end) throw ShapeError("slice_cols: begin > end");
  std::vector<std::size_t> cols(end - begin);
  std::iota(cols.begin(), cols.end(), begin);
  return take_cols(a, std::move(cols));
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = node(parts[0]).value.rows();
  std::size_t total = 0;
  std::vector<std::size_t> inputs, widths;
  for (Var p : parts) {
    const Tensor& t = node(p).value;
    if (t.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    inputs.push_back(p.index);
    widths.push_back(t.cols());
    total += t.cols();
  }
  Tensor out = Tensor::matrix(rows, total);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& t = node(p).value;
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy(t.row_span(i).begin(), t.row_span(i).end(), out.row_span(i).begin() + offset);
    }
    offset += t.cols();
  }
  return push("concat_cols", std::move(out), std::move(inputs),
              [widths](const Tensor& g, std::span<Tensor* const> grads) {
                std::size_t offset = 0;
                for (std::size_t k = 0; k < widths.size(); ++k) {
                  if (grads[k]) {
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      for (std::size_t j = 0; j < widths[k]; ++j) (*grads[k])(i, j) += g(i, offset + j);
                    }
                  }
                  offset += widths[k];
                }
              });
}

Var Graph::reshape(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& A = node(a).value;
  if (rows * cols != A.size()) throw ShapeError("reshape: element count mismatch");
  const std::size_t ia = a.index;
  return push("reshape", A.reshaped({rows, cols}), {ia},
              [](const Tensor& g, std::span<Tensor* const> grads) {
                if (!grads[0]) return;
                for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
              });
}

Var Graph::custom(std::string_view name, std::vector<Var> inputs, Tensor value, Vjp vjp) {
  if (value.rank() == 0) value = value.reshaped({1, 1});
  require_rank2(value, name);
  std::vector<std::size_t> idx;
  for (Var v : inputs) idx.push_back((node(v), v.index));
  return push(name, std::move(value), std::move(idx), std::move(vjp));
}

void Graph::backward(Var loss) {
  if (consumed_) throw Error("graph already consumed by backward()");
  const Node& l = node(loss);
  if (l.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + l.value.shape_string());
  }
  std::vector<Tensor> grads(loss.index + 1);
  std::vector<bool> has(loss.index + 1, false);
  grads[loss.index] = Tensor(l.value.shape(), 1.0);
  has[loss.index] = true;

  std::vector<Tensor*> input_grads;
  for (std::size_t k = loss.index + 1; k-- > 0;) {
    if (!has[k]) continue;
    Node& n = nodes_[k];
    if (n.param) {
      Tensor& pg = n.param->grad;
      if (pg.size() != n.value.size()) pg = Tensor(n.param->value.shape(), 0.0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += grads[k][i];
      continue;
    }
    if (!n.vjp) continue;
    input_grads.assign(n.inputs.size(), nullptr);
    for (std::size_t j = 0; j < n.inputs.size(); ++j) {
      const std::size_t in = n.inputs[j];
      if (!nodes_[in].needs_grad) continue;
      if (!has[in]) {
        grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
        has[in] = true;
      }
      input_grads[j] = &grads[in];
    }
    n.vjp(grads[k], input_grads);
    grads[k] = Tensor();
  }
  consumed_ = true;
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Var(Graph&)>& loss,
                           std::span<Parameter* const> params, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw ConfigError("grad_check: eps must lie in [1e-6, 1e-3]");
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var l = loss(g);
    g.backward(l);
  }
  auto eval = [&]() {
    Graph g;
    const double v = g.value(loss(g))[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite objective at perturbed point");
    return v;
  };
  GradCheckReport report;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = eval();
      p->value[i] = saved - eps;
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double rel = std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
      if (rel > report.max_relative_error) {
        report = {rel, p->name, i, analytic, numeric};
      }
    }
  }
  return report;
}

}  // namespace ebmflow
