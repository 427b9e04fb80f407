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

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace ebmflow {

// Dense row-major tensor of doubles. Rank 0 is a scalar holding one element.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  // 1 x n row vector.
  static Tensor row(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols(), cols()}; }

  bool all_finite() const;
  Tensor reshaped(Shape shape) const;
  std::string shape_string() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// A named trainable leaf with a gradient slot of the same shape.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape(), 0.0);
  }
  void zero_grad() { grad = Tensor(value.shape(), 0.0); }

  std::string name;
  Tensor value;
  Tensor grad;
};

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t index = kNone;
  bool valid() const { return index != kNone; }
};

// Single-use reverse-mode tape over rank-2 tensors. Nodes are appended in
// evaluation order, which is a topological order; backward() walks it once in
// reverse and then marks the graph consumed.
//
// Binary elementwise ops broadcast any operand dimension of size 1 (a leading
// batch dimension, a 1 x d row, or a 1 x 1 scalar).
class Graph {
 public:
  // Receives the upstream gradient of the node and one gradient buffer per
  // input (null for inputs that do not need one). Implementations accumulate.
  using Vjp = std::function<void(const Tensor& upstream, std::span<Tensor* const> input_grads)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var log(Var a);
  // Sum of all entries, 1 x 1.
  Var sum(Var a);
  // Per-row sum, rows x 1.
  Var sum_rows(Var a);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  // Column gather; a contiguous range is the common case.
  Var take_cols(Var a, std::vector<std::size_t> columns);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var concat_cols(std::span<const Var> parts);
  // Reinterprets row-major storage under a new rows x cols shape.
  Var reshape(Var a, std::size_t rows, std::size_t cols);
  // Hook for primitives with hand-written vector-Jacobian products.
  Var custom(std::string_view name, std::vector<Var> inputs, Tensor value, Vjp vjp);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Accumulates d(loss)/d(parameter) into every Parameter::grad reachable from
  // loss. Parameters not connected to loss keep their gradient unchanged.
  void backward(Var loss);

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<std::size_t> inputs;
    Vjp vjp;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(std::string_view op, Tensor value, std::vector<std::size_t> inputs, Vjp vjp);
  const Node& node(Var v) const;
  Var unary(std::string_view op, Var a, double (*f)(double), double (*df)(double x, double y));
  Var binary(std::string_view op, Var a, Var b, int kind);

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// Max over every parameter entry of |analytic - central difference| /
// (|analytic| + 1e-8). `loss` rebuilds the scalar objective on a fresh graph.
struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

GradCheckReport grad_check(const std::function<Var(Graph&)>& loss,
                           std::span<Parameter* const> params, double eps);

}  // namespace ebmflow
