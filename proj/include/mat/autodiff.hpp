// Copyright 2026 The mat-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over dense row-major
// float64 tensors.
//
// A Tensor is an immutable value (shape + shared data) that may carry a
// handle into a Tape. Operations whose inputs are all constants compute
// values only; as soon as one input lives on a tape the result is recorded
// on that tape together with its backward rule. Tape::backward walks the
// recorded nodes once, in reverse recording order.
//
// Broadcasting is limited to "row" operands: a vector of the trailing
// dimension applied to every leading-batch row (bias add, layer-norm gain).

#ifndef MAT_AUTODIFF_HPP_
#define MAT_AUTODIFF_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mat::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  // A scalar zero constant.
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_->size(); }
  std::span<const double> values() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  // Value of a single-element tensor.
  double item() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  // Same values, no tape handle.
  Tensor detach() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Gradient buffers handed to backward rules. of() returns an empty span for
// tensors that are not recorded on the tape being differentiated.
class GradAccess {
 public:
  virtual ~GradAccess() = default;
  virtual std::span<double> of(const Tensor& t) = 0;
};

using BackwardFn =
    std::function<void(std::span<const double> grad_out, GradAccess& grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf (parameter) whose gradient is wanted.
  Tensor watch(const Tensor& value);

  // Records an operation output. Every input on a tape must be on this one.
  Tensor record(Shape shape, std::vector<double> values,
                std::span<const Tensor> inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss. Returns the number of nodes whose
  // backward rule ran (each reachable node exactly once).
  std::size_t backward(const Tensor& loss);

  // Gradient of the loss w.r.t. t after backward(); zeros when t was not
  // reached.
  std::vector<double> grad(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }
  // Input node indices of node i, for structural checks.
  const std::vector<std::size_t>& inputs_of(std::size_t i) const {
    return nodes_[i].inputs;
  }

 private:
  struct Node {
    std::size_t size = 0;
    BackwardFn backward;
    std::vector<std::size_t> inputs;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// ---- Linear algebra ----------------------------------------------------

// [m, k] x [k, p] -> [m, p]
Tensor matmul(const Tensor& a, const Tensor& b);
// [B, m, k] x [B, k, p] -> [B, m, p]
Tensor bmm(const Tensor& a, const Tensor& b);
// [B, m, k] x [B, p, k]^T -> [B, m, p]
Tensor bmm_nt(const Tensor& a, const Tensor& b);
// [..., k] x [k, p] (+ [p]) -> [..., p]. Pass an empty Tensor-like bias by
// using the two-argument overload.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& weight);

// ---- Elementwise --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[..., d] + v[d] for every leading row.
Tensor add_row(const Tensor& x, const Tensor& v);
// x[..., d] * v[d] for every leading row.
Tensor mul_row(const Tensor& x, const Tensor& v);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
// Exact (erf) form.
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
// Throws NumericError on non-positive input.
Tensor log(const Tensor& x);
// Elementwise minimum; ties route the gradient to `a`.
Tensor minimum(const Tensor& a, const Tensor& b);
// Clamps to [lo, hi]. Gradient 1 inside the interval, 0 outside.
Tensor clip_nograd(const Tensor& x, double lo, double hi);

// ---- Reductions ---------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Sums the trailing axis: [..., d] -> [...].
Tensor sum_last(const Tensor& x);

// ---- Normalization ------------------------------------------------------

// Numerically stable softmax along `axis` (negative counts from the back).
// Throws NumericError on non-finite input.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);
// Softmax over the trailing axis of [..., n, n] scores where only entries
// with allowed[r * n + j] != 0 take part; excluded entries output exactly 0.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// ---- Structural ---------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
// Concatenates along the trailing axis; leading dims must agree.
Tensor concat_last(std::span<const Tensor> parts);
// x[:, index, ...] for a tensor of rank >= 2.
Tensor take_axis1(const Tensor& x, std::size_t index);
// Inverse of take_axis1: stacks equal-shaped parts along a new axis 1.
Tensor stack_axis1(std::span<const Tensor> parts);
// x[..., k] -> [...] picking x[r, indices[r]] for every leading row r.
Tensor gather_last(const Tensor& x, std::span<const std::size_t> indices);

}  // namespace mat::ad

#endif  // MAT_AUTODIFF_HPP_
