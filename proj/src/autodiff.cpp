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

#include "mat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

#include "mat/errors.hpp"

namespace mat::ad {

namespace {

using Data = std::shared_ptr<const std::vector<double>>;

Data share(std::vector<double> v) {
  return std::make_shared<const std::vector<double>>(std::move(v));
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape != nullptr && tape != t->tape()) {
      throw ContractError("operation mixes tensors from different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

// Builds an op result: a plain constant when no input is on a tape,
// otherwise a recorded node. `fn` reads the gradient of the output.
Tensor make(Shape shape, std::vector<double> values,
            std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) return Tensor(std::move(shape), std::move(values));
  std::vector<Tensor> in;
  in.reserve(inputs.size());
  for (const Tensor* t : inputs) in.push_back(*t);
  return tape->record(std::move(shape), std::move(values), in, std::move(fn));
}

Tensor make_multi(Shape shape, std::vector<double> values,
                  std::span<const Tensor> inputs, BackwardFn fn) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.on_tape()) continue;
    if (tape != nullptr && tape != t.tape()) {
      throw ContractError("operation mixes tensors from different tapes");
    }
    tape = t.tape();
  }
  if (tape == nullptr) return Tensor(std::move(shape), std::move(values));
  return tape->record(std::move(shape), std::move(values), inputs,
                      std::move(fn));
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a,
                                 const Shape& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << to_string(a) << " and "
     << to_string(b);
  throw ShapeError(os.str());
}

std::size_t leading_rows(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

// c[m,p] += a[m,k] * b[k,p]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a[i * k + kk];
      const double* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[m,p] += a[m,k] * b[p,k]^T. b is transposed once so the inner loop is a
// contiguous axpy; each output row still depends only on its own a row.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t p) {
  std::vector<double> bt(k * p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t kk = 0; kk < k; ++kk) bt[kk * p + j] = b[j * k + kk];
  }
  gemm_nn(a, bt.data(), c, m, k, p);
}

// c[k,p] += a[m,k]^T * b[m,p]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a[i * k + kk];
      double* crow = c + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <class F, class D>
Tensor unary(const Tensor& x, F f, D d) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  if (!x.on_tape()) return Tensor(x.shape(), std::move(out));
  auto y = std::make_shared<std::vector<double>>(out);
  return make(x.shape(), std::move(out), {&x},
              [x, y, d](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                if (gx.empty()) return;
                const auto xv = x.values();
                for (std::size_t i = 0; i < gx.size(); ++i) {
                  gx[i] += g[i] * d(xv[i], (*y)[i]);
                }
              });
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
}

void require_row(const char* op, const Tensor& x, const Tensor& v) {
  if (x.rank() < 1 || v.rank() != 1 || x.shape().back() != v.dim(0)) {
    shape_mismatch(op, x.shape(), v.shape());
  }
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r) {
    throw ContractError("axis " + std::to_string(axis) +
                        " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

void require_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

}  // namespace

// ---- Shape / Tensor -----------------------------------------------------

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : data_(share({0.0})) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)) {
  if (values.size() != numel(shape_)) {
    throw ShapeError("tensor of shape " + to_string(shape_) + " given " +
                     std::to_string(values.size()) + " values");
  }
  data_ = share(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = 0;
  return t;
}

// ---- Tape ---------------------------------------------------------------

Tensor Tape::watch(const Tensor& value) {
  if (value.on_tape()) {
    throw ContractError("watch: tensor already belongs to a tape");
  }
  Tensor t = value;
  t.tape_ = this;
  t.node_ = nodes_.size();
  nodes_.push_back(Node{value.size(), nullptr, {}});
  return t;
}

Tensor Tape::record(Shape shape, std::vector<double> values,
                    std::span<const Tensor> inputs, BackwardFn backward) {
  Node node;
  node.size = values.size();
  node.backward = std::move(backward);
  for (const Tensor& in : inputs) {
    if (!in.on_tape()) continue;
    if (in.tape() != this) {
      throw ContractError("record: input belongs to a different tape");
    }
    node.inputs.push_back(in.node());
  }
  Tensor t(std::move(shape), std::move(values));
  t.tape_ = this;
  t.node_ = nodes_.size();
  nodes_.push_back(std::move(node));
  return t;
}

namespace {

class TapeGrads : public GradAccess {
 public:
  TapeGrads(const Tape* tape, std::vector<std::vector<double>>& grads,
            const std::vector<std::size_t>& sizes)
      : tape_(tape), grads_(grads), sizes_(sizes) {}

  std::span<double> of(const Tensor& t) override {
    if (t.tape() != tape_) return {};
    auto& g = grads_[t.node()];
    if (g.empty()) g.assign(sizes_[t.node()], 0.0);
    return g;
  }

 private:
  const Tape* tape_;
  std::vector<std::vector<double>>& grads_;
  const std::vector<std::size_t>& sizes_;
};

}  // namespace

std::size_t Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) {
    throw ContractError("backward: loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        to_string(loss.shape()));
  }
  grads_.assign(nodes_.size(), {});
  std::vector<std::size_t> sizes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) sizes[i] = nodes_[i].size;
  TapeGrads access(this, grads_, sizes);
  grads_[loss.node()] = {1.0};

  std::size_t visited = 0;
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    if (grads_[i].empty() || !nodes_[i].backward) continue;
    nodes_[i].backward(grads_[i], access);
    ++visited;
    // Intermediate gradients are not needed once propagated.
    std::vector<double>().swap(grads_[i]);
  }
  return visited;
}

std::vector<double> Tape::grad(const Tensor& t) const {
  if (t.tape() != this) {
    throw ContractError("grad: tensor is not recorded on this tape");
  }
  if (t.node() < grads_.size() && !grads_[t.node()].empty()) {
    return grads_[t.node()];
  }
  return std::vector<double>(t.size(), 0.0);
}

// ---- Linear algebra -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<double> out(m * p, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, p);
  return make({m, p}, std::move(out), {&a, &b},
              [a, b, m, k, p](std::span<const double> g, GradAccess& acc) {
                if (auto ga = acc.of(a); !ga.empty()) {
                  gemm_nt(g.data(), b.values().data(), ga.data(), m, p, k);
                }
                if (auto gb = acc.of(b); !gb.empty()) {
                  gemm_tn(a.values().data(), g.data(), gb.data(), m, k, p);
                }
              });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1)) {
    shape_mismatch("bmm", a.shape(), b.shape());
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2),
                    p = b.dim(2);
  std::vector<double> out(batch * m * p, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(a.values().data() + i * m * k, b.values().data() + i * k * p,
            out.data() + i * m * p, m, k, p);
  }
  return make(
      {batch, m, p}, std::move(out), {&a, &b},
      [a, b, batch, m, k, p](std::span<const double> g, GradAccess& acc) {
        auto ga = acc.of(a);
        auto gb = acc.of(b);
        for (std::size_t i = 0; i < batch; ++i) {
          const double* gi = g.data() + i * m * p;
          if (!ga.empty()) {
            gemm_nt(gi, b.values().data() + i * k * p, ga.data() + i * m * k,
                    m, p, k);
          }
          if (!gb.empty()) {
            gemm_tn(a.values().data() + i * m * k, gi, gb.data() + i * k * p,
                    m, k, p);
          }
        }
      });
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2)) {
    shape_mismatch("bmm_nt", a.shape(), b.shape());
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2),
                    p = b.dim(1);
  std::vector<double> out(batch * m * p, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nt(a.values().data() + i * m * k, b.values().data() + i * p * k,
            out.data() + i * m * p, m, k, p);
  }
  return make(
      {batch, m, p}, std::move(out), {&a, &b},
      [a, b, batch, m, k, p](std::span<const double> g, GradAccess& acc) {
        auto ga = acc.of(a);
        auto gb = acc.of(b);
        for (std::size_t i = 0; i < batch; ++i) {
          const double* gi = g.data() + i * m * p;
          if (!ga.empty()) {
            gemm_nn(gi, b.values().data() + i * p * k, ga.data() + i * m * k,
                    m, p, k);
          }
          if (!gb.empty()) {
            gemm_tn(gi, a.values().data() + i * m * k, gb.data() + i * p * k,
                    m, p, k);
          }
        }
      });
}

namespace {

Tensor linear_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    shape_mismatch("linear", x.shape(), w.shape());
  }
  const std::size_t rows = leading_rows(x.shape()), k = w.dim(0),
                    p = w.dim(1);
  if (bias != nullptr && (bias->rank() != 1 || bias->dim(0) != p)) {
    shape_mismatch("linear(bias)", w.shape(), bias->shape());
  }
  std::vector<double> out(rows * p, 0.0);
  if (bias != nullptr) {
    const auto bv = bias->values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(bv.begin(), bv.end(), out.begin() + r * p);
    }
  }
  gemm_nn(x.values().data(), w.values().data(), out.data(), rows, k, p);
  Shape shape = x.shape();
  shape.back() = p;
  const Tensor b = bias != nullptr ? *bias : Tensor();
  const bool has_bias = bias != nullptr;
  return make(std::move(shape), std::move(out), {&x, &w, &b},
              [x, w, b, has_bias, rows, k, p](std::span<const double> g,
                                              GradAccess& acc) {
                if (auto gx = acc.of(x); !gx.empty()) {
                  gemm_nt(g.data(), w.values().data(), gx.data(), rows, p, k);
                }
                if (auto gw = acc.of(w); !gw.empty()) {
                  gemm_tn(x.values().data(), g.data(), gw.data(), rows, k, p);
                }
                if (!has_bias) return;
                if (auto gb = acc.of(b); !gb.empty()) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < p; ++j) gb[j] += g[r * p + j];
                  }
                }
              });
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return linear_impl(x, weight, &bias);
}

Tensor linear(const Tensor& x, const Tensor& weight) {
  return linear_impl(x, weight, nullptr);
}

// ---- Elementwise --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make(a.shape(), std::move(out), {&a, &b},
              [a, b](std::span<const double> g, GradAccess& acc) {
                for (const Tensor* t : {&a, &b}) {
                  auto gt = acc.of(*t);
                  for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
                }
              });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make(a.shape(), std::move(out), {&a, &b},
              [a, b](std::span<const double> g, GradAccess& acc) {
                auto ga = acc.of(a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                auto gb = acc.of(b);
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
              });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make(a.shape(), std::move(out), {&a, &b},
              [a, b](std::span<const double> g, GradAccess& acc) {
                auto ga = acc.of(a);
                for (std::size_t i = 0; i < ga.size(); ++i) {
                  ga[i] += g[i] * b[i];
                }
                auto gb = acc.of(b);
                for (std::size_t i = 0; i < gb.size(); ++i) {
                  gb[i] += g[i] * a[i];
                }
              });
}

Tensor add_row(const Tensor& x, const Tensor& v) {
  require_row("add_row", x, v);
  const std::size_t d = v.size(), rows = x.size() / d;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] + v[j];
  }
  return make(x.shape(), std::move(out), {&x, &v},
              [x, v, rows, d](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                auto gv = acc.of(v);
                if (gv.empty()) return;
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t j = 0; j < d; ++j) gv[j] += g[r * d + j];
                }
              });
}

Tensor mul_row(const Tensor& x, const Tensor& v) {
  require_row("mul_row", x, v);
  const std::size_t d = v.size(), rows = x.size() / d;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] * v[j];
  }
  return make(x.shape(), std::move(out), {&x, &v},
              [x, v, rows, d](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                auto gv = acc.of(v);
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t j = 0; j < d; ++j) {
                    const std::size_t i = r * d + j;
                    if (!gx.empty()) gx[i] += g[i] * v[j];
                    if (!gv.empty()) gv[j] += g[i] * x[i];
                  }
                }
              });
}

Tensor scale(const Tensor& x, double s) {
  return unary(
      x, [s](double v) { return s * v; },
      [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
               v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) {
      throw NumericError("log: non-positive input " + std::to_string(v));
    }
  }
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape("minimum", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i] <= b[i] ? a[i] : b[i];
  }
  return make(a.shape(), std::move(out), {&a, &b},
              [a, b](std::span<const double> g, GradAccess& acc) {
                auto ga = acc.of(a);
                auto gb = acc.of(b);
                for (std::size_t i = 0; i < a.size(); ++i) {
                  if (a[i] <= b[i]) {
                    if (!ga.empty()) ga[i] += g[i];
                  } else if (!gb.empty()) {
                    gb[i] += g[i];
                  }
                }
              });
}

Tensor clip_nograd(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ContractError("clip_nograd: lo > hi");
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) {
        return (v >= lo && v <= hi) ? 1.0 : 0.0;
      });
}

// ---- Reductions ---------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make({}, {s}, {&x}, [x](std::span<const double> g, GradAccess& acc) {
    auto gx = acc.of(x);
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_last(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("sum_last: scalar input");
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r] += x[r * d + j];
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  return make(std::move(shape), std::move(out), {&x},
              [x, rows, d](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                if (gx.empty()) return;
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r];
                }
              });
}

// ---- Normalization ------------------------------------------------------

namespace {

struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
  std::size_t at(std::size_t o, std::size_t j, std::size_t i) const {
    return (o * len + j) * inner + i;
  }
};

AxisLayout layout_for(const Shape& shape, std::size_t axis) {
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  require_finite("softmax", x.values());
  const AxisLayout l = layout_for(x.shape(), normalize_axis(axis, x.rank()));
  if (l.len == 0) throw ShapeError("softmax: empty axis");
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.len; ++j) mx = std::max(mx, x[l.at(o, j, i)]);
      double total = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) {
        const double e = std::exp(x[l.at(o, j, i)] - mx);
        out[l.at(o, j, i)] = e;
        total += e;
      }
      for (std::size_t j = 0; j < l.len; ++j) out[l.at(o, j, i)] /= total;
    }
  }
  if (!x.on_tape()) return Tensor(x.shape(), std::move(out));
  auto y = std::make_shared<std::vector<double>>(out);
  return make(x.shape(), std::move(out), {&x},
              [x, y, l](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                if (gx.empty()) return;
                for (std::size_t o = 0; o < l.outer; ++o) {
                  for (std::size_t i = 0; i < l.inner; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < l.len; ++j) {
                      dot += (*y)[l.at(o, j, i)] * g[l.at(o, j, i)];
                    }
                    for (std::size_t j = 0; j < l.len; ++j) {
                      const std::size_t k = l.at(o, j, i);
                      gx[k] += (*y)[k] * (g[k] - dot);
                    }
                  }
                }
              });
}

Tensor log_softmax(const Tensor& x, int axis) {
  if (x.rank() == 0) throw ShapeError("log_softmax: scalar input");
  require_finite("log_softmax", x.values());
  const AxisLayout l = layout_for(x.shape(), normalize_axis(axis, x.rank()));
  if (l.len == 0) throw ShapeError("log_softmax: empty axis");
  std::vector<double> out(x.size());
  auto probs = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.len; ++j) mx = std::max(mx, x[l.at(o, j, i)]);
      double total = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) {
        total += std::exp(x[l.at(o, j, i)] - mx);
      }
      const double lse = mx + std::log(total);
      for (std::size_t j = 0; j < l.len; ++j) {
        const std::size_t k = l.at(o, j, i);
        out[k] = x[k] - lse;
        (*probs)[k] = std::exp(out[k]);
      }
    }
  }
  return make(x.shape(), std::move(out), {&x},
              [x, probs, l](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                if (gx.empty()) return;
                for (std::size_t o = 0; o < l.outer; ++o) {
                  for (std::size_t i = 0; i < l.inner; ++i) {
                    double total = 0.0;
                    for (std::size_t j = 0; j < l.len; ++j) {
                      total += g[l.at(o, j, i)];
                    }
                    for (std::size_t j = 0; j < l.len; ++j) {
                      const std::size_t k = l.at(o, j, i);
                      gx[k] += g[k] - (*probs)[k] * total;
                    }
                  }
                }
              });
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed) {
  if (x.rank() < 2 || x.shape().back() != x.dim(x.rank() - 2)) {
    throw ShapeError("masked_softmax: expected [..., n, n], got " +
                     to_string(x.shape()));
  }
  const std::size_t n = x.shape().back();
  if (allowed.size() != n * n) {
    throw ShapeError("masked_softmax: mask has " +
                     std::to_string(allowed.size()) + " entries for n=" +
                     std::to_string(n));
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (std::none_of(allowed.begin() + r * n, allowed.begin() + (r + 1) * n,
                     [](std::uint8_t a) { return a != 0; })) {
      throw ContractError("masked_softmax: mask row " + std::to_string(r) +
                          " excludes every position");
    }
  }
  const std::size_t mats = x.size() / (n * n);
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t b = 0; b < mats; ++b) {
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t base = (b * n + r) * n;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (!allowed[r * n + j]) continue;
        if (!std::isfinite(x[base + j])) {
          throw NumericError("masked_softmax: non-finite input");
        }
        mx = std::max(mx, x[base + j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!allowed[r * n + j]) continue;
        out[base + j] = std::exp(x[base + j] - mx);
        total += out[base + j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (allowed[r * n + j]) out[base + j] /= total;
      }
    }
  }
  if (!x.on_tape()) return Tensor(x.shape(), std::move(out));
  auto y = std::make_shared<std::vector<double>>(out);
  return make(x.shape(), std::move(out), {&x},
              [x, y, n, mats](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                if (gx.empty()) return;
                for (std::size_t row = 0; row < mats * n; ++row) {
                  const std::size_t base = row * n;
                  double dot = 0.0;
                  for (std::size_t j = 0; j < n; ++j) {
                    dot += (*y)[base + j] * g[base + j];
                  }
                  for (std::size_t j = 0; j < n; ++j) {
                    gx[base + j] += (*y)[base + j] * (g[base + j] - dot);
                  }
                }
              });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_row("layer_norm", x, gain);
  require_row("layer_norm", x, bias);
  const std::size_t d = gain.size(), rows = x.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gain[j] + bias[j];
    }
  }
  return make(
      x.shape(), std::move(out), {&x, &gain, &bias},
      [x, gain, bias, xhat, inv_std, rows, d](std::span<const double> g,
                                              GradAccess& acc) {
        auto gx = acc.of(x);
        auto gg = acc.of(gain);
        auto gb = acc.of(bias);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * d;
          const double* hr = xhat->data() + r * d;
          if (!gg.empty()) {
            for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * hr[j];
          }
          if (!gb.empty()) {
            for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
          }
          if (gx.empty()) continue;
          double mean_g = 0.0, mean_gh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = gr[j] * gain[j];
            mean_g += gh;
            mean_gh += gh * hr[j];
          }
          mean_g *= inv_d;
          mean_gh *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = gr[j] * gain[j];
            gx[r * d + j] += (*inv_std)[r] * (gh - mean_g - hr[j] * mean_gh);
          }
        }
      });
}

// ---- Structural ---------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) shape_mismatch("reshape", x.shape(), shape);
  std::vector<double> out(x.values().begin(), x.values().end());
  return make(std::move(shape), std::move(out), {&x},
              [x](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
              });
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_last: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("concat_last: scalar input");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size() ||
        !std::equal(first.begin(), first.end() - 1, p.shape().begin())) {
      shape_mismatch("concat_last", first, p.shape());
    }
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = leading_rows(first);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < w; ++j) {
        out[r * total + offset + j] = parts[k][r * w + j];
      }
    }
    offset += w;
  }
  Shape shape = first;
  shape.back() = total;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_multi(
      std::move(shape), std::move(out), parts,
      [inputs, widths, rows, total](std::span<const double> g,
                                    GradAccess& acc) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const std::size_t w = widths[k];
          auto gk = acc.of(inputs[k]);
          if (!gk.empty()) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < w; ++j) {
                gk[r * w + j] += g[r * total + offset + j];
              }
            }
          }
          offset += w;
        }
      });
}

Tensor take_axis1(const Tensor& x, std::size_t index) {
  if (x.rank() < 2) throw ShapeError("take_axis1: rank < 2");
  const std::size_t b = x.dim(0), n = x.dim(1), inner = x.size() / (b * n);
  if (index >= n) {
    throw ContractError("take_axis1: index " + std::to_string(index) +
                        " out of range " + std::to_string(n));
  }
  std::vector<double> out(b * inner);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < inner; ++j) {
      out[i * inner + j] = x[(i * n + index) * inner + j];
    }
  }
  Shape shape = x.shape();
  shape.erase(shape.begin() + 1);
  return make(std::move(shape), std::move(out), {&x},
              [x, b, n, inner, index](std::span<const double> g,
                                      GradAccess& acc) {
                auto gx = acc.of(x);
                if (gx.empty()) return;
                for (std::size_t i = 0; i < b; ++i) {
                  for (std::size_t j = 0; j < inner; ++j) {
                    gx[(i * n + index) * inner + j] += g[i * inner + j];
                  }
                }
              });
}

Tensor stack_axis1(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("stack_axis1: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("stack_axis1: scalar input");
  for (const Tensor& p : parts) {
    if (p.shape() != first) shape_mismatch("stack_axis1", first, p.shape());
  }
  const std::size_t b = first[0], n = parts.size(),
                    inner = numel(first) / b;
  std::vector<double> out(b * n * inner);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < inner; ++j) {
        out[(i * n + k) * inner + j] = parts[k][i * inner + j];
      }
    }
  }
  Shape shape = first;
  shape.insert(shape.begin() + 1, n);
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_multi(std::move(shape), std::move(out), parts,
                    [inputs, b, n, inner](std::span<const double> g,
                                          GradAccess& acc) {
                      for (std::size_t k = 0; k < n; ++k) {
                        auto gk = acc.of(inputs[k]);
                        if (gk.empty()) continue;
                        for (std::size_t i = 0; i < b; ++i) {
                          for (std::size_t j = 0; j < inner; ++j) {
                            gk[i * inner + j] += g[(i * n + k) * inner + j];
                          }
                        }
                      }
                    });
}

Tensor gather_last(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.rank() < 1) throw ShapeError("gather_last: scalar input");
  const std::size_t k = x.shape().back(), rows = x.size() / k;
  if (indices.size() != rows) {
    throw ShapeError("gather_last: " + std::to_string(indices.size()) +
                     " indices for " + std::to_string(rows) + " rows");
  }
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (indices[r] >= k) {
      throw ContractError("gather_last: index " + std::to_string(indices[r]) +
                          " out of range " + std::to_string(k));
    }
    out[r] = x[r * k + indices[r]];
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make(std::move(shape), std::move(out), {&x},
              [x, idx, k](std::span<const double> g, GradAccess& acc) {
                auto gx = acc.of(x);
                if (gx.empty()) return;
                for (std::size_t r = 0; r < idx.size(); ++r) {
                  gx[r * k + idx[r]] += g[r];
                }
              });
}

}  // namespace mat::ad
