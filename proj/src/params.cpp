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

#include "mat/params.hpp"

#include <Eigen/Dense>
#include <utility>

#include "mat/errors.hpp"

namespace mat {

void ParameterSet::add(std::string name, ad::Tensor value) {
  if (index_.contains(name)) {
    throw ContractError("duplicate parameter '" + name + "'");
  }
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), value.detach()});
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ContractError("unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

const ad::Tensor& ParameterSet::get(std::string_view name) const {
  return params_[index_of(name)].value;
}

void ParameterSet::set(std::size_t i, ad::Tensor value) {
  if (value.shape() != params_[i].value.shape()) {
    throw ShapeError("parameter '" + params_[i].name + "' has shape " +
                     ad::to_string(params_[i].value.shape()) + ", got " +
                     ad::to_string(value.shape()));
  }
  params_[i].value = value.detach();
}

void ParameterSet::set(std::string_view name, ad::Tensor value) {
  set(index_of(name), std::move(value));
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Binding Binding::constant(const ParameterSet& params) {
  Binding b(params);
  b.tensors_.reserve(params.size());
  for (const auto& p : params) b.tensors_.push_back(p.value);
  return b;
}

Binding Binding::watched(const ParameterSet& params, ad::Tape& tape) {
  Binding b(params);
  b.tensors_.reserve(params.size());
  for (const auto& p : params) b.tensors_.push_back(tape.watch(p.value));
  return b;
}

const ad::Tensor& Binding::operator()(std::string_view name) const {
  return tensors_[params_->index_of(name)];
}

ad::Tensor orthogonal(std::size_t rows, std::size_t cols, double gain,
                      Rng& rng) {
  const std::size_t tall = std::max(rows, cols), wide = std::min(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(tall, wide);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(tall, wide);
  // Sign fix so the distribution is uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(wide);
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  std::vector<double> values(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = rows >= cols ? q(i, j) : q(j, i);
      values[i * cols + j] = gain * v;
    }
  }
  return ad::Tensor({rows, cols}, std::move(values));
}

}  // namespace mat
