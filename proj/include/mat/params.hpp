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

// Named parameter storage and per-pass bindings.

#ifndef MAT_PARAMS_HPP_
#define MAT_PARAMS_HPP_

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mat/autodiff.hpp"

namespace mat {

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  ad::Tensor value;
};

// Insertion-ordered set of named tensors. Values are immutable tensors;
// updates replace them wholesale, so bindings taken earlier stay valid.
class ParameterSet {
 public:
  void add(std::string name, ad::Tensor value);
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  const ad::Tensor& get(std::string_view name) const;
  const ad::Tensor& at(std::size_t i) const { return params_[i].value; }
  const std::string& name(std::size_t i) const { return params_[i].name; }
  // Replaces the value; the shape must not change.
  void set(std::size_t i, ad::Tensor value);
  void set(std::string_view name, ad::Tensor value);

  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tensors standing in for a ParameterSet during one forward pass: either the
// constant values themselves or leaves watched on a tape.
class Binding {
 public:
  static Binding constant(const ParameterSet& params);
  static Binding watched(const ParameterSet& params, ad::Tape& tape);

  const ad::Tensor& operator()(std::string_view name) const;
  const ad::Tensor& at(std::size_t i) const { return tensors_[i]; }
  std::size_t size() const { return tensors_.size(); }
  const ParameterSet& params() const { return *params_; }

 private:
  explicit Binding(const ParameterSet& params) : params_(&params) {}
  const ParameterSet* params_;
  std::vector<ad::Tensor> tensors_;
};

// Random orthogonal [rows x cols] matrix (orthonormal rows or columns,
// whichever is shorter) scaled by `gain`.
ad::Tensor orthogonal(std::size_t rows, std::size_t cols, double gain,
                      Rng& rng);

}  // namespace mat

#endif  // MAT_PARAMS_HPP_
