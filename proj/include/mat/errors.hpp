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

#ifndef MAT_ERRORS_HPP_
#define MAT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace mat {

// Violated precondition of an operation (bad argument, bad state).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Tensor shapes that do not fit together.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Non-finite values, log of non-positive numbers and similar.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration; the message lists every violated field.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or incompatible checkpoint file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mat

#endif  // MAT_ERRORS_HPP_
