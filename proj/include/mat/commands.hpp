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

// Subcommand implementations behind the command-line tool. Each returns a
// process exit code; run_guarded maps escaped exceptions onto the same codes.

#ifndef MAT_COMMANDS_HPP_
#define MAT_COMMANDS_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "mat/config.hpp"

namespace mat::commands {

enum ExitCode : int {
  kOk = 0,
  kValidationFailure = 1,
  kNumericFailure = 2,
  kVerificationFailure = 3,
};

// Trains for config.iterations iterations, writing metrics.csv, eval.csv,
// config.ini and checkpoints under config.output_dir.
int cmd_train(const config::MatConfig& config, std::ostream& out,
              std::ostream& err);

// Loads a checkpoint and runs `episodes` evaluation episodes. With
// `architecture` the model is built from that config instead of the
// checkpoint's own, so shape mismatches are reported.
int cmd_eval(const std::string& checkpoint_path, std::size_t episodes,
             config::EvalMode mode,
             const std::optional<config::MatConfig>& architecture,
             std::uint64_t seed, std::ostream& out);

// Runs the oracle suite over `games` random tabular games.
int cmd_verify(std::uint64_t seed, std::size_t games, bool corrupt_rhs,
               std::ostream& out);

int cmd_inspect(const std::string& checkpoint_path, std::ostream& out);

int run_guarded(const std::function<int()>& command, std::ostream& err);

}  // namespace mat::commands

#endif  // MAT_COMMANDS_HPP_
