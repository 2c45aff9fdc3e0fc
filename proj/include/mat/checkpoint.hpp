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

// Binary checkpoints and rolling retention.
//
// Layout (little-endian host order, no padding):
//   "MATCKPT1" magic, u32 version
//   string config_text
//   u64 iteration, u64 env_steps, u64 policy_epochs, f64 last_mean_return
//   string master_rng, u64 count, count x string env_rng
//   tensors params, tensors target
//   u64 adam_steps, u64 count, count x (vec m, vec v)
// where string = u64 length + bytes, vec = u64 length + f64 values and
// tensors = u64 count, count x (string name, u64 rank, rank x u64 dim,
// f64 values).

#ifndef MAT_CHECKPOINT_HPP_
#define MAT_CHECKPOINT_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mat/params.hpp"
#include "mat/training.hpp"

namespace mat::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  std::string config_text;
  training::TrainerState state;
  std::vector<Parameter> params;
  std::vector<Parameter> target;
  std::uint64_t adam_steps = 0;
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
};

std::string encode(const Checkpoint& ckpt);
// Throws FormatError on truncation, a bad magic or an unknown version.
Checkpoint decode(std::string_view bytes);

// Writes through a temporary file and a rename.
void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path);

Checkpoint capture(const training::Trainer& trainer,
                   const std::string& config_text);
// Restores parameters, target, optimizer and trainer state.
void restore(const Checkpoint& ckpt, training::Trainer& trainer);

// Copies tensors by name. Throws FormatError naming the first tensor that
// is missing, unexpected or of a different shape.
void assign(ParameterSet& dst, std::span<const Parameter> src);

// "ckpt_000050.bin" style name for an iteration.
std::string file_name(std::size_t iteration);
// Deletes all but the `keep` highest-iteration checkpoints in dir.
void prune(const std::string& dir, std::size_t keep);
// Checkpoint files in dir, oldest first.
std::vector<std::string> list(const std::string& dir);

}  // namespace mat::checkpoint

#endif  // MAT_CHECKPOINT_HPP_
