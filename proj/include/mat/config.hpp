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

// Run configuration: sectioned key = value text.
//
//   [env]     name (required), agents, actions, horizon, grid, states,
//             game_gamma, game_seed
//   [model]   variant (mat | mat-dec), d_model, heads, blocks,
//             activation (gelu | relu)
//   [train]   iterations, gamma, lambda, clip, entropy_coef, ppo_epochs,
//             num_minibatch, rollout_length, parallel_envs, actor_lr,
//             critic_lr, max_grad_norm, adam_eps, target_sync_epochs,
//             normalize_advantages, workers
//   [eval]    interval, episodes, mode (greedy | sample | both)
//   [output]  dir, checkpoint_interval, checkpoint_keep
//   [run]     seed
//
// Sections and keys may appear in any order; unknown ones are rejected.

#ifndef MAT_CONFIG_HPP_
#define MAT_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "mat/envs.hpp"
#include "mat/mat_model.hpp"
#include "mat/training.hpp"

namespace mat::config {

enum class EvalMode { kGreedy, kSample, kBoth };

struct MatConfig {
  envs::EnvSpec env;
  Variant variant = Variant::kMat;
  transformer::Dims dims;
  training::TrainConfig train;
  std::size_t iterations = 100;
  std::size_t eval_interval = 0;  // 0 disables periodic evaluation
  std::size_t eval_episodes = 20;
  EvalMode eval_mode = EvalMode::kGreedy;
  std::string output_dir = "runs/default";
  std::size_t checkpoint_interval = 50;
  std::size_t checkpoint_keep = 3;
  std::uint64_t seed = 1;

  bool operator==(const MatConfig& o) const;
};

// Parses text and applies "section.key=value" overrides. Throws
// ValidationError listing every unknown key, malformed value and violated
// constraint.
MatConfig parse_config(const std::string& text,
                       std::span<const std::string> overrides = {});
MatConfig load_config(const std::string& path,
                      std::span<const std::string> overrides = {});
std::string serialize_config(const MatConfig& config);
void validate(const MatConfig& config);

std::unique_ptr<envs::Environment> make_env(const MatConfig& config);
ModelConfig model_config(const MatConfig& config,
                         const envs::Environment& env);

const char* to_string(Variant v);
const char* to_string(EvalMode m);

}  // namespace mat::config

#endif  // MAT_CONFIG_HPP_
