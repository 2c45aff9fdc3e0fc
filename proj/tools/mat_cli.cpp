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

// mat: train, evaluate and verify Multi-Agent Transformer policies.
//
//   mat train --config run.ini [--set train.clip=0.1]... [--seed N] [--out DIR]
//   mat eval CHECKPOINT [--episodes N] [--mode greedy|sample|both]
//   mat verify [--seed N] [--trials N]
//   mat inspect-checkpoint CHECKPOINT

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mat/commands.hpp"
#include "mat/config.hpp"
#include "mat/errors.hpp"

namespace {

mat::config::EvalMode parse_mode(const std::string& s) {
  if (s == "greedy") return mat::config::EvalMode::kGreedy;
  if (s == "sample") return mat::config::EvalMode::kSample;
  if (s == "both") return mat::config::EvalMode::kBoth;
  throw mat::ValidationError("--mode must be greedy, sample or both");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-Agent Transformer training and verification"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  auto* train = app.add_subcommand("train", "train a policy");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--set", overrides, "override as section.key=value");
  train->add_option("--seed", seed, "run seed (overrides run.seed)");
  train->add_option("--out", out_dir, "output directory (overrides output.dir)");

  std::string ckpt_path;
  std::size_t episodes = 20;
  std::string mode = "greedy";
  std::string eval_config;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "episodes to run");
  eval->add_option("--mode", mode, "greedy, sample or both");
  eval->add_option("--config", eval_config,
                   "build the model from this config instead");
  eval->add_option("--set", overrides, "override as section.key=value");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  std::uint64_t verify_seed = 0;
  std::size_t trials = 1000;
  bool corrupt = false;
  auto* verify = app.add_subcommand("verify", "run the exact oracle suite");
  verify->add_option("--seed", verify_seed, "suite seed");
  verify->add_option("--trials", trials, "random games to check");
  verify->add_flag("--corrupt-rhs", corrupt,
                   "negative control: flip one local advantage");

  std::string inspect_path;
  auto* inspect =
      app.add_subcommand("inspect-checkpoint", "describe a checkpoint");
  inspect->add_option("checkpoint", inspect_path, "checkpoint file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mat::commands::kValidationFailure;
  }

  using namespace mat::commands;
  return run_guarded(
      [&]() -> int {
        if (*train) {
          mat::config::MatConfig cfg =
              mat::config::load_config(config_path, overrides);
          if (seed) cfg.seed = *seed;
          if (out_dir) cfg.output_dir = *out_dir;
          return cmd_train(cfg, std::cout, std::cerr);
        }
        if (*eval) {
          std::optional<mat::config::MatConfig> arch;
          if (!eval_config.empty()) {
            arch = mat::config::load_config(eval_config, overrides);
          }
          return cmd_eval(ckpt_path, episodes, parse_mode(mode), arch,
                          eval_seed, std::cout);
        }
        if (*verify) return cmd_verify(verify_seed, trials, corrupt, std::cout);
        return cmd_inspect(inspect_path, std::cout);
      },
      std::cerr);
}
