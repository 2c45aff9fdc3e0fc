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

// On-policy training: rollout collection, advantage estimation, the encoder
// and decoder losses, and the joint Adam update.

#ifndef MAT_TRAINING_HPP_
#define MAT_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mat/autodiff.hpp"
#include "mat/envs.hpp"
#include "mat/mat_model.hpp"
#include "mat/params.hpp"

namespace mat::training {

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.05;
  double entropy_coef = 0.01;
  std::size_t ppo_epochs = 10;
  std::size_t num_minibatch = 1;
  std::size_t rollout_length = 25;
  std::size_t parallel_envs = 8;
  double actor_lr = 5e-4;
  double critic_lr = 5e-4;
  double max_grad_norm = 10.0;
  double adam_eps = 1e-5;
  std::size_t target_sync_epochs = 10;
  bool normalize_advantages = true;
  std::size_t workers = 1;

  // Throws ValidationError naming every violated field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// T steps x E environments x n agents. Per-agent arrays are in position
// order of `ordering`; sample index = t * E + e.
struct TrajectoryBuffer {
  TrajectoryBuffer(std::size_t steps, std::size_t envs, std::size_t agents,
                   std::size_t obs_dim, std::size_t action_width);

  std::size_t steps, envs, agents, obs_dim, action_width;
  std::vector<std::size_t> ordering;
  std::vector<double> obs;         // [(T + 1) E, n, obs_dim]; row T bootstraps
  std::vector<double> actions;     // [T E, n, width]
  std::vector<double> log_probs;   // [T E, n]
  std::vector<double> values;      // [(T + 1) E, n]
  std::vector<double> rewards;     // [T E, n], equal across agents
  std::vector<std::uint8_t> dones; // [T E]
  std::vector<double> advantages;  // [T E, n]
  std::vector<double> returns;     // [T E, n]
  // Returns of the episodes that finished during collection, by env.
  std::vector<double> episode_returns;
  bool has_bootstrap = false;
  bool has_advantages = false;

  std::size_t samples() const { return steps * envs; }
  std::size_t index(std::size_t t, std::size_t e) const {
    return t * envs + e;
  }
  // Drops advantages and the bootstrap row; storage is kept.
  void clear();
};

// Joint: one advantage per step from the mean of the agents' values,
// shared by every agent. PerAgent: an independent estimate per agent.
enum class AdvantageMode { kJoint, kPerAgent };

// Single-sequence GAE recursion. values[t] estimates step t; `bootstrap`
// values the state after the last step.
std::vector<double> gae(std::span<const double> rewards,
                        std::span<const double> values,
                        std::span<const std::uint8_t> dones, double bootstrap,
                        double gamma, double lambda);

// Fills advantages and returns (advantage + value). Throws ContractError
// without a bootstrap row.
void compute_gae(TrajectoryBuffer& buffer, double gamma, double lambda,
                 AdvantageMode mode);

// Mean squared Bellman error. values is [B, n] on the tape; rewards [B];
// next_target_values [B * n] from the frozen target path. With `mean_value`
// the agents' values are averaged inside the error.
ad::Tensor encoder_loss(const ad::Tensor& values,
                        std::span<const double> rewards,
                        std::span<const double> next_target_values,
                        std::span<const std::uint8_t> dones, double gamma,
                        bool mean_value);

struct DecoderLossStats {
  double clip_fraction = 0.0;
  double entropy = 0.0;
};

// Clipped surrogate plus entropy bonus over [B, n] log-probs. Throws
// NumericError naming the sample and position of a non-finite ratio.
ad::Tensor decoder_loss(const ad::Tensor& log_probs, const ad::Tensor& entropy,
                        std::span<const double> old_log_probs,
                        std::span<const double> advantages, double clip,
                        double entropy_coef, DecoderLossStats* stats = nullptr);

// Scales the gradients so their global L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_grad_norm(std::vector<std::vector<double>>& grads,
                      double max_norm);

class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-5;
  };

  Adam(const ParameterSet& params, Config config);

  // lrs[i] is the learning rate of parameter i. Throws NumericError naming
  // the first parameter with a non-finite gradient; nothing is updated then.
  void step(ParameterSet& params,
            const std::vector<std::vector<double>>& grads,
            std::span<const double> lrs);

  std::uint64_t steps() const { return steps_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);
  const Config& config() const { return config_; }

 private:
  Config config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct IterationMetrics {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  double mean_return = 0.0;
  double encoder_loss = 0.0;
  double decoder_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double explained_variance = 0.0;
  double wall_seconds = 0.0;
};

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> returns;
};

// Runs whole episodes with a fresh random agent ordering each. Throws
// ContractError when episodes == 0.
EvalResult evaluate_policy(const MatModel& model,
                           const envs::Environment& prototype,
                           std::size_t episodes, ActMode mode,
                           std::uint64_t seed);

// Everything that must be saved to resume training bit-exactly.
struct TrainerState {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  std::size_t policy_epochs = 0;
  double last_mean_return = 0.0;
  std::string master_rng;
  std::vector<std::string> env_rngs;
};

class Trainer {
 public:
  Trainer(MatModel model, const envs::Environment& prototype,
          TrainConfig config, std::uint64_t seed);

  // One collection phase followed by one training phase. If collection or
  // an update throws, parameters and optimizer state are left unchanged.
  IterationMetrics train_iteration();

  // Rollout of rollout_length steps from every environment under
  // `ordering`, bootstrap row included.
  TrajectoryBuffer collect(const AgentOrdering& ordering);

  const MatModel& model() const { return model_; }
  MatModel& model() { return model_; }
  const Adam& optimizer() const { return adam_; }
  Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return config_; }
  std::size_t iteration() const { return iteration_; }

  // Iteration counters and rng streams. Restoring resets the environments
  // from their restored generators.
  TrainerState state() const;
  void restore(const TrainerState& state);

 private:
  void reset_envs();
  std::vector<double> learning_rates() const;

  MatModel model_;
  TrainConfig config_;
  Adam adam_;
  std::vector<std::unique_ptr<envs::Environment>> envs_;
  std::vector<Rng> env_rngs_;
  std::vector<envs::Observations> current_obs_;
  std::vector<double> running_return_;
  Rng rng_;
  std::size_t iteration_ = 0;
  std::size_t env_steps_ = 0;
  std::size_t policy_epochs_ = 0;
  double last_mean_return_ = 0.0;
};

// Append-only metrics log with a fixed header.
class MetricsCsv {
 public:
  static constexpr const char* kHeader =
      "iteration,env_steps,mean_return,encoder_loss,decoder_loss,entropy,"
      "clip_fraction,explained_variance,wall_seconds";

  // Writes the header when the file is new or empty.
  explicit MetricsCsv(const std::string& path);
  void append(const IterationMetrics& m);

 private:
  std::ofstream out_;
};

std::string format_metrics_row(const IterationMetrics& m);

// Worker threads for rollouts: the requested count capped by MAT_THREADS.
std::size_t effective_workers(std::size_t requested);

}  // namespace mat::training

#endif  // MAT_TRAINING_HPP_
