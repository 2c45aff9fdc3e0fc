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

// The Multi-Agent Transformer policy/value model.
//
// The encoder (parameters prefixed "encoder.") maps the agents' observations
// to representations and per-agent values. The decoder (prefixed "decoder.")
// turns the representations plus the previously chosen actions into one
// action distribution per agent, in the order given by an AgentOrdering.
// The MAT-Dec variant replaces the decoder by independent per-agent heads
// ("dec_actor.agentI.") on the shared encoder.
//
// Position m of every [B, n, ...] tensor holds agent ordering.agent_at(m).

#ifndef MAT_MAT_MODEL_HPP_
#define MAT_MAT_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mat/autodiff.hpp"
#include "mat/params.hpp"
#include "mat/transformer.hpp"

namespace mat {

enum class Variant { kMat, kMatDec };

enum class ActionKind { kDiscrete, kContinuous };

struct ActionSpace {
  ActionKind kind = ActionKind::kDiscrete;
  // Number of choices (discrete) or vector dimension (continuous).
  std::size_t dim = 2;

  // Doubles stored per agent action: the index, or the vector.
  std::size_t width() const {
    return kind == ActionKind::kDiscrete ? 1 : dim;
  }
};

struct ModelConfig {
  std::size_t n_agents = 2;
  std::size_t obs_dim = 1;
  ActionSpace action;
  transformer::Dims dims;
  Variant variant = Variant::kMat;

  void validate() const;
};

// Permutation i_1..i_n of the agents for one iteration.
class AgentOrdering {
 public:
  // Throws ContractError unless `order` is a permutation of 0..n-1.
  explicit AgentOrdering(std::vector<std::size_t> order);
  static AgentOrdering identity(std::size_t n);
  static AgentOrdering random(std::size_t n, Rng& rng);

  std::size_t size() const { return order_.size(); }
  std::size_t agent_at(std::size_t position) const { return order_[position]; }
  std::size_t position_of(std::size_t agent) const { return inverse_[agent]; }
  std::span<const std::size_t> agents() const { return order_; }

  // Reorders a batch of [n x width] blocks from canonical agent order to
  // position order, and back.
  std::vector<double> to_positions(std::span<const double> canonical,
                                   std::size_t width) const;
  std::vector<double> to_canonical(std::span<const double> positional,
                                   std::size_t width) const;

  bool operator==(const AgentOrdering&) const = default;

 private:
  std::vector<std::size_t> order_;
  std::vector<std::size_t> inverse_;
};

enum class ActMode { kSample, kGreedy };

// Results in canonical agent order.
struct ActResult {
  std::size_t batch = 0;
  std::size_t agents = 0;
  std::size_t width = 0;
  std::vector<double> actions;    // [B, n, width]
  std::vector<double> log_probs;  // [B, n]
  std::vector<double> values;     // [B, n]
};

// Per-position tensors, [B, n] each.
struct PolicyEvaluation {
  ad::Tensor log_probs;
  ad::Tensor entropy;
  ad::Tensor values;
};

class MatModel {
 public:
  MatModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }
  // Target copy of the encoder value path.
  const ParameterSet& target() const { return target_; }
  ParameterSet& target() { return target_; }

  // Hard copy of every encoder parameter into the target set.
  void sync_target();

  // Encoder parameters (critic group); everything else is the actor group.
  static bool is_encoder_param(std::string_view name);

  // obs is [B, n, d_obs] in position order.
  transformer::EncoderOutput encode(const Binding& b, const ad::Tensor& obs,
                                    const AgentOrdering& ordering) const;
  // Same pass with the target parameters (no tape).
  transformer::EncoderOutput encode_target(const ad::Tensor& obs,
                                           const AgentOrdering& ordering) const;

  // Decoder input rows: row 0 is the start symbol, row m embeds the action
  // taken at position m - 1 together with that agent's one-hot id. Rows
  // whose action is not yet known are passed as zeros by the caller.
  ad::Tensor action_tokens(std::span<const double> actions,
                           std::size_t batch,
                           const AgentOrdering& ordering) const;

  // Logits (discrete) or means (continuous), [B, n, dim].
  ad::Tensor decoder_outputs(const Binding& b, const ad::Tensor& encoding,
                             std::span<const double> actions,
                             const AgentOrdering& ordering) const;
  // MAT-Dec: position m only sees encoding row m through its agent's head.
  ad::Tensor mat_dec_forward(const Binding& b, const ad::Tensor& encoding,
                             const AgentOrdering& ordering) const;

  // Autoregressive inference. obs is [B, n, d_obs] in canonical agent order;
  // rngs supplies one generator per batch row (unused in greedy mode).
  ActResult act(const ad::Tensor& obs, const AgentOrdering& ordering,
                std::span<Rng> rngs, ActMode mode) const;

  // Teacher-forced evaluation of stored actions in one pass. obs is
  // [B, n, d_obs] and actions [B, n, width], both in position order.
  PolicyEvaluation evaluate_parallel(const Binding& b, const ad::Tensor& obs,
                                     std::span<const double> actions,
                                     const AgentOrdering& ordering) const;

 private:
  // Log-probabilities and entropies of `actions` under `outputs`.
  std::pair<ad::Tensor, ad::Tensor> distribution_terms(
      const Binding& b, const ad::Tensor& outputs,
      std::span<const double> actions) const;
  void check_ordering(const AgentOrdering& ordering) const;

  ModelConfig config_;
  ParameterSet params_;
  ParameterSet target_;
};

}  // namespace mat

#endif  // MAT_MAT_MODEL_HPP_
