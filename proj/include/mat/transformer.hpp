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

// Attention primitives and the encoder / decoder block stacks.
//
// Activations are [B, n, d] tensors: B independent samples (time steps or
// environments), n agent positions, d features. All blocks are pre-norm:
// x + SubLayer(LayerNorm(x)).

#ifndef MAT_TRANSFORMER_HPP_
#define MAT_TRANSFORMER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mat/autodiff.hpp"
#include "mat/params.hpp"

namespace mat::transformer {

enum class Activation { kGelu, kRelu };

ad::Tensor activate(const ad::Tensor& x, Activation act);

// n x n attention permission matrix; allowed(r, j) == 1 iff position r may
// attend to position j.
struct AttentionMask {
  std::size_t n = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask full(std::size_t n);
  bool operator()(std::size_t r, std::size_t j) const {
    return allowed[r * n + j] != 0;
  }
};

// Lower-triangular mask including the diagonal: r attends to j <= r.
AttentionMask build_causal_mask(std::size_t n);

struct LinearParams {
  ad::Tensor weight;  // [in, out]
  ad::Tensor bias;    // [out]
};

struct LayerNormParams {
  ad::Tensor gain;
  ad::Tensor bias;
};

struct MlpParams {
  LinearParams fc1;
  LinearParams fc2;
};

struct AttentionHeadParams {
  ad::Tensor query;  // [d_model, d_k]
  ad::Tensor key;
  ad::Tensor value;
};

struct AttentionParams {
  std::vector<AttentionHeadParams> heads;
  LinearParams out;  // [n_heads * d_k, d_model]
};

struct EncoderBlockParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  MlpParams mlp;
};

struct DecoderBlockParams {
  LayerNormParams ln1, ln2, ln3;
  AttentionParams self_attn;
  AttentionParams cross_attn;
  MlpParams mlp;
};

struct EncoderParams {
  std::vector<EncoderBlockParams> blocks;
  LayerNormParams ln_final;
  MlpParams value_head;  // d_model -> d_model -> 1
};

struct DecoderParams {
  std::vector<DecoderBlockParams> blocks;
  LayerNormParams ln_final;
  MlpParams action_head;  // d_model -> d_model -> out
};

struct Dims {
  std::size_t d_model = 64;
  std::size_t n_heads = 1;
  std::size_t n_blocks = 1;
  Activation activation = Activation::kGelu;

  // Throws ContractError unless d_model splits evenly over the heads.
  void validate() const;
  std::size_t d_head() const { return d_model / n_heads; }
};

// Gains used for orthogonal initialization.
inline constexpr double kHiddenGain = 1.4142135623730951;  // before ReLU/GELU
inline constexpr double kOutputGain = 0.01;

// ---- Declaration / binding ----------------------------------------------
//
// declare_* adds freshly initialized tensors to a ParameterSet under
// `prefix`; bind_* looks the same names up in a Binding.

void declare_linear(ParameterSet& ps, const std::string& prefix,
                    std::size_t in, std::size_t out, double gain, Rng& rng);
LinearParams bind_linear(const Binding& b, const std::string& prefix);

void declare_mlp(ParameterSet& ps, const std::string& prefix, std::size_t in,
                 std::size_t hidden, std::size_t out, double out_gain,
                 Rng& rng);
MlpParams bind_mlp(const Binding& b, const std::string& prefix);

void declare_encoder(ParameterSet& ps, const std::string& prefix,
                     const Dims& dims, Rng& rng);
EncoderParams bind_encoder(const Binding& b, const std::string& prefix,
                           const Dims& dims);

void declare_decoder(ParameterSet& ps, const std::string& prefix,
                     const Dims& dims, std::size_t out_dim, Rng& rng);
DecoderParams bind_decoder(const Binding& b, const std::string& prefix,
                           const Dims& dims);

// ---- Forward ------------------------------------------------------------

ad::Tensor apply(const ad::Tensor& x, const LinearParams& p);
ad::Tensor apply(const ad::Tensor& x, const LayerNormParams& p);
ad::Tensor apply(const ad::Tensor& x, const MlpParams& p, Activation act);

// Multi-head scaled dot-product attention. Inputs are [B, n, d] (or [n, d]).
// Queries come from q_in, keys from k_in, values from v_in; the mask is
// applied before the softmax.
ad::Tensor attention(const ad::Tensor& q_in, const ad::Tensor& k_in,
                     const ad::Tensor& v_in, const AttentionMask& mask,
                     const AttentionParams& params);

// Linear projection of [obs || one-hot(agent id)] to d_model. obs is
// [B, n, d_obs]; agent_ids[m] is the identity of the agent in row m.
ad::Tensor embed_observation(const ad::Tensor& obs,
                             std::span<const std::size_t> agent_ids,
                             std::size_t max_agents,
                             const LinearParams& projection);

struct EncoderOutput {
  ad::Tensor encoding;  // [B, n, d_model]
  ad::Tensor values;    // [B, n]
};

// Full self-attention over agent positions; no positional encoding.
EncoderOutput encoder_forward(const ad::Tensor& embedded_obs,
                              const EncoderParams& params, Activation act);

// Row m of action_embeds embeds the previous position's action (row 0 the
// start symbol). Self-attention is causal over actions; cross-attention to
// the observation encoding is unmasked.
ad::Tensor decoder_forward(const ad::Tensor& action_embeds,
                           const ad::Tensor& encoding,
                           const DecoderParams& params, Activation act);

}  // namespace mat::transformer

#endif  // MAT_TRANSFORMER_HPP_
