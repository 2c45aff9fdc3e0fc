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

#include "mat/transformer.hpp"

#include <cmath>
#include <utility>

#include "mat/errors.hpp"

namespace mat::transformer {

namespace {

std::string join(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

void declare_layer_norm(ParameterSet& ps, const std::string& prefix,
                        std::size_t d) {
  ps.add(join(prefix, "gain"), ad::Tensor::full({d}, 1.0));
  ps.add(join(prefix, "bias"), ad::Tensor::zeros({d}));
}

LayerNormParams bind_layer_norm(const Binding& b, const std::string& prefix) {
  return {b(join(prefix, "gain")), b(join(prefix, "bias"))};
}

void declare_attention(ParameterSet& ps, const std::string& prefix,
                       const Dims& dims, Rng& rng) {
  const std::size_t dk = dims.d_head();
  for (std::size_t h = 0; h < dims.n_heads; ++h) {
    const std::string hp = join(prefix, "head" + std::to_string(h));
    ps.add(join(hp, "query"), orthogonal(dims.d_model, dk, 1.0, rng));
    ps.add(join(hp, "key"), orthogonal(dims.d_model, dk, 1.0, rng));
    ps.add(join(hp, "value"), orthogonal(dims.d_model, dk, 1.0, rng));
  }
  declare_linear(ps, join(prefix, "out"), dims.n_heads * dk, dims.d_model,
                 1.0, rng);
}

AttentionParams bind_attention(const Binding& b, const std::string& prefix,
                               const Dims& dims) {
  AttentionParams p;
  for (std::size_t h = 0; h < dims.n_heads; ++h) {
    const std::string hp = join(prefix, "head" + std::to_string(h));
    p.heads.push_back(
        {b(join(hp, "query")), b(join(hp, "key")), b(join(hp, "value"))});
  }
  p.out = bind_linear(b, join(prefix, "out"));
  return p;
}

std::string block_prefix(const std::string& prefix, std::size_t i) {
  return join(prefix, "block" + std::to_string(i));
}

// Accepts [n, d] by viewing it as a batch of one.
ad::Tensor as_batched(const ad::Tensor& x) {
  if (x.rank() == 3) return x;
  if (x.rank() == 2) return ad::reshape(x, {1, x.dim(0), x.dim(1)});
  throw ShapeError("attention: expected [B, n, d] or [n, d], got " +
                   ad::to_string(x.shape()));
}

}  // namespace

ad::Tensor activate(const ad::Tensor& x, Activation act) {
  return act == Activation::kGelu ? ad::gelu(x) : ad::relu(x);
}

AttentionMask AttentionMask::full(std::size_t n) {
  if (n == 0) throw ContractError("attention mask needs n >= 1");
  return AttentionMask{n, std::vector<std::uint8_t>(n * n, 1)};
}

AttentionMask build_causal_mask(std::size_t n) {
  if (n == 0) throw ContractError("causal mask needs n >= 1");
  AttentionMask m{n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j <= r; ++j) m.allowed[r * n + j] = 1;
  }
  return m;
}

void Dims::validate() const {
  if (d_model == 0 || n_heads == 0 || n_blocks == 0) {
    throw ContractError("transformer dims must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ContractError("d_model " + std::to_string(d_model) +
                        " is not divisible by n_heads " +
                        std::to_string(n_heads));
  }
}

void declare_linear(ParameterSet& ps, const std::string& prefix,
                    std::size_t in, std::size_t out, double gain, Rng& rng) {
  ps.add(join(prefix, "weight"), orthogonal(in, out, gain, rng));
  ps.add(join(prefix, "bias"), ad::Tensor::zeros({out}));
}

LinearParams bind_linear(const Binding& b, const std::string& prefix) {
  return {b(join(prefix, "weight")), b(join(prefix, "bias"))};
}

void declare_mlp(ParameterSet& ps, const std::string& prefix, std::size_t in,
                 std::size_t hidden, std::size_t out, double out_gain,
                 Rng& rng) {
  declare_linear(ps, join(prefix, "fc1"), in, hidden, kHiddenGain, rng);
  declare_linear(ps, join(prefix, "fc2"), hidden, out, out_gain, rng);
}

MlpParams bind_mlp(const Binding& b, const std::string& prefix) {
  return {bind_linear(b, join(prefix, "fc1")),
          bind_linear(b, join(prefix, "fc2"))};
}

void declare_encoder(ParameterSet& ps, const std::string& prefix,
                     const Dims& dims, Rng& rng) {
  dims.validate();
  const std::size_t d = dims.d_model;
  for (std::size_t i = 0; i < dims.n_blocks; ++i) {
    const std::string bp = block_prefix(prefix, i);
    declare_layer_norm(ps, join(bp, "ln1"), d);
    declare_attention(ps, join(bp, "attn"), dims, rng);
    declare_layer_norm(ps, join(bp, "ln2"), d);
    declare_mlp(ps, join(bp, "mlp"), d, d, d, 1.0, rng);
  }
  declare_layer_norm(ps, join(prefix, "ln_final"), d);
  declare_mlp(ps, join(prefix, "value_head"), d, d, 1, kOutputGain, rng);
}

EncoderParams bind_encoder(const Binding& b, const std::string& prefix,
                           const Dims& dims) {
  EncoderParams p;
  for (std::size_t i = 0; i < dims.n_blocks; ++i) {
    const std::string bp = block_prefix(prefix, i);
    p.blocks.push_back({bind_layer_norm(b, join(bp, "ln1")),
                        bind_layer_norm(b, join(bp, "ln2")),
                        bind_attention(b, join(bp, "attn"), dims),
                        bind_mlp(b, join(bp, "mlp"))});
  }
  p.ln_final = bind_layer_norm(b, join(prefix, "ln_final"));
  p.value_head = bind_mlp(b, join(prefix, "value_head"));
  return p;
}

void declare_decoder(ParameterSet& ps, const std::string& prefix,
                     const Dims& dims, std::size_t out_dim, Rng& rng) {
  dims.validate();
  const std::size_t d = dims.d_model;
  for (std::size_t i = 0; i < dims.n_blocks; ++i) {
    const std::string bp = block_prefix(prefix, i);
    declare_layer_norm(ps, join(bp, "ln1"), d);
    declare_attention(ps, join(bp, "self_attn"), dims, rng);
    declare_layer_norm(ps, join(bp, "ln2"), d);
    declare_attention(ps, join(bp, "cross_attn"), dims, rng);
    declare_layer_norm(ps, join(bp, "ln3"), d);
    declare_mlp(ps, join(bp, "mlp"), d, d, d, 1.0, rng);
  }
  declare_layer_norm(ps, join(prefix, "ln_final"), d);
  declare_mlp(ps, join(prefix, "action_head"), d, d, out_dim, kOutputGain,
              rng);
}

DecoderParams bind_decoder(const Binding& b, const std::string& prefix,
                           const Dims& dims) {
  DecoderParams p;
  for (std::size_t i = 0; i < dims.n_blocks; ++i) {
    const std::string bp = block_prefix(prefix, i);
    p.blocks.push_back({bind_layer_norm(b, join(bp, "ln1")),
                        bind_layer_norm(b, join(bp, "ln2")),
                        bind_layer_norm(b, join(bp, "ln3")),
                        bind_attention(b, join(bp, "self_attn"), dims),
                        bind_attention(b, join(bp, "cross_attn"), dims),
                        bind_mlp(b, join(bp, "mlp"))});
  }
  p.ln_final = bind_layer_norm(b, join(prefix, "ln_final"));
  p.action_head = bind_mlp(b, join(prefix, "action_head"));
  return p;
}

ad::Tensor apply(const ad::Tensor& x, const LinearParams& p) {
  return ad::linear(x, p.weight, p.bias);
}

ad::Tensor apply(const ad::Tensor& x, const LayerNormParams& p) {
  return ad::layer_norm(x, p.gain, p.bias);
}

ad::Tensor apply(const ad::Tensor& x, const MlpParams& p, Activation act) {
  return apply(activate(apply(x, p.fc1), act), p.fc2);
}

ad::Tensor attention(const ad::Tensor& q_in, const ad::Tensor& k_in,
                     const ad::Tensor& v_in, const AttentionMask& mask,
                     const AttentionParams& params) {
  const bool unbatched = q_in.rank() == 2;
  const ad::Tensor q3 = as_batched(q_in);
  const ad::Tensor k3 = as_batched(k_in);
  const ad::Tensor v3 = as_batched(v_in);
  if (k3.shape() != v3.shape() || q3.dim(0) != k3.dim(0) ||
      q3.dim(2) != k3.dim(2)) {
    throw ShapeError("attention: query " + ad::to_string(q3.shape()) +
                     ", key " + ad::to_string(k3.shape()) + ", value " +
                     ad::to_string(v3.shape()));
  }
  if (mask.n != q3.dim(1) || mask.n != k3.dim(1)) {
    throw ShapeError("attention: mask is " + std::to_string(mask.n) +
                     "x" + std::to_string(mask.n) + " for sequence length " +
                     std::to_string(q3.dim(1)));
  }
  if (params.heads.empty()) throw ContractError("attention: no heads");
  const double inv_sqrt_dk =
      1.0 / std::sqrt(static_cast<double>(params.heads[0].query.dim(1)));

  std::vector<ad::Tensor> heads;
  heads.reserve(params.heads.size());
  for (const auto& h : params.heads) {
    const ad::Tensor q = ad::linear(q3, h.query);
    const ad::Tensor k = ad::linear(k3, h.key);
    const ad::Tensor v = ad::linear(v3, h.value);
    const ad::Tensor scores = ad::scale(ad::bmm_nt(q, k), inv_sqrt_dk);
    const ad::Tensor weights = ad::masked_softmax(scores, mask.allowed);
    heads.push_back(ad::bmm(weights, v));
  }
  const ad::Tensor mixed =
      heads.size() == 1 ? heads.front() : ad::concat_last(heads);
  ad::Tensor out = apply(mixed, params.out);
  if (unbatched) out = ad::reshape(out, {out.dim(1), out.dim(2)});
  return out;
}

ad::Tensor embed_observation(const ad::Tensor& obs,
                             std::span<const std::size_t> agent_ids,
                             std::size_t max_agents,
                             const LinearParams& projection) {
  if (obs.rank() != 3 || obs.dim(1) != agent_ids.size()) {
    throw ShapeError("embed_observation: observations " +
                     ad::to_string(obs.shape()) + " for " +
                     std::to_string(agent_ids.size()) + " agent ids");
  }
  for (std::size_t id : agent_ids) {
    if (id >= max_agents) {
      throw ContractError("embed_observation: agent id " +
                          std::to_string(id) + " >= " +
                          std::to_string(max_agents));
    }
  }
  const std::size_t batch = obs.dim(0), n = obs.dim(1), d_obs = obs.dim(2);
  const std::size_t width = d_obs + max_agents;
  std::vector<double> in(batch * n * width, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t m = 0; m < n; ++m) {
      double* row = in.data() + (b * n + m) * width;
      for (std::size_t j = 0; j < d_obs; ++j) {
        row[j] = obs[(b * n + m) * d_obs + j];
      }
      row[d_obs + agent_ids[m]] = 1.0;
    }
  }
  return apply(ad::Tensor({batch, n, width}, std::move(in)), projection);
}

EncoderOutput encoder_forward(const ad::Tensor& embedded_obs,
                              const EncoderParams& params, Activation act) {
  if (embedded_obs.rank() != 3) {
    throw ShapeError("encoder_forward: expected [B, n, d], got " +
                     ad::to_string(embedded_obs.shape()));
  }
  const std::size_t n = embedded_obs.dim(1);
  const AttentionMask mask = AttentionMask::full(n);
  ad::Tensor x = embedded_obs;
  for (const auto& blk : params.blocks) {
    const ad::Tensor h = apply(x, blk.ln1);
    x = ad::add(x, attention(h, h, h, mask, blk.attn));
    x = ad::add(x, apply(apply(x, blk.ln2), blk.mlp, act));
  }
  EncoderOutput out;
  out.encoding = apply(x, params.ln_final);
  const ad::Tensor v = apply(out.encoding, params.value_head, act);
  out.values = ad::reshape(v, {v.dim(0), v.dim(1)});
  return out;
}

ad::Tensor decoder_forward(const ad::Tensor& action_embeds,
                           const ad::Tensor& encoding,
                           const DecoderParams& params, Activation act) {
  if (action_embeds.rank() != 3 || action_embeds.shape() != encoding.shape()) {
    throw ShapeError("decoder_forward: action embeddings " +
                     ad::to_string(action_embeds.shape()) + " vs encoding " +
                     ad::to_string(encoding.shape()));
  }
  const std::size_t n = action_embeds.dim(1);
  const AttentionMask causal = build_causal_mask(n);
  const AttentionMask full = AttentionMask::full(n);
  ad::Tensor x = action_embeds;
  for (const auto& blk : params.blocks) {
    const ad::Tensor h1 = apply(x, blk.ln1);
    x = ad::add(x, attention(h1, h1, h1, causal, blk.self_attn));
    const ad::Tensor h2 = apply(x, blk.ln2);
    x = ad::add(x, attention(h2, encoding, encoding, full, blk.cross_attn));
    x = ad::add(x, apply(apply(x, blk.ln3), blk.mlp, act));
  }
  return apply(apply(x, params.ln_final), params.action_head, act);
}

}  // namespace mat::transformer
