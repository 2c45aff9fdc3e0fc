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

#include "mat/mat_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "mat/errors.hpp"

namespace mat {
namespace {

using ad::Tensor;
namespace tf = transformer;

constexpr char kObsEmbed[] = "encoder.obs_embed";
constexpr char kActionEmbed[] = "decoder.action_embed";
constexpr char kLogStd[] = "policy.log_std";

std::string dec_actor_prefix(std::size_t agent) {
  return "dec_actor.agent" + std::to_string(agent);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

void ModelConfig::validate() const {
  if (n_agents == 0) throw ContractError("model needs at least one agent");
  if (obs_dim == 0) throw ContractError("observation dimension must be >= 1");
  if (action.dim == 0) throw ContractError("action dimension must be >= 1");
  dims.validate();
}

// ---- AgentOrdering ------------------------------------------------------

AgentOrdering::AgentOrdering(std::vector<std::size_t> order)
    : order_(std::move(order)), inverse_(order_.size(), order_.size()) {
  if (order_.empty()) throw ContractError("agent ordering is empty");
  for (std::size_t m = 0; m < order_.size(); ++m) {
    const std::size_t a = order_[m];
    if (a >= order_.size() || inverse_[a] != order_.size()) {
      throw ContractError("agent ordering is not a permutation of 0.." +
                          std::to_string(order_.size() - 1));
    }
    inverse_[a] = m;
  }
}

AgentOrdering AgentOrdering::identity(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return AgentOrdering(std::move(order));
}

AgentOrdering AgentOrdering::random(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return AgentOrdering(std::move(order));
}

std::vector<double> AgentOrdering::to_positions(
    std::span<const double> canonical, std::size_t width) const {
  const std::size_t block = size() * width;
  if (block == 0 || canonical.size() % block != 0) {
    throw ShapeError("to_positions: length is not a multiple of n * width");
  }
  std::vector<double> out(canonical.size());
  for (std::size_t base = 0; base < canonical.size(); base += block) {
    for (std::size_t m = 0; m < size(); ++m) {
      std::copy_n(canonical.begin() + base + order_[m] * width, width,
                  out.begin() + base + m * width);
    }
  }
  return out;
}

std::vector<double> AgentOrdering::to_canonical(
    std::span<const double> positional, std::size_t width) const {
  const std::size_t block = size() * width;
  if (block == 0 || positional.size() % block != 0) {
    throw ShapeError("to_canonical: length is not a multiple of n * width");
  }
  std::vector<double> out(positional.size());
  for (std::size_t base = 0; base < positional.size(); base += block) {
    for (std::size_t m = 0; m < size(); ++m) {
      std::copy_n(positional.begin() + base + m * width, width,
                  out.begin() + base + order_[m] * width);
    }
  }
  return out;
}

// ---- MatModel -----------------------------------------------------------

MatModel::MatModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t n = config_.n_agents;
  const std::size_t d = config_.dims.d_model;
  tf::declare_linear(params_, kObsEmbed, config_.obs_dim + n, d, 1.0, rng);
  tf::declare_encoder(params_, "encoder", config_.dims, rng);
  if (config_.variant == Variant::kMat) {
    const std::size_t token = config_.action.dim + 1 + n;
    tf::declare_linear(params_, kActionEmbed, token, d, 1.0, rng);
    tf::declare_decoder(params_, "decoder", config_.dims, config_.action.dim,
                        rng);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      tf::declare_mlp(params_, dec_actor_prefix(i), d, d, config_.action.dim,
                      tf::kOutputGain, rng);
    }
  }
  if (config_.action.kind == ActionKind::kContinuous) {
    params_.add(kLogStd, Tensor::full({config_.action.dim}, std::log(0.5)));
  }
  for (const auto& p : params_) {
    if (is_encoder_param(p.name)) target_.add(p.name, p.value);
  }
}

bool MatModel::is_encoder_param(std::string_view name) {
  return name.starts_with("encoder.");
}

void MatModel::sync_target() {
  for (std::size_t i = 0; i < target_.size(); ++i) {
    target_.set(i, params_.get(target_.name(i)));
  }
}

void MatModel::check_ordering(const AgentOrdering& ordering) const {
  if (ordering.size() != config_.n_agents) {
    throw ContractError("ordering has " + std::to_string(ordering.size()) +
                        " agents, model expects " +
                        std::to_string(config_.n_agents));
  }
}

tf::EncoderOutput MatModel::encode(const Binding& b, const Tensor& obs,
                                   const AgentOrdering& ordering) const {
  check_ordering(ordering);
  if (obs.rank() != 3 || obs.dim(1) != config_.n_agents ||
      obs.dim(2) != config_.obs_dim) {
    throw ShapeError("encode: expected observations [B, " +
                     std::to_string(config_.n_agents) + ", " +
                     std::to_string(config_.obs_dim) + "], got " +
                     ad::to_string(obs.shape()));
  }
  const Tensor embedded = tf::embed_observation(
      obs, ordering.agents(), config_.n_agents, tf::bind_linear(b, kObsEmbed));
  return tf::encoder_forward(
      embedded, tf::bind_encoder(b, "encoder", config_.dims),
      config_.dims.activation);
}

tf::EncoderOutput MatModel::encode_target(
    const Tensor& obs, const AgentOrdering& ordering) const {
  return encode(Binding::constant(target_), obs, ordering);
}

Tensor MatModel::action_tokens(std::span<const double> actions,
                               std::size_t batch,
                               const AgentOrdering& ordering) const {
  check_ordering(ordering);
  const std::size_t n = config_.n_agents;
  const std::size_t k = config_.action.dim;
  const std::size_t w = config_.action.width();
  if (actions.size() != batch * n * w) {
    throw ShapeError("action_tokens: expected " +
                     std::to_string(batch * n * w) + " action values, got " +
                     std::to_string(actions.size()));
  }
  const std::size_t token = k + 1 + n;
  std::vector<double> out(batch * n * token, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    double* row0 = out.data() + bi * n * token;
    row0[k] = 1.0;
    for (std::size_t m = 1; m < n; ++m) {
      double* row = row0 + m * token;
      const double* act = actions.data() + (bi * n + m - 1) * w;
      if (config_.action.kind == ActionKind::kDiscrete) {
        const auto a = static_cast<std::size_t>(act[0]);
        if (act[0] < 0.0 || a >= k) {
          throw ContractError("action_tokens: action " +
                              std::to_string(act[0]) + " out of range");
        }
        row[a] = 1.0;
      } else {
        std::copy_n(act, w, row);
      }
      row[k + 1 + ordering.agent_at(m - 1)] = 1.0;
    }
  }
  return Tensor({batch, n, token}, std::move(out));
}

Tensor MatModel::decoder_outputs(const Binding& b, const Tensor& encoding,
                                 std::span<const double> actions,
                                 const AgentOrdering& ordering) const {
  if (config_.variant != Variant::kMat) {
    throw ContractError("decoder_outputs called on a MAT-Dec model");
  }
  const Tensor tokens = action_tokens(actions, encoding.dim(0), ordering);
  const Tensor embedded = tf::apply(tokens, tf::bind_linear(b, kActionEmbed));
  return tf::decoder_forward(embedded, encoding,
                             tf::bind_decoder(b, "decoder", config_.dims),
                             config_.dims.activation);
}

Tensor MatModel::mat_dec_forward(const Binding& b, const Tensor& encoding,
                                 const AgentOrdering& ordering) const {
  check_ordering(ordering);
  if (config_.variant != Variant::kMatDec) {
    throw ContractError("mat_dec_forward called on a MAT model");
  }
  std::vector<Tensor> rows;
  rows.reserve(config_.n_agents);
  for (std::size_t m = 0; m < config_.n_agents; ++m) {
    const tf::MlpParams head =
        tf::bind_mlp(b, dec_actor_prefix(ordering.agent_at(m)));
    rows.push_back(tf::apply(ad::take_axis1(encoding, m), head,
                             config_.dims.activation));
  }
  return ad::stack_axis1(rows);
}

std::pair<Tensor, Tensor> MatModel::distribution_terms(
    const Binding& b, const Tensor& outputs,
    std::span<const double> actions) const {
  const std::size_t rows = outputs.size() / config_.action.dim;
  if (config_.action.kind == ActionKind::kDiscrete) {
    const Tensor logp_all = ad::log_softmax(outputs);
    std::vector<std::size_t> idx(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      idx[r] = static_cast<std::size_t>(actions[r]);
    }
    Tensor logp = ad::gather_last(logp_all, idx);
    Tensor entropy =
        ad::neg(ad::sum_last(ad::mul(ad::exp(logp_all), logp_all)));
    return {std::move(logp), std::move(entropy)};
  }
  // Diagonal Gaussian with state-independent log standard deviation.
  const Tensor& log_std = b(kLogStd);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Tensor target(outputs.shape(),
                      std::vector<double>(actions.begin(), actions.end()));
  const Tensor z = ad::mul_row(ad::sub(target, outputs),
                               ad::exp(ad::neg(log_std)));
  Tensor logp = ad::sum_last(ad::add_scalar(
      ad::add_row(ad::scale(ad::square(z), -0.5), ad::neg(log_std)),
      -half_log_2pi));
  Tensor entropy = ad::sum_last(ad::add_scalar(
      ad::add_row(Tensor::zeros(outputs.shape()), log_std),
      0.5 + half_log_2pi));
  return {std::move(logp), std::move(entropy)};
}

ActResult MatModel::act(const Tensor& obs, const AgentOrdering& ordering,
                        std::span<Rng> rngs, ActMode mode) const {
  check_ordering(ordering);
  const std::size_t batch = obs.rank() == 3 ? obs.dim(0) : 0;
  if (mode == ActMode::kSample && rngs.size() != batch) {
    throw ContractError("act: need one rng per batch row");
  }
  const std::size_t n = config_.n_agents;
  const std::size_t k = config_.action.dim;
  const std::size_t w = config_.action.width();
  const bool discrete = config_.action.kind == ActionKind::kDiscrete;

  const Binding b = Binding::constant(params_);
  const Tensor obs_pos(
      obs.shape(), ordering.to_positions(obs.values(), config_.obs_dim));
  const tf::EncoderOutput enc = encode(b, obs_pos, ordering);

  std::vector<double> actions(batch * n * w, 0.0);
  std::vector<double> logp(batch * n, 0.0);

  auto choose = [&](const Tensor& out, std::size_t m) {
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const std::size_t r = bi * n + m;
      const std::span<const double> row = out.values().subspan(r * k, k);
      if (!all_finite(row)) {
        throw NumericError("act: non-finite policy output at batch row " +
                           std::to_string(bi) + ", position " +
                           std::to_string(m) + " (agent " +
                           std::to_string(ordering.agent_at(m)) + ")");
      }
      double* a = actions.data() + r * w;
      if (discrete) {
        std::size_t choice = 0;
        if (mode == ActMode::kGreedy) {
          choice = static_cast<std::size_t>(
              std::max_element(row.begin(), row.end()) - row.begin());
        } else {
          const double top = *std::max_element(row.begin(), row.end());
          std::vector<double> weights(k);
          for (std::size_t j = 0; j < k; ++j) {
            weights[j] = std::exp(row[j] - top);
          }
          std::discrete_distribution<std::size_t> dist(weights.begin(),
                                                       weights.end());
          choice = dist(rngs[bi]);
        }
        a[0] = static_cast<double>(choice);
      } else {
        const auto& log_std = params_.get(kLogStd).values();
        for (std::size_t j = 0; j < k; ++j) {
          a[j] = row[j];
          if (mode == ActMode::kSample) {
            std::normal_distribution<double> normal(0.0, 1.0);
            a[j] += std::exp(log_std[j]) * normal(rngs[bi]);
          }
        }
      }
    }
  };

  auto record_logp = [&](const Tensor& out, std::size_t first,
                         std::size_t last) {
    const Tensor lp = distribution_terms(b, out, actions).first;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t m = first; m < last; ++m) {
        logp[bi * n + m] = lp[bi * n + m];
      }
    }
  };

  if (config_.variant == Variant::kMat) {
    for (std::size_t m = 0; m < n; ++m) {
      // Rows after m still hold placeholder actions; causality keeps them
      // from influencing row m.
      const Tensor out = decoder_outputs(b, enc.encoding, actions, ordering);
      choose(out, m);
      record_logp(out, m, m + 1);
    }
  } else {
    const Tensor out = mat_dec_forward(b, enc.encoding, ordering);
    for (std::size_t m = 0; m < n; ++m) choose(out, m);
    record_logp(out, 0, n);
  }

  ActResult result;
  result.batch = batch;
  result.agents = n;
  result.width = w;
  result.actions = ordering.to_canonical(actions, w);
  result.log_probs = ordering.to_canonical(logp, 1);
  result.values = ordering.to_canonical(enc.values.values(), 1);
  return result;
}

PolicyEvaluation MatModel::evaluate_parallel(
    const Binding& b, const Tensor& obs, std::span<const double> actions,
    const AgentOrdering& ordering) const {
  const tf::EncoderOutput enc = encode(b, obs, ordering);
  const Tensor out =
      config_.variant == Variant::kMat
          ? decoder_outputs(b, enc.encoding, actions, ordering)
          : mat_dec_forward(b, enc.encoding, ordering);
  auto [logp, entropy] = distribution_terms(b, out, actions);
  return {std::move(logp), std::move(entropy), enc.values};
}

}  // namespace mat
