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

#include "mat/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <thread>

#include "mat/errors.hpp"

namespace mat::training {
namespace {

using ad::Tensor;

Rng seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& text) {
  std::istringstream is(text);
  Rng rng;
  is >> rng;
  if (!is) throw FormatError("malformed rng state");
  return rng;
}

// Runs fn(begin, end) over `count` items split into contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t workers, std::size_t count, Fn fn) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    fn(std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  const std::size_t base = count / workers, extra = count % workers;
  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t end = begin + base + (w < extra ? 1 : 0);
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_compatible(const MatModel& model, const envs::Environment& env) {
  const ModelConfig& c = model.config();
  if (c.n_agents != env.num_agents() || c.obs_dim != env.obs_dim() ||
      c.action.kind != ActionKind::kDiscrete ||
      c.action.dim != env.num_actions()) {
    throw ContractError("model (" + std::to_string(c.n_agents) + " agents, " +
                        "obs " + std::to_string(c.obs_dim) + ", actions " +
                        std::to_string(c.action.dim) +
                        ") does not fit environment " + env.name());
  }
}

double variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double acc = 0.0;
  for (double v : x) acc += (v - mu) * (v - mu);
  return acc / x.size();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (!(gamma >= 0.0 && gamma < 1.0)) bad.push_back("gamma must be in [0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    bad.push_back("gae_lambda must be in [0, 1]");
  }
  if (!(clip > 0.0 && clip < 1.0)) bad.push_back("clip must be in (0, 1)");
  if (!(entropy_coef >= 0.0)) bad.push_back("entropy_coef must be >= 0");
  if (ppo_epochs == 0) bad.push_back("ppo_epochs must be >= 1");
  if (num_minibatch == 0) bad.push_back("num_minibatch must be >= 1");
  if (rollout_length == 0) bad.push_back("rollout_length must be >= 1");
  if (parallel_envs == 0) bad.push_back("parallel_envs must be >= 1");
  if (num_minibatch > rollout_length * parallel_envs) {
    bad.push_back("num_minibatch exceeds the number of samples");
  }
  if (!(actor_lr >= 0.0 && std::isfinite(actor_lr))) {
    bad.push_back("actor_lr must be >= 0");
  }
  if (!(critic_lr >= 0.0 && std::isfinite(critic_lr))) {
    bad.push_back("critic_lr must be >= 0");
  }
  if (!(max_grad_norm > 0.0)) bad.push_back("max_grad_norm must be > 0");
  if (!(adam_eps > 0.0)) bad.push_back("adam_eps must be > 0");
  if (target_sync_epochs == 0) bad.push_back("target_sync_epochs must be >= 1");
  if (workers == 0) bad.push_back("workers must be >= 1");
  if (!bad.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ValidationError(msg);
  }
}

// ---- Buffer and GAE -----------------------------------------------------

TrajectoryBuffer::TrajectoryBuffer(std::size_t steps_, std::size_t envs_,
                                   std::size_t agents_, std::size_t obs_dim_,
                                   std::size_t action_width_)
    : steps(steps_),
      envs(envs_),
      agents(agents_),
      obs_dim(obs_dim_),
      action_width(action_width_),
      obs((steps_ + 1) * envs_ * agents_ * obs_dim_, 0.0),
      actions(steps_ * envs_ * agents_ * action_width_, 0.0),
      log_probs(steps_ * envs_ * agents_, 0.0),
      values((steps_ + 1) * envs_ * agents_, 0.0),
      rewards(steps_ * envs_ * agents_, 0.0),
      dones(steps_ * envs_, 0),
      advantages(steps_ * envs_ * agents_, 0.0),
      returns(steps_ * envs_ * agents_, 0.0) {}

void TrajectoryBuffer::clear() {
  has_bootstrap = false;
  has_advantages = false;
  episode_returns.clear();
}

std::vector<double> gae(std::span<const double> rewards,
                        std::span<const double> values,
                        std::span<const std::uint8_t> dones, double bootstrap,
                        double gamma, double lambda) {
  const std::size_t T = rewards.size();
  if (values.size() != T || dones.size() != T) {
    throw ContractError("gae: sequences differ in length");
  }
  std::vector<double> adv(T);
  double next_value = bootstrap, next_adv = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double keep = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * keep - values[t];
    next_adv = delta + gamma * lambda * keep * next_adv;
    adv[t] = next_adv;
    next_value = values[t];
  }
  return adv;
}

void compute_gae(TrajectoryBuffer& buf, double gamma, double lambda,
                 AdvantageMode mode) {
  if (!buf.has_bootstrap) {
    throw ContractError("compute_gae: buffer has no bootstrap value");
  }
  const std::size_t T = buf.steps, n = buf.agents;
  std::vector<double> r(T), v(T);
  std::vector<std::uint8_t> d(T);
  for (std::size_t e = 0; e < buf.envs; ++e) {
    for (std::size_t t = 0; t < T; ++t) {
      d[t] = buf.dones[buf.index(t, e)];
    }
    if (mode == AdvantageMode::kJoint) {
      auto mean_value = [&](std::size_t row) {
        double acc = 0.0;
        for (std::size_t m = 0; m < n; ++m) acc += buf.values[row * n + m];
        return acc / n;
      };
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t i = buf.index(t, e);
        r[t] = buf.rewards[i * n];
        v[t] = mean_value(i);
      }
      const auto adv =
          gae(r, v, d, mean_value(buf.index(T, e)), gamma, lambda);
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t i = buf.index(t, e);
        for (std::size_t m = 0; m < n; ++m) {
          buf.advantages[i * n + m] = adv[t];
          buf.returns[i * n + m] = adv[t] + v[t];
        }
      }
    } else {
      for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t i = buf.index(t, e);
          r[t] = buf.rewards[i * n + m];
          v[t] = buf.values[i * n + m];
        }
        const auto adv = gae(r, v, d, buf.values[buf.index(T, e) * n + m],
                             gamma, lambda);
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t i = buf.index(t, e);
          buf.advantages[i * n + m] = adv[t];
          buf.returns[i * n + m] = adv[t] + v[t];
        }
      }
    }
  }
  buf.has_advantages = true;
}

// ---- Losses -------------------------------------------------------------

Tensor encoder_loss(const Tensor& values, std::span<const double> rewards,
                    std::span<const double> next_target_values,
                    std::span<const std::uint8_t> dones, double gamma,
                    bool mean_value) {
  if (values.rank() != 2) {
    throw ShapeError("encoder_loss: values must be [B, n], got " +
                     ad::to_string(values.shape()));
  }
  const std::size_t B = values.dim(0), n = values.dim(1);
  if (rewards.size() != B || dones.size() != B ||
      next_target_values.size() != B * n) {
    throw ShapeError("encoder_loss: batch sizes disagree");
  }
  if (mean_value) {
    std::vector<double> target(B);
    for (std::size_t b = 0; b < B; ++b) {
      double nv = 0.0;
      for (std::size_t m = 0; m < n; ++m) nv += next_target_values[b * n + m];
      target[b] = rewards[b] + (dones[b] ? 0.0 : gamma * nv / n);
    }
    const Tensor mean_v = ad::scale(ad::sum_last(values), 1.0 / n);
    return ad::mean(ad::square(ad::sub(mean_v, Tensor({B}, std::move(target)))));
  }
  std::vector<double> target(B * n);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t m = 0; m < n; ++m) {
      target[b * n + m] =
          rewards[b] + (dones[b] ? 0.0 : gamma * next_target_values[b * n + m]);
    }
  }
  return ad::mean(
      ad::square(ad::sub(values, Tensor({B, n}, std::move(target)))));
}

Tensor decoder_loss(const Tensor& log_probs, const Tensor& entropy,
                    std::span<const double> old_log_probs,
                    std::span<const double> advantages, double clip,
                    double entropy_coef, DecoderLossStats* stats) {
  if (log_probs.rank() != 2 || entropy.shape() != log_probs.shape()) {
    throw ShapeError("decoder_loss: log-probs and entropy must be [B, n]");
  }
  const std::size_t B = log_probs.dim(0), n = log_probs.dim(1);
  if (old_log_probs.size() != B * n || advantages.size() != B * n) {
    throw ShapeError("decoder_loss: batch sizes disagree");
  }
  const Tensor old({B, n}, {old_log_probs.begin(), old_log_probs.end()});
  const Tensor adv({B, n}, {advantages.begin(), advantages.end()});
  const Tensor ratio = ad::exp(ad::sub(log_probs, old));
  std::size_t clipped = 0;
  for (std::size_t k = 0; k < B * n; ++k) {
    if (!std::isfinite(ratio[k])) {
      throw NumericError("decoder_loss: non-finite ratio at sample " +
                         std::to_string(k / n) + ", position " +
                         std::to_string(k % n));
    }
    if (std::abs(ratio[k] - 1.0) > clip) ++clipped;
  }
  const Tensor surrogate =
      ad::minimum(ad::mul(ratio, adv),
                  ad::mul(ad::clip_nograd(ratio, 1.0 - clip, 1.0 + clip), adv));
  const Tensor mean_entropy = ad::mean(entropy);
  if (stats) {
    stats->clip_fraction = static_cast<double>(clipped) / (B * n);
    stats->entropy = mean_entropy.item();
  }
  return ad::sub(ad::neg(ad::mean(surrogate)),
                 ad::scale(mean_entropy, entropy_coef));
}

// ---- Optimizer ----------------------------------------------------------

double clip_grad_norm(std::vector<std::vector<double>>& grads,
                      double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (auto& g : grads) {
      for (double& x : g) x *= s;
    }
  }
  return norm;
}

Adam::Adam(const ParameterSet& params, Config config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(ParameterSet& params,
                const std::vector<std::vector<double>>& grads,
                std::span<const double> lrs) {
  if (grads.size() != params.size() || lrs.size() != params.size() ||
      m_.size() != params.size()) {
    throw ContractError("adam: gradient count does not match parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != params.at(i).size()) {
      throw ShapeError("adam: gradient of " + params.name(i) +
                       " has the wrong size");
    }
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      if (!std::isfinite(grads[i][k])) {
        throw NumericError("adam: non-finite gradient in " + params.name(i) +
                           " at element " + std::to_string(k));
      }
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto old = params.at(i).values();
    std::vector<double> next(old.begin(), old.end());
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < next.size(); ++k) {
      const double g = grads[i][k];
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
      next[k] -= lrs[i] * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
    }
    params.set(i, Tensor(params.at(i).shape(), std::move(next)));
  }
}

void Adam::restore(std::uint64_t steps, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw FormatError("adam state has the wrong number of tensors");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) {
      throw FormatError("adam moment " + std::to_string(i) +
                        " has the wrong size");
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---- Evaluation ---------------------------------------------------------

EvalResult evaluate_policy(const MatModel& model,
                           const envs::Environment& prototype,
                           std::size_t episodes, ActMode mode,
                           std::uint64_t seed) {
  if (episodes == 0) throw ContractError("evaluation needs episodes >= 1");
  check_compatible(model, prototype);
  auto env = prototype.clone();
  const std::size_t n = env->num_agents(), d = env->obs_dim();
  Rng rng = seeded(seed, 0x65);
  EvalResult out;
  std::vector<std::size_t> acts(n);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    const AgentOrdering ordering = AgentOrdering::random(n, rng);
    envs::Observations obs = env->reset(rng);
    double total = 0.0;
    while (true) {
      const ActResult r = model.act(Tensor({1, n, d}, obs.data), ordering,
                                    std::span<Rng>(&rng, 1), mode);
      for (std::size_t i = 0; i < n; ++i) {
        acts[i] = static_cast<std::size_t>(r.actions[i]);
      }
      envs::JointStep step = env->step(acts, rng);
      total += step.reward;
      if (step.done) break;
      obs = std::move(step.obs);
    }
    out.returns.push_back(total);
  }
  out.mean = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) /
             episodes;
  out.stddev = std::sqrt(variance(out.returns));
  return out;
}

// ---- Trainer ------------------------------------------------------------

Trainer::Trainer(MatModel model, const envs::Environment& prototype,
                 TrainConfig config, std::uint64_t seed)
    : model_(std::move(model)),
      config_(config),
      adam_(model_.params(), Adam::Config{0.9, 0.999, config.adam_eps}),
      rng_(seeded(seed, 0x6d6173746572ULL)) {
  config_.validate();
  check_compatible(model_, prototype);
  for (std::size_t e = 0; e < config_.parallel_envs; ++e) {
    envs_.push_back(prototype.clone());
    env_rngs_.push_back(seeded(seed, e + 1));
  }
  reset_envs();
}

void Trainer::reset_envs() {
  current_obs_.clear();
  for (std::size_t e = 0; e < envs_.size(); ++e) {
    current_obs_.push_back(envs_[e]->reset(env_rngs_[e]));
  }
  running_return_.assign(envs_.size(), 0.0);
}

std::vector<double> Trainer::learning_rates() const {
  std::vector<double> lrs;
  for (const auto& p : model_.params()) {
    lrs.push_back(MatModel::is_encoder_param(p.name) ? config_.critic_lr
                                                     : config_.actor_lr);
  }
  return lrs;
}

TrajectoryBuffer Trainer::collect(const AgentOrdering& ordering) {
  const std::size_t T = config_.rollout_length, E = envs_.size();
  const std::size_t n = model_.config().n_agents, d = model_.config().obs_dim;
  TrajectoryBuffer buf(T, E, n, d, 1);
  buf.ordering.assign(ordering.agents().begin(), ordering.agents().end());
  std::vector<std::vector<double>> finished(E);

  auto store_obs = [&](std::size_t row, const envs::Observations& obs) {
    const auto pos = ordering.to_positions(obs.data, d);
    std::copy(pos.begin(), pos.end(), buf.obs.begin() + row * n * d);
  };

  const std::size_t workers = effective_workers(config_.workers);
  for (std::size_t t = 0; t < T; ++t) {
    parallel_chunks(workers, E, [&](std::size_t begin, std::size_t end) {
      const std::size_t count = end - begin;
      std::vector<double> obs;
      obs.reserve(count * n * d);
      for (std::size_t e = begin; e < end; ++e) {
        obs.insert(obs.end(), current_obs_[e].data.begin(),
                   current_obs_[e].data.end());
      }
      const ActResult r = model_.act(
          Tensor({count, n, d}, std::move(obs)), ordering,
          std::span<Rng>(env_rngs_).subspan(begin, count), ActMode::kSample);
      std::vector<std::size_t> acts(n);
      for (std::size_t e = begin; e < end; ++e) {
        const std::size_t k = e - begin, row = buf.index(t, e);
        store_obs(row, current_obs_[e]);
        for (std::size_t i = 0; i < n; ++i) {
          acts[i] = static_cast<std::size_t>(r.actions[k * n + i]);
        }
        const auto slice = [&](const std::vector<double>& v) {
          return ordering.to_positions(
              std::span<const double>(v).subspan(k * n, n), 1);
        };
        const auto a = slice(r.actions), lp = slice(r.log_probs),
                   v = slice(r.values);
        std::copy(a.begin(), a.end(), buf.actions.begin() + row * n);
        std::copy(lp.begin(), lp.end(), buf.log_probs.begin() + row * n);
        std::copy(v.begin(), v.end(), buf.values.begin() + row * n);

        envs::JointStep step = envs_[e]->step(acts, env_rngs_[e]);
        std::fill_n(buf.rewards.begin() + row * n, n, step.reward);
        buf.dones[row] = step.done ? 1 : 0;
        running_return_[e] += step.reward;
        if (step.done) {
          finished[e].push_back(running_return_[e]);
          running_return_[e] = 0.0;
          current_obs_[e] = envs_[e]->reset(env_rngs_[e]);
        } else {
          current_obs_[e] = std::move(step.obs);
        }
      }
    });
  }

  // Bootstrap row T.
  for (std::size_t e = 0; e < E; ++e) {
    store_obs(buf.index(T, e), current_obs_[e]);
  }
  const std::span<const double> tail =
      std::span<const double>(buf.obs).subspan(T * E * n * d, E * n * d);
  const Tensor tail_obs({E, n, d}, {tail.begin(), tail.end()});
  const auto enc =
      model_.encode(Binding::constant(model_.params()), tail_obs, ordering);
  std::copy(enc.values.values().begin(), enc.values.values().end(),
            buf.values.begin() + T * E * n);
  buf.has_bootstrap = true;
  for (const auto& f : finished) {
    buf.episode_returns.insert(buf.episode_returns.end(), f.begin(), f.end());
  }
  return buf;
}

IterationMetrics Trainer::train_iteration() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = model_.config().n_agents, d = model_.config().obs_dim;
  const bool mat_dec = model_.config().variant == Variant::kMatDec;

  const AgentOrdering ordering = AgentOrdering::random(n, rng_);
  TrajectoryBuffer buf = collect(ordering);
  compute_gae(buf, config_.gamma, config_.gae_lambda,
              mat_dec ? AdvantageMode::kPerAgent : AdvantageMode::kJoint);

  const std::size_t B = buf.samples();
  IterationMetrics metrics;

  // Explained variance of the critic estimate used for the advantages.
  {
    std::vector<double> target, residual;
    for (std::size_t i = 0; i < B; ++i) {
      double mean_v = 0.0;
      for (std::size_t m = 0; m < n; ++m) mean_v += buf.values[i * n + m];
      mean_v /= n;
      for (std::size_t m = 0; m < (mat_dec ? n : 1); ++m) {
        const double pred = mat_dec ? buf.values[i * n + m] : mean_v;
        target.push_back(buf.returns[i * n + m]);
        residual.push_back(buf.returns[i * n + m] - pred);
      }
    }
    const double var_y = variance(target);
    metrics.explained_variance =
        var_y > 1e-12 ? 1.0 - variance(residual) / var_y : 0.0;
  }

  std::vector<double> adv = buf.advantages;
  if (config_.normalize_advantages) {
    const double mu = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
    const double sd = std::sqrt(variance(adv));
    for (double& a : adv) a = (a - mu) / (sd + 1e-8);
  }

  // Work on copies so a failed update leaves the model untouched.
  MatModel model = model_;
  Adam adam = adam_;
  Rng rng = rng_;
  std::size_t policy_epochs = policy_epochs_;
  const std::vector<double> lrs = learning_rates();

  std::vector<std::size_t> perm(B);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const std::size_t mbs = config_.num_minibatch;
  double enc_total = 0.0, dec_total = 0.0, ent_total = 0.0, clip_total = 0.0;
  std::size_t updates = 0;

  const std::span<const double> next_obs =
      std::span<const double>(buf.obs).subspan(buf.envs * n * d, B * n * d);
  for (std::size_t epoch = 0; epoch < config_.ppo_epochs; ++epoch) {
    const auto next_enc = model.encode_target(
        Tensor({B, n, d}, {next_obs.begin(), next_obs.end()}), ordering);
    const auto next_values = next_enc.values.values();
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < mbs; ++k) {
      const std::size_t begin = k * B / mbs, end = (k + 1) * B / mbs;
      const std::size_t mb = end - begin;
      std::vector<double> obs(mb * n * d), acts(mb * n), old(mb * n),
          a(mb * n), nv(mb * n), rew(mb);
      std::vector<std::uint8_t> dn(mb);
      for (std::size_t j = 0; j < mb; ++j) {
        const std::size_t i = perm[begin + j];
        std::copy_n(buf.obs.begin() + i * n * d, n * d,
                    obs.begin() + j * n * d);
        std::copy_n(buf.actions.begin() + i * n, n, acts.begin() + j * n);
        std::copy_n(buf.log_probs.begin() + i * n, n, old.begin() + j * n);
        std::copy_n(adv.begin() + i * n, n, a.begin() + j * n);
        std::copy_n(next_values.begin() + i * n, n, nv.begin() + j * n);
        rew[j] = buf.rewards[i * n];
        dn[j] = buf.dones[i];
      }
      ad::Tape tape;
      const Binding b = Binding::watched(model.params(), tape);
      const PolicyEvaluation ev = model.evaluate_parallel(
          b, Tensor({mb, n, d}, std::move(obs)), acts, ordering);
      const Tensor l_enc = encoder_loss(ev.values, rew, nv, dn,
                                        config_.gamma, mat_dec);
      DecoderLossStats stats;
      Tensor l_dec;
      try {
        l_dec = decoder_loss(ev.log_probs, ev.entropy, old, a, config_.clip,
                             config_.entropy_coef, &stats);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " of minibatch " +
                           std::to_string(k) + " in epoch " +
                           std::to_string(epoch) + " (iteration " +
                           std::to_string(iteration_) + ")");
      }
      const Tensor total = ad::add(l_enc, l_dec);
      if (!std::isfinite(total.item())) {
        throw NumericError("non-finite loss in iteration " +
                           std::to_string(iteration_));
      }
      tape.backward(total);
      std::vector<std::vector<double>> grads;
      grads.reserve(b.size());
      for (std::size_t p = 0; p < b.size(); ++p) {
        grads.push_back(tape.grad(b.at(p)));
      }
      clip_grad_norm(grads, config_.max_grad_norm);
      adam.step(model.params(), grads, lrs);

      enc_total += l_enc.item();
      dec_total += l_dec.item();
      ent_total += stats.entropy;
      clip_total += stats.clip_fraction;
      ++updates;
    }
    if (++policy_epochs % config_.target_sync_epochs == 0) model.sync_target();
  }

  model_ = std::move(model);
  adam_ = std::move(adam);
  rng_ = rng;
  policy_epochs_ = policy_epochs;
  ++iteration_;
  env_steps_ += B;
  if (!buf.episode_returns.empty()) {
    last_mean_return_ = std::accumulate(buf.episode_returns.begin(),
                                        buf.episode_returns.end(), 0.0) /
                        buf.episode_returns.size();
  }

  metrics.iteration = iteration_;
  metrics.env_steps = env_steps_;
  metrics.mean_return = last_mean_return_;
  metrics.encoder_loss = enc_total / updates;
  metrics.decoder_loss = dec_total / updates;
  metrics.entropy = ent_total / updates;
  metrics.clip_fraction = clip_total / updates;
  metrics.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
  return metrics;
}

TrainerState Trainer::state() const {
  TrainerState s;
  s.iteration = iteration_;
  s.env_steps = env_steps_;
  s.policy_epochs = policy_epochs_;
  s.last_mean_return = last_mean_return_;
  s.master_rng = rng_to_string(rng_);
  for (const auto& r : env_rngs_) s.env_rngs.push_back(rng_to_string(r));
  return s;
}

void Trainer::restore(const TrainerState& s) {
  if (s.env_rngs.size() != env_rngs_.size()) {
    throw FormatError("checkpoint has " + std::to_string(s.env_rngs.size()) +
                      " environment streams, trainer has " +
                      std::to_string(env_rngs_.size()));
  }
  rng_ = rng_from_string(s.master_rng);
  for (std::size_t e = 0; e < env_rngs_.size(); ++e) {
    env_rngs_[e] = rng_from_string(s.env_rngs[e]);
  }
  iteration_ = s.iteration;
  env_steps_ = s.env_steps;
  policy_epochs_ = s.policy_epochs;
  last_mean_return_ = s.last_mean_return;
  reset_envs();
}

// ---- Metrics log --------------------------------------------------------

std::string format_metrics_row(const IterationMetrics& m) {
  return std::to_string(m.iteration) + "," + std::to_string(m.env_steps) +
         "," + fmt(m.mean_return) + "," + fmt(m.encoder_loss) + "," +
         fmt(m.decoder_loss) + "," + fmt(m.entropy) + "," +
         fmt(m.clip_fraction) + "," + fmt(m.explained_variance) + "," +
         fmt(m.wall_seconds);
}

MetricsCsv::MetricsCsv(const std::string& path) {
  namespace fs = std::filesystem;
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open metrics file " + path);
  if (fresh) out_ << kHeader << "\n" << std::flush;
}

void MetricsCsv::append(const IterationMetrics& m) {
  out_ << format_metrics_row(m) << "\n" << std::flush;
}

std::size_t effective_workers(std::size_t requested) {
  std::size_t n = std::max<std::size_t>(requested, 1);
  if (const char* cap = std::getenv("MAT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end != cap && *end == '\0' && v >= 1) {
      n = std::min(n, static_cast<std::size_t>(v));
    }
  }
  return n;
}

}  // namespace mat::training
