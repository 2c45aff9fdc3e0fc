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

// Acceptance harness: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; no arguments runs all of them. Exits 0 only
// when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "loss_check.hpp"
#include "mat/checkpoint.hpp"
#include "mat/commands.hpp"
#include "mat/config.hpp"
#include "mat/envs.hpp"
#include "mat/mat_model.hpp"
#include "mat/oracle.hpp"
#include "mat/training.hpp"
#include "mat/transformer.hpp"
#include "primitive_cases.hpp"
#include "test_util.hpp"

namespace mat {
namespace {

using ad::Tensor;
using testing::random_tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ModelConfig toy_model(std::size_t n, ActionSpace action, Variant variant,
                      std::size_t d_model = 8) {
  ModelConfig c;
  c.n_agents = n;
  c.obs_dim = 3;
  c.action = action;
  c.variant = variant;
  c.dims.d_model = d_model;
  c.dims.n_heads = 2;
  c.dims.n_blocks = 2;
  return c;
}

// ---- 1: decomposition exactness -------------------------------------------

Outcome decomposition_exactness() {
  const auto t0 = Clock::now();
  oracle::SuiteOptions opts;
  opts.games = 1000;
  opts.tolerance = 1e-9;
  const oracle::SuiteReport r = oracle::run_suite(1, opts);
  const double secs = seconds_since(t0);
  const bool pass = r.games == 1000 && r.decomposition.max_discrepancy <= 1e-9 &&
                    r.exhaustive_games > 0 && r.exhaustive_max <= 1e-9 &&
                    secs < 30.0;
  return {pass, "games=" + std::to_string(r.games) +
                    " max=" + fmt("%.3g", r.decomposition.max_discrepancy) +
                    " n3_all_perms_games=" + std::to_string(r.exhaustive_games) +
                    " n3_max=" + fmt("%.3g", r.exhaustive_max) +
                    " time=" + fmt("%.2fs", secs) + " (tol 1e-9, < 30s)"};
}

// ---- 2: edge identities ---------------------------------------------------

Outcome edge_identities() {
  Rng rng(2);
  double worst = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const oracle::SuiteInstance inst = oracle::suite_instance(2, i);
    const auto game = envs::make_tabular_random(
        inst.action_counts, inst.num_states, inst.gamma, inst.game_seed);
    const auto pol = oracle::ProductPolicy::random(game, rng);
    const auto ev = oracle::exact_policy_eval(game, pol);
    const std::size_t s = rng() % game.num_states;
    const std::size_t j = rng() % game.num_joint_actions();
    std::vector<std::size_t> all(game.num_agents());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto tuple = game.joint_tuple(j);
    worst = std::max(
        {worst,
         std::abs(oracle::multi_agent_q(game, ev, pol, s, all, tuple) -
                  ev.Q(s, j)),
         std::abs(oracle::multi_agent_q(game, ev, pol, s, {}, {}) - ev.V(s))});
  }
  return {worst <= 1e-10,
          "instances=100 max=" + fmt("%.3g", worst) + " (tol 1e-10)"};
}

// ---- 3: gradients ---------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng(3);
  double prim_worst = 0.0;
  std::string prim_name;
  for (const auto& c : testing::primitive_cases()) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) {
        inputs.push_back(random_tensor(s, rng, c.lo, c.hi));
      }
      const double e = testing::gradient_error(c.fn, inputs);
      if (e > prim_worst) {
        prim_worst = e;
        prim_name = c.name;
      }
    }
  }
  double enc_worst = 0.0, dec_worst = 0.0;
  for (Variant v : {Variant::kMat, Variant::kMatDec}) {
    for (int trial = 0; trial < 5; ++trial) {
      ModelConfig c;
      c.n_agents = 2;
      c.obs_dim = 4;
      c.action = {ActionKind::kDiscrete, 3};
      c.variant = v;
      c.dims.d_model = 8;
      c.dims.n_heads = 2;
      c.dims.n_blocks = 1;
      MatModel model(c, 30 + trial);
      testing::randomize_params(model.params(), rng, 0.4);
      const auto p = testing::random_problem(model, 4, rng);
      enc_worst = std::max(enc_worst, testing::combined_loss_gradient_error(
                                          model, p, testing::LossPart::kEncoder));
      dec_worst = std::max(dec_worst, testing::combined_loss_gradient_error(
                                          model, p, testing::LossPart::kDecoder));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = prim_worst < 1e-4 && enc_worst < 1e-4 &&
                    dec_worst < 1e-4 && secs < 60.0;
  return {pass, "primitives_max=" + fmt("%.3g", prim_worst) + " (" +
                    prim_name + ") encoder_loss=" + fmt("%.3g", enc_worst) +
                    " decoder_loss=" + fmt("%.3g", dec_worst) +
                    " time=" + fmt("%.2fs", secs) + " (tol 1e-4, < 60s)"};
}

// ---- 4: decoder causality -------------------------------------------------

Outcome decoder_causality() {
  Rng rng(4);
  std::size_t violations = 0, trials = 0;
  // Half the trials perturb token embeddings of the bare decoder, half
  // perturb stored actions fed through the model's token builder.
  for (int t = 0; t < 100; ++t, ++trials) {
    transformer::Dims dims;
    dims.d_model = 8;
    dims.n_heads = 2;
    dims.n_blocks = 2;
    ParameterSet ps;
    transformer::declare_decoder(ps, "dec", dims, 3, rng);
    testing::randomize_params(ps, rng, 0.6);
    const auto p = transformer::bind_decoder(Binding::constant(ps), "dec", dims);
    const std::size_t n = 2 + t % 4, m = rng() % n;
    const Tensor enc = random_tensor({2, n, 8}, rng);
    const Tensor act = random_tensor({2, n, 8}, rng);
    std::vector<double> moved = testing::values_of(act);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t r = m + 1; r < n; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
          moved[(b * n + r) * 8 + c] = random_tensor({1}, rng, -5, 5)[0];
        }
      }
    }
    const Tensor y1 = transformer::decoder_forward(act, enc, p, dims.activation);
    const Tensor y2 = transformer::decoder_forward(Tensor({2, n, 8}, moved),
                                                   enc, p, dims.activation);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t r = 0; r <= m; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
          violations += y1[(b * n + r) * 3 + c] != y2[(b * n + r) * 3 + c];
        }
      }
    }
  }
  for (int t = 0; t < 100; ++t, ++trials) {
    const std::size_t n = 2 + t % 3;
    MatModel model(toy_model(n, {ActionKind::kDiscrete, 4}, Variant::kMat),
                   400 + t);
    testing::randomize_params(model.params(), rng, 0.6);
    const Binding b = Binding::constant(model.params());
    const AgentOrdering o = AgentOrdering::random(n, rng);
    const Tensor enc = random_tensor({3, n, 8}, rng);
    std::vector<double> a(3 * n), a2;
    for (auto& x : a) x = static_cast<double>(rng() % 4);
    a2 = a;
    // Output row m sees actions at positions < m only.
    const std::size_t m = rng() % n;
    for (std::size_t bi = 0; bi < 3; ++bi) {
      for (std::size_t r = m; r < n; ++r) {
        a2[bi * n + r] = static_cast<double>(rng() % 4);
      }
    }
    const Tensor y1 = model.decoder_outputs(b, enc, a, o);
    const Tensor y2 = model.decoder_outputs(b, enc, a2, o);
    for (std::size_t bi = 0; bi < 3; ++bi) {
      for (std::size_t r = 0; r <= m; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
          violations += y1[(bi * n + r) * 4 + c] != y2[(bi * n + r) * 4 + c];
        }
      }
    }
  }
  return {violations == 0, "trials=" + std::to_string(trials) +
                               " differing_entries=" +
                               std::to_string(violations) + " (tol 0)"};
}

// ---- 5: teacher forcing ---------------------------------------------------

Outcome teacher_forcing() {
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 4;
    const ActionSpace action = t % 4 == 3
                                   ? ActionSpace{ActionKind::kContinuous, 2}
                                   : ActionSpace{ActionKind::kDiscrete, 3};
    const Variant v = t % 5 == 4 ? Variant::kMatDec : Variant::kMat;
    MatModel model(toy_model(n, action, v), 500 + t);
    testing::randomize_params(model.params(), rng, 0.6);
    const std::size_t batch = 3;
    const Tensor obs = random_tensor({batch, n, 3}, rng);
    const AgentOrdering o = AgentOrdering::random(n, rng);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < batch; ++i) rngs.emplace_back(rng());
    const ActResult r = model.act(
        obs, o, rngs, t % 2 ? ActMode::kGreedy : ActMode::kSample);
    const Tensor obs_pos(obs.shape(), o.to_positions(obs.values(), 3));
    const PolicyEvaluation ev = model.evaluate_parallel(
        Binding::constant(model.params()), obs_pos,
        o.to_positions(r.actions, r.width), o);
    const auto lp = o.to_canonical(ev.log_probs.values(), 1);
    for (std::size_t i = 0; i < lp.size(); ++i) {
      worst = std::max(worst, std::abs(lp[i] - r.log_probs[i]));
    }
  }
  return {worst <= 1e-10,
          "trials=200 max_abs=" + fmt("%.3g", worst) + " (tol 1e-10)"};
}

// ---- 6: encoder equivariance ----------------------------------------------

Outcome encoder_equivariance() {
  Rng rng(6);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 4;
    MatModel model(toy_model(n, {ActionKind::kDiscrete, 3}, Variant::kMat),
                   600 + t);
    testing::randomize_params(model.params(), rng, 0.6);
    const Binding b = Binding::constant(model.params());
    const Tensor obs = random_tensor({2, n, 3}, rng);
    const AgentOrdering o1 = AgentOrdering::random(n, rng);
    const AgentOrdering o2 = AgentOrdering::random(n, rng);
    auto encode = [&](const AgentOrdering& o) {
      const auto out = model.encode(
          b, Tensor(obs.shape(), o.to_positions(obs.values(), 3)), o);
      return std::pair{o.to_canonical(out.encoding.values(), 8),
                       o.to_canonical(out.values.values(), 1)};
    };
    const auto [e1, v1] = encode(o1);
    const auto [e2, v2] = encode(o2);
    for (std::size_t i = 0; i < e1.size(); ++i) {
      worst = std::max(worst, std::abs(e1[i] - e2[i]));
    }
    for (std::size_t i = 0; i < v1.size(); ++i) {
      worst = std::max(worst, std::abs(v1[i] - v2[i]));
    }
  }
  return {worst <= 1e-10,
          "trials=100 max_abs=" + fmt("%.3g", worst) + " (tol 1e-10)"};
}

// ---- 7: GAE ---------------------------------------------------------------

Outcome gae_equivalence() {
  Rng rng(7);
  double worst = 0.0;
  std::size_t with_dones = 0;
  for (int t = 0; t < 100; ++t) {
    training::TrajectoryBuffer buf(32, 1, 2, 1, 1);
    buf.values = testing::values_of(random_tensor({buf.values.size()}, rng));
    for (std::size_t i = 0; i < 32; ++i) {
      const double r = random_tensor({1}, rng)[0];
      buf.rewards[i * 2] = buf.rewards[i * 2 + 1] = r;
      buf.dones[i] = t % 2 == 0 && rng() % 6 == 0;
    }
    with_dones += std::count(buf.dones.begin(), buf.dones.end(), 1) > 0;
    buf.has_bootstrap = true;
    const double gamma = 0.9 + 0.09 * (t % 10) / 10.0, lambda = 0.95;
    training::compute_gae(buf, gamma, lambda, training::AdvantageMode::kJoint);
    std::vector<double> r(32), v(32);
    for (std::size_t i = 0; i < 32; ++i) {
      r[i] = buf.rewards[i * 2];
      v[i] = 0.5 * (buf.values[i * 2] + buf.values[i * 2 + 1]);
    }
    const double boot = 0.5 * (buf.values[64] + buf.values[65]);
    const auto ref =
        oracle::reference_gae(r, v, buf.dones, boot, gamma, lambda);
    for (std::size_t i = 0; i < 32; ++i) {
      worst = std::max(worst, std::abs(buf.advantages[i * 2] - ref[i]));
    }
  }
  return {worst <= 1e-12, "buffers=100 with_dones=" +
                              std::to_string(with_dones) +
                              " max_abs=" + fmt("%.3g", worst) +
                              " (tol 1e-12)"};
}

// ---- 8: coordination learning ---------------------------------------------

ModelConfig model_for(const envs::Environment& env, Variant v) {
  ModelConfig c;
  c.n_agents = env.num_agents();
  c.obs_dim = env.obs_dim();
  c.action = {ActionKind::kDiscrete, env.num_actions()};
  c.variant = v;
  return c;
}

Outcome coordination_learning() {
  const envs::CoordMatrixGame env(2, 3);
  const double optimal = envs::enumerate_one_shot(env).optimal;
  std::size_t reached = 0;
  double slowest = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = Clock::now();
    training::Trainer trainer(MatModel(model_for(env, Variant::kMat), seed),
                              env, training::TrainConfig{}, seed);
    std::size_t hit = 0;
    double last = 0.0;
    for (std::size_t k = 1; k <= 300 && hit == 0; ++k) {
      trainer.train_iteration();
      if (k % 10 == 0) {
        last = training::evaluate_policy(trainer.model(), env, 20,
                                         ActMode::kGreedy, 1000 + seed)
                   .mean;
        if (last >= 0.95 * optimal) hit = k;
      }
    }
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    if (hit > 0 && secs < 300.0) ++reached;
    per_seed << " s" << seed << "=" << (hit ? std::to_string(hit) : "none")
             << "@" << fmt("%.0fs", secs);
  }
  return {reached >= 4, "optimal=" + fmt("%.2f", optimal) + " seeds_reaching=" +
                            std::to_string(reached) + "/5 (iteration@time:" +
                            per_seed.str() + ") need >= 4 within 300 it, 5 min"};
}

// ---- 9: architecture separation -------------------------------------------

constexpr std::size_t kUnlockIterations = 60;

double final_return(Variant v, std::uint64_t seed,
                    const envs::Environment& env) {
  training::Trainer trainer(MatModel(model_for(env, v), seed), env,
                            training::TrainConfig{}, seed);
  for (std::size_t k = 0; k < kUnlockIterations; ++k) trainer.train_iteration();
  return training::evaluate_policy(trainer.model(), env, 50, ActMode::kGreedy,
                                   2000 + seed)
      .mean;
}

Outcome architecture_separation() {
  const auto t0 = Clock::now();
  const envs::SequentialUnlock env(3, 3);
  const envs::OneShotReturns ref = envs::enumerate_one_shot(env);
  double mat_sum = 0.0, dec_sum = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double a = final_return(Variant::kMat, seed, env);
    const double b = final_return(Variant::kMatDec, seed, env);
    mat_sum += a;
    dec_sum += b;
    per_seed << " s" << seed << "=" << fmt("%.2f", a) << "/" << fmt("%.2f", b);
  }
  const double secs = seconds_since(t0);
  const double gap = (mat_sum - dec_sum) / 5.0;
  const double need = 0.2 * (ref.optimal - ref.uniform_random);
  return {gap >= need && secs < 900.0,
          "mat_mean=" + fmt("%.3f", mat_sum / 5) +
              " mat_dec_mean=" + fmt("%.3f", dec_sum / 5) +
              " gap=" + fmt("%.3f", gap) + " need>=" + fmt("%.3f", need) +
              " (mat/mat-dec:" + per_seed.str() + ") time=" +
              fmt("%.0fs", secs) + " (< 900s)"};
}

// ---- 10: determinism and persistence --------------------------------------

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Outcome determinism_and_persistence() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "mat_acceptance_10";
  fs::remove_all(root);
  auto run = [&](const std::string& name) {
    const std::vector<std::string> sets{"output.dir=" + (root / name).string(),
                                        "train.iterations=5"};
    const config::MatConfig cfg = config::parse_config(
        "[env]\nname = spread\nagents = 2\ngrid = 3\nhorizon = 6\n"
        "[model]\nd_model = 16\nheads = 2\n"
        "[train]\nrollout_length = 8\nparallel_envs = 4\nppo_epochs = 3\n",
        sets);
    std::ostringstream sink;
    commands::cmd_train(cfg, sink, sink);
    return cfg;
  };
  const config::MatConfig cfg = run("a");
  run("b");
  const std::string csv_a = read_file(root / "a" / "metrics.csv");
  const bool csv_equal =
      !csv_a.empty() &&
      strip_last_column(csv_a) ==
          strip_last_column(read_file(root / "b" / "metrics.csv"));

  const fs::path ckpt_path = root / "a" / checkpoint::file_name(5);
  const std::string bytes = read_file(ckpt_path);
  const checkpoint::Checkpoint ckpt = checkpoint::decode(bytes);
  const bool bytes_equal = checkpoint::encode(ckpt) == bytes;

  const auto env = config::make_env(cfg);
  training::Trainer trainer(MatModel(config::model_config(cfg, *env), cfg.seed),
                            *env, cfg.train, cfg.seed);
  for (int i = 0; i < 5; ++i) trainer.train_iteration();
  const auto before = training::evaluate_policy(trainer.model(), *env, 20,
                                                ActMode::kGreedy, 10);
  MatModel loaded(config::model_config(cfg, *env), 12345);
  checkpoint::assign(loaded.params(), ckpt.params);
  const auto after =
      training::evaluate_policy(loaded, *env, 20, ActMode::kGreedy, 10);
  const bool eval_equal = before.returns == after.returns;
  fs::remove_all(root);
  return {csv_equal && bytes_equal && eval_equal,
          std::string("metrics_csv_identical=") + (csv_equal ? "yes" : "no") +
              " (wall_seconds excluded) checkpoint_bytes_roundtrip=" +
              (bytes_equal ? "yes" : "no") + " greedy_eval_identical=" +
              (eval_equal ? "yes" : "no") + " return=" +
              fmt("%.3f", after.mean)};
}

// ---- 11: sequential greedy ------------------------------------------------

Outcome sequential_greedy() {
  Rng rng(11);
  double sum_gap = 0.0, min_adv = 1e300;
  std::size_t count_errors = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    const oracle::SuiteInstance inst = oracle::suite_instance(11, i);
    const auto game = envs::make_tabular_random(
        inst.action_counts, inst.num_states, inst.gamma, inst.game_seed);
    const auto pol = oracle::ProductPolicy::random(game, rng);
    const auto ev = oracle::exact_policy_eval(game, pol);
    std::vector<std::size_t> order(game.num_agents());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto r = oracle::sequential_greedy_improvement(
        game, ev, pol, rng() % game.num_states, order);
    sum_gap = std::max(sum_gap, std::abs(r.joint_advantage - r.step_sum));
    min_adv = std::min(min_adv, r.joint_advantage);
    const std::size_t expect = std::accumulate(
        inst.action_counts.begin(), inst.action_counts.end(), std::size_t{0});
    count_errors += r.actions_examined != expect;
  }
  return {min_adv >= 0.0 && sum_gap <= 1e-10 && count_errors == 0,
          "instances=500 min_joint_advantage=" + fmt("%.3g", min_adv) +
              " max|joint-sum|=" + fmt("%.3g", sum_gap) +
              " search_count_mismatches=" + std::to_string(count_errors) +
              " (tol 1e-10)"};
}

}  // namespace
}  // namespace mat

int main(int argc, char** argv) {
  using Criterion = std::pair<const char*, std::function<mat::Outcome()>>;
  const std::vector<Criterion> criteria = {
      {"decomposition exactness", mat::decomposition_exactness},
      {"edge identities", mat::edge_identities},
      {"gradient correctness", mat::gradient_correctness},
      {"decoder causality", mat::decoder_causality},
      {"teacher-forcing consistency", mat::teacher_forcing},
      {"encoder permutation equivariance", mat::encoder_equivariance},
      {"GAE oracle equivalence", mat::gae_equivalence},
      {"coordination learning", mat::coordination_learning},
      {"architecture separation", mat::architecture_separation},
      {"determinism and persistence", mat::determinism_and_persistence},
      {"sequential greedy improvement", mat::sequential_greedy},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    mat::Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all &= o.pass;
    std::printf("[%s] criterion %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
