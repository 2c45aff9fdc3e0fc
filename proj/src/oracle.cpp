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

#include "mat/oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mat/errors.hpp"

namespace mat::oracle {
namespace {

constexpr double kResidualTarget = 1e-12;

void check_policy(const TabularGame& game, std::span<const double> policy) {
  const std::size_t joint = game.num_joint_actions();
  if (policy.size() != game.num_states * joint) {
    throw ContractError("policy table has " + std::to_string(policy.size()) +
                        " entries, expected " +
                        std::to_string(game.num_states * joint));
  }
  for (std::size_t s = 0; s < game.num_states; ++s) {
    double total = 0.0;
    for (std::size_t j = 0; j < joint; ++j) {
      const double p = policy[s * joint + j];
      if (!(p >= 0.0)) throw ContractError("policy has a negative entry");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ContractError("policy row " + std::to_string(s) + " sums to " +
                          std::to_string(total));
    }
  }
}

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw ContractError("exact evaluation needs gamma in [0, 1), got " +
                        std::to_string(gamma));
  }
}

// Expected reward and state-transition matrix under the joint policy.
void policy_model(const TabularGame& game, std::span<const double> policy,
                  std::vector<double>& r_pi, std::vector<double>& p_pi) {
  const std::size_t ns = game.num_states;
  const std::size_t joint = game.num_joint_actions();
  r_pi.assign(ns, 0.0);
  p_pi.assign(ns * ns, 0.0);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t j = 0; j < joint; ++j) {
      const double w = policy[s * joint + j];
      r_pi[s] += w * game.reward(s, j);
      for (std::size_t t = 0; t < ns; ++t) {
        p_pi[s * ns + t] += w * game.transition(s, j, t);
      }
    }
  }
}

void check_subset(const TabularGame& game, std::span<const std::size_t> subset,
                  std::span<const std::size_t> actions) {
  const std::size_t n = game.num_agents();
  if (subset.size() != actions.size()) {
    throw ContractError("agent subset and its actions differ in length");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const std::size_t i = subset[k];
    if (i >= n) throw ContractError("agent " + std::to_string(i) + " unknown");
    if (seen[i]) {
      throw ContractError("agent " + std::to_string(i) +
                          " appears twice in the subset");
    }
    seen[i] = true;
    if (actions[k] >= game.action_counts[i]) {
      throw ContractError("action out of range for agent " +
                          std::to_string(i));
    }
  }
}

std::vector<std::size_t> identity_permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

void record(DecompositionReport& report, const DecompositionCase& c) {
  const double d = std::abs(c.lhs - c.rhs);
  ++report.trials;
  auto& stats = report.per_permutation[c.permutation];
  ++stats.count;
  stats.max_discrepancy = std::max(stats.max_discrepancy, d);
  if (report.trials == 1 || d > report.max_discrepancy) {
    report.max_discrepancy = d;
    report.worst = c;
  }
}

}  // namespace

ProductPolicy ProductPolicy::uniform(const TabularGame& game) {
  ProductPolicy p;
  for (std::size_t count : game.action_counts) {
    p.tables.emplace_back(game.num_states * count, 1.0 / count);
  }
  return p;
}

ProductPolicy ProductPolicy::random(const TabularGame& game, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  ProductPolicy p;
  for (std::size_t count : game.action_counts) {
    std::vector<double> t(game.num_states * count);
    for (std::size_t s = 0; s < game.num_states; ++s) {
      double total = 0.0;
      for (std::size_t a = 0; a < count; ++a) {
        total += t[s * count + a] = unit(rng);
      }
      for (std::size_t a = 0; a < count; ++a) t[s * count + a] /= total;
    }
    p.tables.push_back(std::move(t));
  }
  return p;
}

std::vector<double> joint_policy(const TabularGame& game,
                                 const ProductPolicy& policy) {
  if (policy.tables.size() != game.num_agents()) {
    throw ContractError("policy has a table for " +
                        std::to_string(policy.tables.size()) +
                        " agents, game has " +
                        std::to_string(game.num_agents()));
  }
  const std::size_t joint = game.num_joint_actions();
  std::vector<double> out(game.num_states * joint);
  for (std::size_t s = 0; s < game.num_states; ++s) {
    for (std::size_t j = 0; j < joint; ++j) {
      const auto tuple = game.joint_tuple(j);
      double w = 1.0;
      for (std::size_t i = 0; i < tuple.size(); ++i) {
        w *= policy.prob(i, s, tuple[i], game);
      }
      out[s * joint + j] = w;
    }
  }
  return out;
}

ExactValues exact_policy_eval(const TabularGame& game,
                              std::span<const double> policy) {
  check_gamma(game.gamma);
  game.validate();
  check_policy(game, policy);
  const std::size_t ns = game.num_states;
  const std::size_t joint = game.num_joint_actions();
  std::vector<double> r_pi, p_pi;
  policy_model(game, policy, r_pi, p_pi);

  ExactValues out;
  out.num_states = ns;
  out.num_joint = joint;
  std::vector<double> v(ns, 0.0), next(ns);
  double best = std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;
  for (std::size_t it = 1;; ++it) {
    double diff = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      double acc = 0.0;
      for (std::size_t t = 0; t < ns; ++t) acc += p_pi[s * ns + t] * v[t];
      next[s] = r_pi[s] + game.gamma * acc;
      diff = std::max(diff, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    out.iterations = it;
    if (diff < 0.1 * kResidualTarget) break;
    // Rounding can stop the contraction just short of the target.
    if (diff < best) {
      best = diff;
      stalled = 0;
    } else if (++stalled > 100) {
      break;
    }
  }

  out.v = v;
  out.q.resize(ns * joint);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t j = 0; j < joint; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < ns; ++t) {
        acc += game.transition(s, j, t) * v[t];
      }
      out.q[s * joint + j] = game.reward(s, j) + game.gamma * acc;
    }
  }
  for (std::size_t s = 0; s < ns; ++s) {
    double acc = 0.0;
    for (std::size_t j = 0; j < joint; ++j) {
      acc += policy[s * joint + j] * out.q[s * joint + j];
    }
    out.residual = std::max(out.residual, std::abs(out.v[s] - acc));
  }
  if (out.residual > kResidualTarget) {
    throw NumericError("value iteration stalled with Bellman residual " +
                       std::to_string(out.residual));
  }
  return out;
}

ExactValues exact_policy_eval(const TabularGame& game,
                              const ProductPolicy& policy) {
  return exact_policy_eval(game, joint_policy(game, policy));
}

std::vector<double> solve_policy_values(const TabularGame& game,
                                        std::span<const double> policy) {
  check_gamma(game.gamma);
  game.validate();
  check_policy(game, policy);
  const std::size_t ns = game.num_states;
  std::vector<double> r_pi, p_pi;
  policy_model(game, policy, r_pi, p_pi);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(ns, ns);
  Eigen::VectorXd b(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    b(s) = r_pi[s];
    for (std::size_t t = 0; t < ns; ++t) a(s, t) -= game.gamma * p_pi[s * ns + t];
  }
  const Eigen::VectorXd v = a.partialPivLu().solve(b);
  return {v.data(), v.data() + ns};
}

double multi_agent_q(const TabularGame& game, const ExactValues& values,
                     const ProductPolicy& policy, std::size_t s,
                     std::span<const std::size_t> subset,
                     std::span<const std::size_t> actions) {
  check_subset(game, subset, actions);
  if (s >= game.num_states) throw ContractError("state out of range");
  const std::size_t n = game.num_agents();
  std::vector<std::size_t> tuple(n, 0);
  std::vector<bool> fixed(n, false);
  for (std::size_t k = 0; k < subset.size(); ++k) {
    tuple[subset[k]] = actions[k];
    fixed[subset[k]] = true;
  }
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < n; ++i) {
    if (!fixed[i]) free.push_back(i);
  }
  // Mixed-radix counter over the complement's joint actions.
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (std::size_t i : free) w *= policy.prob(i, s, tuple[i], game);
    total += w * values.Q(s, game.joint_index(tuple));
    std::size_t k = free.size();
    while (k > 0) {
      const std::size_t i = free[k - 1];
      if (++tuple[i] < game.action_counts[i]) break;
      tuple[i] = 0;
      --k;
    }
    if (k == 0) break;
  }
  return total;
}

double multi_agent_advantage(const TabularGame& game,
                             const ExactValues& values,
                             const ProductPolicy& policy, std::size_t s,
                             std::span<const std::size_t> given,
                             std::span<const std::size_t> given_actions,
                             std::span<const std::size_t> subset,
                             std::span<const std::size_t> actions) {
  for (std::size_t j : given) {
    if (std::find(subset.begin(), subset.end(), j) != subset.end()) {
      throw ContractError("advantage subsets overlap at agent " +
                          std::to_string(j));
    }
  }
  std::vector<std::size_t> both(given.begin(), given.end());
  both.insert(both.end(), subset.begin(), subset.end());
  std::vector<std::size_t> both_actions(given_actions.begin(),
                                        given_actions.end());
  both_actions.insert(both_actions.end(), actions.begin(), actions.end());
  return multi_agent_q(game, values, policy, s, both, both_actions) -
         multi_agent_q(game, values, policy, s, given, given_actions);
}

// ---- Decomposition --------------------------------------------------------

void DecompositionReport::merge(const DecompositionReport& other) {
  if (other.trials == 0) return;
  if (trials == 0 || other.max_discrepancy > max_discrepancy) {
    max_discrepancy = other.max_discrepancy;
    worst = other.worst;
  }
  trials += other.trials;
  for (const auto& [perm, stats] : other.per_permutation) {
    auto& mine = per_permutation[perm];
    mine.count += stats.count;
    mine.max_discrepancy = std::max(mine.max_discrepancy,
                                    stats.max_discrepancy);
  }
}

DecompositionCase decomposition_case(const TabularGame& game,
                                     const ExactValues& values,
                                     const ProductPolicy& policy,
                                     std::size_t s,
                                     std::span<const std::size_t> joint_action,
                                     std::span<const std::size_t> permutation,
                                     DecompositionOptions options) {
  const std::size_t n = game.num_agents();
  if (joint_action.size() != n || permutation.size() != n) {
    throw ContractError("decomposition needs one action and position per agent");
  }
  DecompositionCase c;
  c.state = s;
  c.joint_action.assign(joint_action.begin(), joint_action.end());
  c.permutation.assign(permutation.begin(), permutation.end());

  std::vector<std::size_t> ordered_actions(n);
  for (std::size_t m = 0; m < n; ++m) {
    ordered_actions[m] = joint_action[permutation[m]];
  }
  const std::span<const std::size_t> none;
  c.lhs = multi_agent_advantage(game, values, policy, s, none, none,
                                permutation, ordered_actions);
  for (std::size_t m = 0; m < n; ++m) {
    double local = multi_agent_advantage(
        game, values, policy, s, permutation.first(m),
        std::span<const std::size_t>(ordered_actions).first(m),
        permutation.subspan(m, 1),
        std::span<const std::size_t>(ordered_actions).subspan(m, 1));
    if (options.corrupt_rhs && m == 0) local = -local;
    c.rhs += local;
  }
  return c;
}

DecompositionReport verify_decomposition(const TabularGame& game,
                                         const ProductPolicy& policy,
                                         std::size_t trials, Rng& rng,
                                         DecompositionOptions options) {
  const ExactValues values = exact_policy_eval(game, policy);
  const std::size_t n = game.num_agents();
  DecompositionReport report;
  std::vector<std::size_t> perm = identity_permutation(n);
  std::vector<std::size_t> joint(n);
  for (std::size_t k = 0; k < trials; ++k) {
    const std::size_t s =
        std::uniform_int_distribution<std::size_t>(0, game.num_states - 1)(rng);
    for (std::size_t i = 0; i < n; ++i) {
      joint[i] = std::uniform_int_distribution<std::size_t>(
          0, game.action_counts[i] - 1)(rng);
    }
    std::shuffle(perm.begin(), perm.end(), rng);
    record(report,
           decomposition_case(game, values, policy, s, joint, perm, options));
  }
  return report;
}

DecompositionReport verify_all_permutations(
    const TabularGame& game, const ExactValues& values,
    const ProductPolicy& policy, std::size_t s,
    std::span<const std::size_t> joint_action, DecompositionOptions options) {
  DecompositionReport report;
  std::vector<std::size_t> perm = identity_permutation(game.num_agents());
  do {
    record(report, decomposition_case(game, values, policy, s, joint_action,
                                      perm, options));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return report;
}

// ---- Sequential greedy ----------------------------------------------------

GreedyResult sequential_greedy_improvement(
    const TabularGame& game, const ExactValues& values,
    const ProductPolicy& policy, std::size_t s,
    std::span<const std::size_t> ordering) {
  const std::size_t n = game.num_agents();
  if (ordering.size() != n) {
    throw ContractError("greedy improvement needs a full agent ordering");
  }
  GreedyResult r;
  r.joint_action.assign(n, 0);
  r.joint_enumeration = 1;
  std::vector<std::size_t> chosen;
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t agent = ordering[m];
    const std::size_t count = game.action_counts[agent];
    const std::size_t self[] = {agent};
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_action = 0;
    for (std::size_t a = 0; a < count; ++a) {
      const std::size_t act[] = {a};
      const double adv = multi_agent_advantage(
          game, values, policy, s, ordering.first(m), chosen, self, act);
      if (adv > best) {
        best = adv;
        best_action = a;
      }
    }
    r.actions_examined += count;
    r.joint_enumeration *= count;
    chosen.push_back(best_action);
    r.joint_action[agent] = best_action;
    r.step_advantages.push_back(best);
    r.step_sum += best;
  }
  r.joint_advantage =
      values.Q(s, game.joint_index(r.joint_action)) - values.V(s);
  return r;
}

// ---- References -----------------------------------------------------------

std::vector<double> reference_gae(std::span<const double> rewards,
                                  std::span<const double> values,
                                  std::span<const std::uint8_t> dones,
                                  double bootstrap, double gamma,
                                  double lambda) {
  const std::size_t T = rewards.size();
  if (values.size() != T || dones.size() != T) {
    throw ContractError("reference_gae: sequences differ in length");
  }
  auto delta = [&](std::size_t u) {
    const double next = u + 1 < T ? values[u + 1] : bootstrap;
    return rewards[u] + (dones[u] ? 0.0 : gamma * next) - values[u];
  };
  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double coef = 1.0;
    for (std::size_t u = t; u < T; ++u) {
      out[t] += coef * delta(u);
      if (dones[u]) break;
      coef *= gamma * lambda;
    }
  }
  return out;
}

double reference_encoder_loss(std::span<const double> values,
                              std::span<const double> rewards,
                              std::span<const double> next_target_values,
                              std::span<const std::uint8_t> dones,
                              std::size_t agents, double gamma,
                              bool mean_value) {
  const std::size_t B = rewards.size();
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double keep = dones[b] ? 0.0 : 1.0;
    if (mean_value) {
      double v = 0.0, nv = 0.0;
      for (std::size_t m = 0; m < agents; ++m) {
        v += values[b * agents + m];
        nv += next_target_values[b * agents + m];
      }
      const double err = rewards[b] + gamma * keep * nv / agents - v / agents;
      total += err * err;
    } else {
      for (std::size_t m = 0; m < agents; ++m) {
        const double err = rewards[b] +
                           gamma * keep * next_target_values[b * agents + m] -
                           values[b * agents + m];
        total += err * err;
      }
    }
  }
  return total / static_cast<double>(mean_value ? B : B * agents);
}

double reference_decoder_loss(std::span<const double> log_probs,
                              std::span<const double> old_log_probs,
                              std::span<const double> advantages,
                              std::span<const double> entropy, double clip,
                              double entropy_coef) {
  const std::size_t N = log_probs.size();
  double surrogate = 0.0, ent = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    const double r = std::exp(log_probs[k] - old_log_probs[k]);
    const double clipped = std::clamp(r, 1.0 - clip, 1.0 + clip);
    surrogate += std::min(r * advantages[k], clipped * advantages[k]);
    ent += entropy[k];
  }
  return -surrogate / N - entropy_coef * ent / N;
}

// ---- Suite ----------------------------------------------------------------

SuiteInstance suite_instance(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x6f72u};
  Rng rng(seq);
  SuiteInstance inst;
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 3)(rng);
  for (std::size_t i = 0; i < n; ++i) {
    inst.action_counts.push_back(
        std::uniform_int_distribution<std::size_t>(2, 3)(rng));
  }
  inst.num_states = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
  inst.gamma = std::uniform_real_distribution<double>(0.5, 0.95)(rng);
  inst.game_seed = rng();
  return inst;
}

bool SuiteReport::passed() const {
  return decomposition.max_discrepancy <= tolerance &&
         exhaustive_max <= tolerance && edge_identity_max <= 1e-10 &&
         linear_solve_max <= 1e-9 && own_policy_advantage_max <= 1e-10 &&
         greedy_sum_max <= 1e-10 && greedy_min_advantage >= 0.0;
}

std::string SuiteReport::to_text() const {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  os << "games: " << games << "\n"
     << "trials: " << decomposition.trials << "\n"
     << "max_discrepancy: " << decomposition.max_discrepancy << "\n"
     << "tolerance: " << tolerance << "\n"
     << "exhaustive_games: " << exhaustive_games << "\n"
     << "exhaustive_max_discrepancy: " << exhaustive_max << "\n"
     << "edge_identity_max: " << edge_identity_max << "\n"
     << "linear_solve_max: " << linear_solve_max << "\n"
     << "own_policy_advantage_max: " << own_policy_advantage_max << "\n"
     << "greedy_checks: " << greedy_checks << "\n"
     << "greedy_sum_max: " << greedy_sum_max << "\n"
     << "greedy_min_advantage: " << greedy_min_advantage << "\n";
  os << "per_permutation:\n";
  for (const auto& [perm, stats] : decomposition.per_permutation) {
    os << "  [";
    for (std::size_t k = 0; k < perm.size(); ++k) {
      os << (k ? " " : "") << perm[k];
    }
    os << "] count=" << stats.count << " max=" << stats.max_discrepancy
       << "\n";
  }
  if (!passed()) {
    const auto& w = decomposition.worst;
    os << "worst_instance:\n"
       << "  game_seed: " << worst_instance.game_seed << "\n"
       << "  action_counts:";
    for (std::size_t c : worst_instance.action_counts) os << " " << c;
    os << "\n  num_states: " << worst_instance.num_states << "\n"
       << "  gamma: " << worst_instance.gamma << "\n"
       << "  state: " << w.state << "\n  joint_action:";
    for (std::size_t a : w.joint_action) os << " " << a;
    os << "\n  permutation:";
    for (std::size_t p : w.permutation) os << " " << p;
    os << "\n  lhs: " << w.lhs << "\n  rhs: " << w.rhs << "\n";
  }
  os << "status: " << (passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

SuiteReport run_suite(std::uint64_t seed, const SuiteOptions& options) {
  SuiteReport report;
  report.tolerance = options.tolerance;
  for (std::size_t g = 0; g < options.games; ++g) {
    const SuiteInstance inst = suite_instance(seed, g);
    const TabularGame game = envs::make_tabular_random(
        inst.action_counts, inst.num_states, inst.gamma, inst.game_seed);
    Rng rng(inst.game_seed ^ 0x9e3779b97f4a7c15ULL);
    const ProductPolicy policy = ProductPolicy::random(game, rng);
    const std::vector<double> joint = joint_policy(game, policy);
    const ExactValues values = exact_policy_eval(game, joint);
    const std::size_t n = game.num_agents();
    ++report.games;

    const std::vector<double> solved = solve_policy_values(game, joint);
    for (std::size_t s = 0; s < game.num_states; ++s) {
      report.linear_solve_max =
          std::max(report.linear_solve_max, std::abs(solved[s] - values.V(s)));
    }

    const std::size_t s = std::uniform_int_distribution<std::size_t>(
        0, game.num_states - 1)(rng);
    std::vector<std::size_t> action(n);
    for (std::size_t i = 0; i < n; ++i) {
      action[i] = std::uniform_int_distribution<std::size_t>(
          0, game.action_counts[i] - 1)(rng);
    }
    const std::vector<std::size_t> all = identity_permutation(n);
    const std::span<const std::size_t> none;
    report.edge_identity_max = std::max(
        {report.edge_identity_max,
         std::abs(multi_agent_q(game, values, policy, s, all, action) -
                  values.Q(s, game.joint_index(action))),
         std::abs(multi_agent_q(game, values, policy, s, none, none) -
                  values.V(s))});

    const std::size_t agent =
        std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    double expected = 0.0;
    for (std::size_t a = 0; a < game.action_counts[agent]; ++a) {
      const std::size_t self[] = {agent};
      const std::size_t act[] = {a};
      expected += policy.prob(agent, s, a, game) *
                  multi_agent_advantage(game, values, policy, s, none, none,
                                        self, act);
    }
    report.own_policy_advantage_max =
        std::max(report.own_policy_advantage_max, std::abs(expected));

    DecompositionReport dec = verify_decomposition(
        game, policy, options.trials_per_game, rng, options.decomposition);
    if (n == 3) {
      const DecompositionReport ex = verify_all_permutations(
          game, values, policy, s, action, options.decomposition);
      ++report.exhaustive_games;
      report.exhaustive_max = std::max(report.exhaustive_max,
                                       ex.max_discrepancy);
      dec.merge(ex);
    }
    if (report.decomposition.trials == 0 ||
        dec.max_discrepancy > report.decomposition.max_discrepancy) {
      report.worst_instance = inst;
    }
    report.decomposition.merge(dec);

    std::vector<std::size_t> order = all;
    std::shuffle(order.begin(), order.end(), rng);
    const GreedyResult greedy =
        sequential_greedy_improvement(game, values, policy, s, order);
    report.greedy_sum_max =
        std::max(report.greedy_sum_max,
                 std::abs(greedy.step_sum - greedy.joint_advantage));
    report.greedy_min_advantage =
        report.greedy_checks == 0
            ? greedy.joint_advantage
            : std::min(report.greedy_min_advantage, greedy.joint_advantage);
    ++report.greedy_checks;
  }
  return report;
}

}  // namespace mat::oracle
