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

// Exact ground truth on tabular Markov games.
//
// Values are computed over states (every agent observes the full state), so
// the multi-agent value and advantage functions are exact expectations.
// Agent subsets are ordered lists of agent indices; their actions are given
// in the same order.

#ifndef MAT_ORACLE_HPP_
#define MAT_ORACLE_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mat/envs.hpp"
#include "mat/params.hpp"

namespace mat::oracle {

using envs::TabularGame;

// Independent per-agent tables: tables[i][s * |A^i| + a] = pi^i(a | s).
struct ProductPolicy {
  std::vector<std::vector<double>> tables;

  double prob(std::size_t agent, std::size_t state, std::size_t action,
              const TabularGame& game) const {
    return tables[agent][state * game.action_counts[agent] + action];
  }

  static ProductPolicy uniform(const TabularGame& game);
  // Strictly positive random tables.
  static ProductPolicy random(const TabularGame& game, Rng& rng);
};

// Joint table [s][joint] = prod_i pi^i(a^i | s).
std::vector<double> joint_policy(const TabularGame& game,
                                 const ProductPolicy& policy);

struct ExactValues {
  std::size_t num_states = 0;
  std::size_t num_joint = 0;
  std::vector<double> q;  // [s][joint]
  std::vector<double> v;  // [s]
  double residual = 0.0;  // max_s |V(s) - sum_a pi(a|s) Q(s, a)|
  std::size_t iterations = 0;

  double Q(std::size_t s, std::size_t joint) const {
    return q[s * num_joint + joint];
  }
  double V(std::size_t s) const { return v[s]; }
};

// Value iteration until the Bellman residual is below 1e-12. `policy` is a
// joint table [s][joint]. Throws ContractError when gamma is outside [0, 1)
// or a policy row is not a distribution.
ExactValues exact_policy_eval(const TabularGame& game,
                              std::span<const double> policy);
ExactValues exact_policy_eval(const TabularGame& game,
                              const ProductPolicy& policy);

// V solved directly from (I - gamma P_pi) V = R_pi.
std::vector<double> solve_policy_values(const TabularGame& game,
                                        std::span<const double> policy);

// Q^{subset}(s, a^{subset}): the joint Q with the agents outside `subset`
// marginalized under their own policies. subset = all agents gives Q, the
// empty subset gives V. Throws ContractError on repeated or unknown agents.
double multi_agent_q(const TabularGame& game, const ExactValues& values,
                     const ProductPolicy& policy, std::size_t s,
                     std::span<const std::size_t> subset,
                     std::span<const std::size_t> actions);

// A^{i}(s, a^{j}, a^{i}) = Q^{j,i}(s, a^{j}, a^{i}) - Q^{j}(s, a^{j}).
// Throws ContractError when j and i overlap.
double multi_agent_advantage(const TabularGame& game,
                             const ExactValues& values,
                             const ProductPolicy& policy, std::size_t s,
                             std::span<const std::size_t> given,
                             std::span<const std::size_t> given_actions,
                             std::span<const std::size_t> subset,
                             std::span<const std::size_t> actions);

// ---- Decomposition check --------------------------------------------------

struct DecompositionCase {
  std::size_t state = 0;
  std::vector<std::size_t> joint_action;  // canonical agent order
  std::vector<std::size_t> permutation;
  double lhs = 0.0;  // joint advantage
  double rhs = 0.0;  // sum of sequential local advantages
};

struct PermutationStats {
  std::size_t count = 0;
  double max_discrepancy = 0.0;
};

struct DecompositionReport {
  std::size_t trials = 0;
  double max_discrepancy = 0.0;
  DecompositionCase worst;
  std::map<std::vector<std::size_t>, PermutationStats> per_permutation;

  void merge(const DecompositionReport& other);
};

// Test hook for negative controls: flips the sign of the first local
// advantage on the right-hand side.
struct DecompositionOptions {
  bool corrupt_rhs = false;
};

DecompositionCase decomposition_case(const TabularGame& game,
                                     const ExactValues& values,
                                     const ProductPolicy& policy,
                                     std::size_t s,
                                     std::span<const std::size_t> joint_action,
                                     std::span<const std::size_t> permutation,
                                     DecompositionOptions options = {});

// Random state, joint action and permutation per trial.
DecompositionReport verify_decomposition(const TabularGame& game,
                                         const ProductPolicy& policy,
                                         std::size_t trials, Rng& rng,
                                         DecompositionOptions options = {});

// Every one of the n! permutations at one (state, joint action).
DecompositionReport verify_all_permutations(
    const TabularGame& game, const ExactValues& values,
    const ProductPolicy& policy, std::size_t s,
    std::span<const std::size_t> joint_action,
    DecompositionOptions options = {});

// ---- Sequential greedy improvement ----------------------------------------

struct GreedyResult {
  std::vector<std::size_t> joint_action;  // canonical agent order
  std::vector<double> step_advantages;    // one per position
  double step_sum = 0.0;
  double joint_advantage = 0.0;  // Q(s, a) - V(s), computed directly
  std::size_t actions_examined = 0;   // sum_i |A^i|
  std::size_t joint_enumeration = 0;  // prod_i |A^i|
};

// Agent ordering[m] picks the action maximizing its local advantage given
// the actions already chosen by positions < m.
GreedyResult sequential_greedy_improvement(
    const TabularGame& game, const ExactValues& values,
    const ProductPolicy& policy, std::size_t s,
    std::span<const std::size_t> ordering);

// ---- Reference implementations --------------------------------------------

// A_t = sum_l (gamma lambda)^l delta_{t+l}, truncated at the first done, by
// direct O(T^2) summation. delta_t bootstraps from values[t + 1] (or
// `bootstrap` at the end) unless done[t].
std::vector<double> reference_gae(std::span<const double> rewards,
                                  std::span<const double> values,
                                  std::span<const std::uint8_t> dones,
                                  double bootstrap, double gamma,
                                  double lambda);

// Mean squared Bellman error over B samples x n agents. With `mean_value`
// the per-agent values are averaged first and the mean is over samples.
double reference_encoder_loss(std::span<const double> values,
                              std::span<const double> rewards,
                              std::span<const double> next_target_values,
                              std::span<const std::uint8_t> dones,
                              std::size_t agents, double gamma,
                              bool mean_value);

// -(1/(Bn)) sum min(r A, clip(r, 1 - eps, 1 + eps) A) - c * mean(H).
double reference_decoder_loss(std::span<const double> log_probs,
                              std::span<const double> old_log_probs,
                              std::span<const double> advantages,
                              std::span<const double> entropy, double clip,
                              double entropy_coef);

// ---- Full suite ------------------------------------------------------------

struct SuiteOptions {
  std::size_t games = 1000;
  std::size_t trials_per_game = 1;
  double tolerance = 1e-9;
  DecompositionOptions decomposition;
};

// One randomly drawn game of the suite, reproducible from (seed, index).
struct SuiteInstance {
  std::uint64_t game_seed = 0;
  std::vector<std::size_t> action_counts;
  std::size_t num_states = 0;
  double gamma = 0.0;
};

struct SuiteReport {
  std::size_t games = 0;
  DecompositionReport decomposition;
  std::size_t exhaustive_games = 0;  // n = 3 games checked over all n!
  double exhaustive_max = 0.0;
  double edge_identity_max = 0.0;    // Q^{all} vs Q, Q^{} vs V
  double linear_solve_max = 0.0;     // value iteration vs direct solve
  double own_policy_advantage_max = 0.0;
  std::size_t greedy_checks = 0;
  double greedy_sum_max = 0.0;       // |step_sum - joint_advantage|
  double greedy_min_advantage = 0.0;
  SuiteInstance worst_instance;
  double tolerance = 1e-9;

  bool passed() const;
  std::string to_text() const;
};

SuiteInstance suite_instance(std::uint64_t seed, std::size_t index);
SuiteReport run_suite(std::uint64_t seed, const SuiteOptions& options);

}  // namespace mat::oracle

#endif  // MAT_ORACLE_HPP_
