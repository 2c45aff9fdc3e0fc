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

#include "mat/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "mat/errors.hpp"

namespace mat::envs {

namespace {

Observations constant_obs(std::size_t agents) {
  return Observations{agents, 1, std::vector<double>(agents, 1.0)};
}

void require_live(bool done, const std::string& name) {
  if (done) {
    throw ContractError(name + ": step() called on a finished episode");
  }
}

}  // namespace

void Environment::check_actions(std::span<const std::size_t> actions) const {
  if (actions.size() != num_agents()) {
    throw ContractError(name() + ": expected " + std::to_string(num_agents()) +
                        " actions, got " + std::to_string(actions.size()));
  }
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] >= num_actions()) {
      throw ContractError(name() + ": action " + std::to_string(actions[i]) +
                          " of agent " + std::to_string(i) +
                          " out of range [0, " +
                          std::to_string(num_actions()) + ")");
    }
  }
}

// ---- CoordMatrixGame ----------------------------------------------------

CoordMatrixGame::CoordMatrixGame(std::size_t agents, std::size_t actions)
    : agents_(agents), actions_(actions) {
  if (agents == 0 || actions < 2) {
    throw ContractError("coord_matrix needs >= 1 agent and >= 2 actions");
  }
}

double CoordMatrixGame::reward_bound() const {
  const double pairs = 0.5 * static_cast<double>(agents_ * (agents_ - 1));
  return std::max(1.0, -kMismatchPenalty * pairs);
}

Observations CoordMatrixGame::reset(Rng&) {
  done_ = false;
  return constant_obs(agents_);
}

JointStep CoordMatrixGame::step(std::span<const std::size_t> actions, Rng&) {
  require_live(done_, name());
  check_actions(actions);
  const bool all_designated =
      std::all_of(actions.begin(), actions.end(),
                  [this](std::size_t a) { return a == designated_action(); });
  double reward = 0.0;
  if (all_designated) {
    reward = 1.0;
  } else {
    for (std::size_t i = 0; i < agents_; ++i) {
      for (std::size_t j = i + 1; j < agents_; ++j) {
        if (actions[i] != actions[j]) reward += kMismatchPenalty;
      }
    }
  }
  done_ = true;
  return JointStep{constant_obs(agents_), reward, true, 1};
}

// ---- SequentialUnlock ---------------------------------------------------

SequentialUnlock::SequentialUnlock(std::size_t agents, std::size_t actions)
    : agents_(agents), actions_(actions) {
  if (agents == 0 || actions < 2) {
    throw ContractError("sequential_unlock needs >= 1 agent, >= 2 actions");
  }
}

Observations SequentialUnlock::reset(Rng&) {
  done_ = false;
  return constant_obs(agents_);
}

JointStep SequentialUnlock::step(std::span<const std::size_t> actions, Rng&) {
  require_live(done_, name());
  check_actions(actions);
  const auto keys = std::count(actions.begin(), actions.end(), 0u);
  const bool all_same = std::all_of(actions.begin(), actions.end(),
                                    [&](std::size_t a) { return a == actions[0]; });
  double reward = 0.0;
  if (keys == static_cast<long>(agents_)) {
    reward = kUnlockReward;
  } else if (keys > 0) {
    reward = kAlarmPenalty;
  } else if (all_same) {
    reward = kDecoyReward;
  }
  done_ = true;
  return JointStep{constant_obs(agents_), reward, true, 1};
}

// ---- Spread -------------------------------------------------------------

Spread::Spread(std::size_t agents, std::size_t grid, std::size_t horizon)
    : agents_(agents), grid_(grid), horizon_(horizon) {
  if (agents == 0 || grid == 0 || horizon == 0) {
    throw ContractError("spread needs agents, grid and horizon >= 1");
  }
  if (grid * grid < agents) {
    throw ContractError("spread: grid too small for distinct goals");
  }
}

Observations Spread::reset(Rng& rng) {
  const std::size_t cells = grid_ * grid_;
  std::uniform_int_distribution<std::size_t> cell(0, cells - 1);
  // Distinct goal cells by partial Fisher-Yates.
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < agents_; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, cells - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<Cell> goals(agents_), positions(agents_);
  for (std::size_t i = 0; i < agents_; ++i) {
    goals[i] = {order[i] % grid_, order[i] / grid_};
    const std::size_t c = cell(rng);
    positions[i] = {c % grid_, c / grid_};
  }
  return set_state(std::move(positions), std::move(goals));
}

Observations Spread::set_state(std::vector<Cell> agents,
                               std::vector<Cell> goals) {
  if (agents.size() != agents_ || goals.size() != agents_) {
    throw ContractError("spread: state needs one position and goal per agent");
  }
  for (const auto& c : agents) {
    if (c.x >= grid_ || c.y >= grid_) throw ContractError("spread: off grid");
  }
  positions_ = std::move(agents);
  goals_ = std::move(goals);
  t_ = 0;
  done_ = false;
  return observe();
}

double Spread::occupied_goals() const {
  double count = 0.0;
  for (const auto& g : goals_) {
    if (std::find(positions_.begin(), positions_.end(), g) !=
        positions_.end()) {
      count += 1.0;
    }
  }
  return count;
}

JointStep Spread::step(std::span<const std::size_t> actions, Rng&) {
  require_live(done_, name());
  check_actions(actions);
  for (std::size_t i = 0; i < agents_; ++i) {
    Cell& p = positions_[i];
    switch (actions[i]) {
      case 1: if (p.y + 1 < grid_) ++p.y; break;
      case 2: if (p.y > 0) --p.y; break;
      case 3: if (p.x > 0) --p.x; break;
      case 4: if (p.x + 1 < grid_) ++p.x; break;
      default: break;
    }
  }
  ++t_;
  done_ = t_ >= horizon_;
  return JointStep{observe(), occupied_goals(), done_, t_};
}

Observations Spread::observe() const {
  const double s = grid_ > 1 ? 1.0 / static_cast<double>(grid_ - 1) : 1.0;
  Observations o{agents_, obs_dim(), std::vector<double>(agents_ * obs_dim())};
  for (std::size_t i = 0; i < agents_; ++i) {
    double* row = o.data.data() + i * obs_dim();
    std::size_t k = 0;
    row[k++] = s * static_cast<double>(positions_[i].x);
    row[k++] = s * static_cast<double>(positions_[i].y);
    for (const auto& p : positions_) {
      row[k++] = s * static_cast<double>(p.x);
      row[k++] = s * static_cast<double>(p.y);
    }
    for (const auto& g : goals_) {
      row[k++] = s * static_cast<double>(g.x);
      row[k++] = s * static_cast<double>(g.y);
    }
  }
  return o;
}

// ---- TabularGame --------------------------------------------------------

std::size_t TabularGame::num_joint_actions() const {
  std::size_t n = 1;
  for (std::size_t a : action_counts) n *= a;
  return n;
}

std::size_t TabularGame::joint_index(
    std::span<const std::size_t> actions) const {
  if (actions.size() != action_counts.size()) {
    throw ContractError("joint_index: wrong number of actions");
  }
  std::size_t idx = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] >= action_counts[i]) {
      throw ContractError("joint_index: action out of range");
    }
    idx = idx * action_counts[i] + actions[i];
  }
  return idx;
}

std::vector<std::size_t> TabularGame::joint_tuple(std::size_t index) const {
  if (index >= num_joint_actions()) {
    throw ContractError("joint_tuple: index out of range");
  }
  std::vector<std::size_t> t(action_counts.size());
  for (std::size_t i = action_counts.size(); i-- > 0;) {
    t[i] = index % action_counts[i];
    index /= action_counts[i];
  }
  return t;
}

void TabularGame::validate() const {
  const std::size_t ja = num_joint_actions();
  if (num_states == 0 || action_counts.empty() ||
      transitions.size() != num_states * ja * num_states ||
      rewards.size() != num_states * ja || initial.size() != num_states) {
    throw ContractError("tabular game: table sizes do not match dimensions");
  }
  for (std::size_t row = 0; row < num_states * ja; ++row) {
    double total = 0.0;
    for (std::size_t s = 0; s < num_states; ++s) {
      const double p = transitions[row * num_states + s];
      if (p < 0.0) throw ContractError("tabular game: negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ContractError("tabular game: transition row " +
                          std::to_string(row) + " sums to " +
                          std::to_string(total));
    }
  }
}

TabularGame make_tabular_random(std::span<const std::size_t> action_counts,
                                std::size_t num_states, double gamma,
                                std::uint64_t seed) {
  if (action_counts.empty() || num_states == 0) {
    throw ContractError("make_tabular_random: empty game");
  }
  std::size_t joint = 1;
  for (std::size_t a : action_counts) {
    if (a == 0) throw ContractError("make_tabular_random: zero actions");
    joint *= a;
    if (joint > kMaxJointActions) {
      throw ContractError("make_tabular_random: joint action space exceeds " +
                          std::to_string(kMaxJointActions));
    }
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  TabularGame g;
  g.num_states = num_states;
  g.action_counts.assign(action_counts.begin(), action_counts.end());
  g.gamma = gamma;
  g.transitions.resize(num_states * joint * num_states);
  g.rewards.resize(num_states * joint);
  for (std::size_t row = 0; row < num_states * joint; ++row) {
    double total = 0.0;
    for (std::size_t s = 0; s < num_states; ++s) {
      // Bounded away from zero so normalization is well conditioned.
      const double w = 1e-3 + unit(rng);
      g.transitions[row * num_states + s] = w;
      total += w;
    }
    for (std::size_t s = 0; s < num_states; ++s) {
      g.transitions[row * num_states + s] /= total;
    }
    g.rewards[row] = reward(rng);
  }
  g.initial.assign(num_states, 1.0 / static_cast<double>(num_states));
  return g;
}

TabularGame make_tabular_random(std::size_t agents, std::size_t num_states,
                                std::size_t actions, double gamma,
                                std::uint64_t seed) {
  const std::vector<std::size_t> counts(agents, actions);
  return make_tabular_random(counts, num_states, gamma, seed);
}

// ---- TabularEnv ---------------------------------------------------------

TabularEnv::TabularEnv(TabularGame game, std::size_t horizon)
    : game_(std::move(game)), horizon_(horizon) {
  game_.validate();
  if (horizon_ == 0) throw ContractError("tabular env: horizon must be >= 1");
  num_actions();
}

std::size_t TabularEnv::num_actions() const {
  const std::size_t a = game_.action_counts.front();
  for (std::size_t c : game_.action_counts) {
    if (c != a) {
      throw ContractError("tabular env: agents must share an action count");
    }
  }
  return a;
}

Observations TabularEnv::reset(Rng& rng) {
  std::discrete_distribution<std::size_t> init(game_.initial.begin(),
                                               game_.initial.end());
  state_ = init(rng);
  t_ = 0;
  done_ = false;
  return observe();
}

JointStep TabularEnv::step(std::span<const std::size_t> actions, Rng& rng) {
  require_live(done_, name());
  check_actions(actions);
  const std::size_t joint = game_.joint_index(actions);
  const double r = game_.reward(state_, joint);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double cdf = 0.0;
  std::size_t next = game_.num_states - 1;
  for (std::size_t s = 0; s < game_.num_states; ++s) {
    cdf += game_.transition(state_, joint, s);
    if (u < cdf) {
      next = s;
      break;
    }
  }
  state_ = next;
  ++t_;
  done_ = t_ >= horizon_;
  return JointStep{observe(), r, done_, t_};
}

Observations TabularEnv::observe() const {
  const std::size_t n = num_agents(), d = game_.num_states;
  Observations o{n, d, std::vector<double>(n * d, 0.0)};
  for (std::size_t i = 0; i < n; ++i) o.data[i * d + state_] = 1.0;
  return o;
}

// ---- Helpers ------------------------------------------------------------

OneShotReturns enumerate_one_shot(const Environment& env) {
  if (env.horizon() != 1) {
    throw ContractError("enumerate_one_shot: " + env.name() +
                        " is not a one-step game");
  }
  const std::size_t n = env.num_agents(), k = env.num_actions();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= k;
  auto probe = env.clone();
  Rng rng(0);
  OneShotReturns out;
  out.optimal = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> actions(n, 0);
  double sum = 0.0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (std::size_t i = n; i-- > 0;) {
      actions[i] = rest % k;
      rest /= k;
    }
    probe->reset(rng);
    const double r = probe->step(actions, rng).reward;
    sum += r;
    if (r > out.optimal) {
      out.optimal = r;
      out.best_joint_action = actions;
    }
  }
  out.uniform_random = sum / static_cast<double>(total);
  return out;
}

std::unique_ptr<Environment> make_environment(const EnvSpec& spec) {
  if (spec.name == "coord_matrix") {
    return std::make_unique<CoordMatrixGame>(spec.agents, spec.actions);
  }
  if (spec.name == "sequential_unlock") {
    return std::make_unique<SequentialUnlock>(spec.agents, spec.actions);
  }
  if (spec.name == "spread") {
    return std::make_unique<Spread>(spec.agents, spec.grid, spec.horizon);
  }
  if (spec.name == "tabular") {
    return std::make_unique<TabularEnv>(
        make_tabular_random(spec.agents, spec.states, spec.actions,
                            spec.game_gamma, spec.game_seed),
        spec.horizon);
  }
  throw ContractError("unknown environment '" + spec.name + "'");
}

}  // namespace mat::envs
