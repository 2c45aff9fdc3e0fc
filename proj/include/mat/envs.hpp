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

// Desk-scale cooperative Markov games.
//
// Every environment shares one team reward per step, takes a discrete action
// per agent (all agents share the same action count) and ends an episode at
// its horizon or at a terminal state.

#ifndef MAT_ENVS_HPP_
#define MAT_ENVS_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mat/params.hpp"

namespace mat::envs {

// Row-major [agents x dim] observation block.
struct Observations {
  std::size_t agents = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t agent) const {
    return std::span<const double>(data).subspan(agent * dim, dim);
  }
  bool operator==(const Observations&) const = default;
};

struct JointStep {
  Observations obs;
  double reward = 0.0;  // shared by the whole team
  bool done = false;
  std::size_t step = 0;  // steps taken in the episode, including this one
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t num_agents() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t num_actions() const = 0;
  virtual std::size_t horizon() const = 0;
  // |reward| never exceeds this.
  virtual double reward_bound() const = 0;

  virtual Observations reset(Rng& rng) = 0;
  // Throws ContractError for out-of-range actions or stepping a finished
  // episode.
  virtual JointStep step(std::span<const std::size_t> actions, Rng& rng) = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;

 protected:
  void check_actions(std::span<const std::size_t> actions) const;
};

// Stateless one-step game. Reward 1 when every agent picks the designated
// action (the last one, k - 1); otherwise -0.1 for every pair of agents whose
// actions differ (so agreeing on a wrong action scores 0).
class CoordMatrixGame : public Environment {
 public:
  CoordMatrixGame(std::size_t agents, std::size_t actions);

  std::string name() const override { return "coord_matrix"; }
  std::size_t num_agents() const override { return agents_; }
  std::size_t obs_dim() const override { return 1; }
  std::size_t num_actions() const override { return actions_; }
  std::size_t horizon() const override { return 1; }
  double reward_bound() const override;
  std::size_t designated_action() const { return actions_ - 1; }

  Observations reset(Rng& rng) override;
  JointStep step(std::span<const std::size_t> actions, Rng& rng) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<CoordMatrixGame>(*this);
  }

  static constexpr double kMismatchPenalty = -0.1;

 private:
  std::size_t agents_, actions_;
  bool done_ = true;
};

// Stateless one-step lock. Action 0 turns the key: the lock opens (reward 1)
// only if every agent turns it; a partial turn trips the alarm (-1). Agents
// that all agree on the same decoy action collect a consolation reward; any
// other combination scores 0. Whether turning the key pays off for an agent
// depends entirely on what the agents before it chose, so a policy that sees
// its predecessors' actions can follow a leader into the lock, while
// independent per-agent policies are pulled towards the safe decoy.
class SequentialUnlock : public Environment {
 public:
  SequentialUnlock(std::size_t agents, std::size_t actions);

  std::string name() const override { return "sequential_unlock"; }
  std::size_t num_agents() const override { return agents_; }
  std::size_t obs_dim() const override { return 1; }
  std::size_t num_actions() const override { return actions_; }
  std::size_t horizon() const override { return 1; }
  double reward_bound() const override { return 1.0; }

  Observations reset(Rng& rng) override;
  JointStep step(std::span<const std::size_t> actions, Rng& rng) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<SequentialUnlock>(*this);
  }

  static constexpr double kUnlockReward = 1.0;
  static constexpr double kDecoyReward = 0.5;
  static constexpr double kAlarmPenalty = -1.0;

 private:
  std::size_t agents_, actions_;
  bool done_ = true;
};

// n agents and n goal cells on a grid x grid board. Actions: stay, up, down,
// left, right (moves off the board are clamped). Each step the team earns
// the number of distinct goals occupied by at least one agent. Every agent
// observes the full state: its own position, all agent positions and all
// goal positions, scaled to [0, 1].
class Spread : public Environment {
 public:
  Spread(std::size_t agents, std::size_t grid, std::size_t horizon = 20);

  std::string name() const override { return "spread"; }
  std::size_t num_agents() const override { return agents_; }
  std::size_t obs_dim() const override { return 2 + 4 * agents_; }
  std::size_t num_actions() const override { return 5; }
  std::size_t horizon() const override { return horizon_; }
  double reward_bound() const override {
    return static_cast<double>(agents_);
  }

  Observations reset(Rng& rng) override;
  JointStep step(std::span<const std::size_t> actions, Rng& rng) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<Spread>(*this);
  }

  struct Cell {
    std::size_t x = 0, y = 0;
    bool operator==(const Cell&) const = default;
  };
  // Places agents and goals explicitly (tests, scripted scenarios).
  Observations set_state(std::vector<Cell> agents, std::vector<Cell> goals);
  double occupied_goals() const;

 private:
  Observations observe() const;

  std::size_t agents_, grid_, horizon_;
  std::vector<Cell> positions_, goals_;
  std::size_t t_ = 0;
  bool done_ = true;
};

// Finite Markov game with explicit tables. Joint actions are indexed in
// mixed radix with agent 0 most significant.
struct TabularGame {
  std::size_t num_states = 0;
  std::vector<std::size_t> action_counts;
  std::vector<double> transitions;  // [s][joint][s']
  std::vector<double> rewards;      // [s][joint]
  std::vector<double> initial;      // [s]
  double gamma = 0.9;

  std::size_t num_agents() const { return action_counts.size(); }
  std::size_t num_joint_actions() const;
  std::size_t joint_index(std::span<const std::size_t> actions) const;
  std::vector<std::size_t> joint_tuple(std::size_t index) const;
  double transition(std::size_t s, std::size_t joint, std::size_t next) const {
    return transitions[(s * num_joint_actions() + joint) * num_states + next];
  }
  double reward(std::size_t s, std::size_t joint) const {
    return rewards[s * num_joint_actions() + joint];
  }
  // Throws ContractError when a row does not sum to 1 within 1e-12 or a
  // table has the wrong size.
  void validate() const;
};

inline constexpr std::size_t kMaxJointActions = 4096;

// Transitions are normalized uniform draws, rewards uniform in [-1, 1],
// initial distribution uniform. Throws ContractError when the joint action
// space exceeds kMaxJointActions.
TabularGame make_tabular_random(std::span<const std::size_t> action_counts,
                                std::size_t num_states, double gamma,
                                std::uint64_t seed);
TabularGame make_tabular_random(std::size_t agents, std::size_t num_states,
                                std::size_t actions, double gamma,
                                std::uint64_t seed);

// TabularGame as an episodic environment. Every agent observes one-hot(s).
class TabularEnv : public Environment {
 public:
  TabularEnv(TabularGame game, std::size_t horizon);

  std::string name() const override { return "tabular"; }
  std::size_t num_agents() const override { return game_.num_agents(); }
  std::size_t obs_dim() const override { return game_.num_states; }
  // Requires equal action counts across agents.
  std::size_t num_actions() const override;
  std::size_t horizon() const override { return horizon_; }
  double reward_bound() const override { return 1.0; }

  Observations reset(Rng& rng) override;
  JointStep step(std::span<const std::size_t> actions, Rng& rng) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<TabularEnv>(*this);
  }

  const TabularGame& game() const { return game_; }
  std::size_t state() const { return state_; }

 private:
  Observations observe() const;

  TabularGame game_;
  std::size_t horizon_;
  std::size_t state_ = 0;
  std::size_t t_ = 0;
  bool done_ = true;
};

// Exhaustive enumeration of every joint action of a one-step game.
struct OneShotReturns {
  double optimal = 0.0;
  double uniform_random = 0.0;  // expected return of uniform random play
  std::vector<std::size_t> best_joint_action;
};
OneShotReturns enumerate_one_shot(const Environment& env);

struct EnvSpec {
  std::string name;  // coord_matrix | sequential_unlock | spread | tabular
  std::size_t agents = 2;
  std::size_t actions = 3;
  std::size_t horizon = 20;  // spread / tabular
  std::size_t grid = 4;      // spread
  std::size_t states = 3;    // tabular
  double game_gamma = 0.9;   // tabular
  std::uint64_t game_seed = 0;  // tabular

  bool operator==(const EnvSpec&) const = default;
};

std::unique_ptr<Environment> make_environment(const EnvSpec& spec);

}  // namespace mat::envs

#endif  // MAT_ENVS_HPP_
