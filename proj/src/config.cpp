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

#include "mat/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mat/errors.hpp"

namespace mat::config {
namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("'" + s + "' is not a non-negative integer");
  }
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    throw std::invalid_argument("'" + s + "' is out of range");
  }
}

std::size_t parse_size(const std::string& raw) {
  return static_cast<std::size_t>(parse_u64(raw));
}

double parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("'" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("'" + s + "' is not a finite number");
  }
  return v;
}

bool parse_bool(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("'" + s + "' is not a boolean");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(MatConfig&, const std::string&)> parse;
  std::function<std::string(const MatConfig&)> print;
};

#define MAT_SIZE_FIELD(sec, key, member)                                  \
  Field {                                                                 \
    sec, key,                                                             \
        [](MatConfig& c, const std::string& v) { c.member = parse_size(v); }, \
        [](const MatConfig& c) { return std::to_string(c.member); }       \
  }
#define MAT_DOUBLE_FIELD(sec, key, member)                                   \
  Field {                                                                    \
    sec, key,                                                                \
        [](MatConfig& c, const std::string& v) { c.member = parse_double(v); }, \
        [](const MatConfig& c) { return fmt(c.member); }                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"env", "name",
       [](MatConfig& c, const std::string& v) { c.env.name = trim(v); },
       [](const MatConfig& c) { return c.env.name; }},
      MAT_SIZE_FIELD("env", "agents", env.agents),
      MAT_SIZE_FIELD("env", "actions", env.actions),
      MAT_SIZE_FIELD("env", "horizon", env.horizon),
      MAT_SIZE_FIELD("env", "grid", env.grid),
      MAT_SIZE_FIELD("env", "states", env.states),
      MAT_DOUBLE_FIELD("env", "game_gamma", env.game_gamma),
      {"env", "game_seed",
       [](MatConfig& c, const std::string& v) {
         c.env.game_seed = parse_u64(v);
       },
       [](const MatConfig& c) { return std::to_string(c.env.game_seed); }},
      {"model", "variant",
       [](MatConfig& c, const std::string& raw) {
         const std::string v = trim(raw);
         if (v == "mat") {
           c.variant = Variant::kMat;
         } else if (v == "mat-dec") {
           c.variant = Variant::kMatDec;
         } else {
           throw std::invalid_argument("'" + v +
                                       "' is not one of mat, mat-dec");
         }
       },
       [](const MatConfig& c) { return std::string(to_string(c.variant)); }},
      MAT_SIZE_FIELD("model", "d_model", dims.d_model),
      MAT_SIZE_FIELD("model", "heads", dims.n_heads),
      MAT_SIZE_FIELD("model", "blocks", dims.n_blocks),
      {"model", "activation",
       [](MatConfig& c, const std::string& raw) {
         const std::string v = trim(raw);
         if (v == "gelu") {
           c.dims.activation = transformer::Activation::kGelu;
         } else if (v == "relu") {
           c.dims.activation = transformer::Activation::kRelu;
         } else {
           throw std::invalid_argument("'" + v + "' is not one of gelu, relu");
         }
       },
       [](const MatConfig& c) {
         return std::string(c.dims.activation ==
                                    transformer::Activation::kGelu
                                ? "gelu"
                                : "relu");
       }},
      MAT_SIZE_FIELD("train", "iterations", iterations),
      MAT_DOUBLE_FIELD("train", "gamma", train.gamma),
      MAT_DOUBLE_FIELD("train", "lambda", train.gae_lambda),
      MAT_DOUBLE_FIELD("train", "clip", train.clip),
      MAT_DOUBLE_FIELD("train", "entropy_coef", train.entropy_coef),
      MAT_SIZE_FIELD("train", "ppo_epochs", train.ppo_epochs),
      MAT_SIZE_FIELD("train", "num_minibatch", train.num_minibatch),
      MAT_SIZE_FIELD("train", "rollout_length", train.rollout_length),
      MAT_SIZE_FIELD("train", "parallel_envs", train.parallel_envs),
      MAT_DOUBLE_FIELD("train", "actor_lr", train.actor_lr),
      MAT_DOUBLE_FIELD("train", "critic_lr", train.critic_lr),
      MAT_DOUBLE_FIELD("train", "max_grad_norm", train.max_grad_norm),
      MAT_DOUBLE_FIELD("train", "adam_eps", train.adam_eps),
      MAT_SIZE_FIELD("train", "target_sync_epochs", train.target_sync_epochs),
      {"train", "normalize_advantages",
       [](MatConfig& c, const std::string& v) {
         c.train.normalize_advantages = parse_bool(v);
       },
       [](const MatConfig& c) {
         return std::string(c.train.normalize_advantages ? "true" : "false");
       }},
      MAT_SIZE_FIELD("train", "workers", train.workers),
      MAT_SIZE_FIELD("eval", "interval", eval_interval),
      MAT_SIZE_FIELD("eval", "episodes", eval_episodes),
      {"eval", "mode",
       [](MatConfig& c, const std::string& raw) {
         const std::string v = trim(raw);
         if (v == "greedy") {
           c.eval_mode = EvalMode::kGreedy;
         } else if (v == "sample") {
           c.eval_mode = EvalMode::kSample;
         } else if (v == "both") {
           c.eval_mode = EvalMode::kBoth;
         } else {
           throw std::invalid_argument("'" + v +
                                       "' is not one of greedy, sample, both");
         }
       },
       [](const MatConfig& c) { return std::string(to_string(c.eval_mode)); }},
      {"output", "dir",
       [](MatConfig& c, const std::string& v) { c.output_dir = trim(v); },
       [](const MatConfig& c) { return c.output_dir; }},
      MAT_SIZE_FIELD("output", "checkpoint_interval", checkpoint_interval),
      MAT_SIZE_FIELD("output", "checkpoint_keep", checkpoint_keep),
      {"run", "seed",
       [](MatConfig& c, const std::string& v) { c.seed = parse_u64(v); },
       [](const MatConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

#undef MAT_SIZE_FIELD
#undef MAT_DOUBLE_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (section == f.section && key == f.key) return &f;
  }
  return nullptr;
}

bool known_section(const std::string& section) {
  for (const auto& f : fields()) {
    if (section == f.section) return true;
  }
  return false;
}

std::vector<std::string> violations(const MatConfig& c) {
  std::vector<std::string> bad;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };
  const auto& e = c.env;
  need(e.name == "coord_matrix" || e.name == "sequential_unlock" ||
           e.name == "spread" || e.name == "tabular",
       "env.name: '" + e.name +
           "' is not one of coord_matrix, sequential_unlock, spread, tabular");
  need(e.agents >= 1, "env.agents: must be >= 1");
  need(e.actions >= 2, "env.actions: must be >= 2");
  need(e.horizon >= 1, "env.horizon: must be >= 1");
  need(e.grid >= 1, "env.grid: must be >= 1");
  need(e.states >= 1, "env.states: must be >= 1");
  need(e.game_gamma >= 0.0 && e.game_gamma < 1.0,
       "env.game_gamma: must be in [0, 1)");
  if (e.name == "tabular" && e.agents >= 1 && e.actions >= 2) {
    double joint = 1.0;
    for (std::size_t i = 0; i < e.agents; ++i) joint *= e.actions;
    need(joint <= envs::kMaxJointActions,
         "env.actions: joint action space exceeds " +
             std::to_string(envs::kMaxJointActions));
  }
  need(c.dims.d_model >= 1, "model.d_model: must be >= 1");
  need(c.dims.n_heads >= 1, "model.heads: must be >= 1");
  need(c.dims.n_blocks >= 1, "model.blocks: must be >= 1");
  need(c.dims.n_heads == 0 || c.dims.d_model % c.dims.n_heads == 0,
       "model.d_model: must be divisible by model.heads");
  const auto& t = c.train;
  need(c.iterations >= 1, "train.iterations: must be >= 1");
  need(t.gamma >= 0.0 && t.gamma < 1.0, "train.gamma: must be in [0, 1)");
  need(t.gae_lambda >= 0.0 && t.gae_lambda <= 1.0,
       "train.lambda: must be in [0, 1]");
  need(t.clip > 0.0 && t.clip < 1.0, "train.clip: must be in (0, 1)");
  need(t.entropy_coef >= 0.0, "train.entropy_coef: must be >= 0");
  need(t.ppo_epochs >= 1, "train.ppo_epochs: must be >= 1");
  need(t.num_minibatch >= 1, "train.num_minibatch: must be >= 1");
  need(t.rollout_length >= 1, "train.rollout_length: must be >= 1");
  need(t.parallel_envs >= 1, "train.parallel_envs: must be >= 1");
  need(t.num_minibatch <= t.rollout_length * t.parallel_envs,
       "train.num_minibatch: exceeds rollout_length * parallel_envs");
  need(t.actor_lr > 0.0, "train.actor_lr: must be > 0");
  need(t.critic_lr > 0.0, "train.critic_lr: must be > 0");
  need(t.max_grad_norm > 0.0, "train.max_grad_norm: must be > 0");
  need(t.adam_eps > 0.0, "train.adam_eps: must be > 0");
  need(t.target_sync_epochs >= 1, "train.target_sync_epochs: must be >= 1");
  need(t.workers >= 1, "train.workers: must be >= 1");
  need(c.eval_episodes >= 1, "eval.episodes: must be >= 1");
  need(!c.output_dir.empty(), "output.dir: must not be empty");
  need(c.checkpoint_interval >= 1, "output.checkpoint_interval: must be >= 1");
  need(c.checkpoint_keep >= 1, "output.checkpoint_keep: must be >= 1");
  return bad;
}

[[noreturn]] void fail(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw ValidationError(msg);
}

}  // namespace

bool MatConfig::operator==(const MatConfig& o) const {
  return env == o.env && variant == o.variant &&
         dims.d_model == o.dims.d_model && dims.n_heads == o.dims.n_heads &&
         dims.n_blocks == o.dims.n_blocks &&
         dims.activation == o.dims.activation && train == o.train &&
         iterations == o.iterations && eval_interval == o.eval_interval &&
         eval_episodes == o.eval_episodes && eval_mode == o.eval_mode &&
         output_dir == o.output_dir &&
         checkpoint_interval == o.checkpoint_interval &&
         checkpoint_keep == o.checkpoint_keep && seed == o.seed;
}

const char* to_string(Variant v) {
  return v == Variant::kMat ? "mat" : "mat-dec";
}

const char* to_string(EvalMode m) {
  switch (m) {
    case EvalMode::kGreedy: return "greedy";
    case EvalMode::kSample: return "sample";
    case EvalMode::kBoth: return "both";
  }
  return "greedy";
}

MatConfig parse_config(const std::string& text,
                       std::span<const std::string> overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("invalid configuration: line " +
                          std::to_string(e.line()) + ": " + e.message());
  }

  std::vector<std::string> problems;
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    const std::string path = trim(ov.substr(0, eq));
    const auto dot = path.find('.');
    if (eq == std::string::npos || dot == std::string::npos ||
        dot == 0 || dot + 1 == path.size() ||
        path.find('.', dot + 1) != std::string::npos) {
      problems.push_back("override '" + ov +
                         "': expected section.key=value");
      continue;
    }
    tree.put(pt::ptree::path_type(path, '.'), trim(ov.substr(eq + 1)));
  }

  MatConfig config;
  bool have_name = false;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      problems.push_back("key '" + section + "' is outside any section");
      continue;
    }
    if (!known_section(section)) {
      problems.push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, value] : body) {
      const Field* f = find_field(section, key);
      if (!f) {
        problems.push_back(section + "." + key + ": unknown key");
        continue;
      }
      try {
        f->parse(config, value.data());
        if (section == "env" && key == "name") have_name = true;
      } catch (const std::invalid_argument& e) {
        problems.push_back(section + "." + key + ": " + e.what());
      }
    }
  }
  if (!have_name || config.env.name.empty()) {
    problems.push_back("env.name: required field is missing");
  } else {
    for (auto& v : violations(config)) problems.push_back(std::move(v));
  }
  if (!problems.empty()) fail(problems);
  return config;
}

MatConfig load_config(const std::string& path,
                      std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string serialize_config(const MatConfig& config) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.print(config) + "\n";
  }
  return out;
}

void validate(const MatConfig& config) {
  const auto problems = violations(config);
  if (!problems.empty()) fail(problems);
}

std::unique_ptr<envs::Environment> make_env(const MatConfig& config) {
  return envs::make_environment(config.env);
}

ModelConfig model_config(const MatConfig& config,
                         const envs::Environment& env) {
  ModelConfig mc;
  mc.n_agents = env.num_agents();
  mc.obs_dim = env.obs_dim();
  mc.action.kind = ActionKind::kDiscrete;
  mc.action.dim = env.num_actions();
  mc.dims = config.dims;
  mc.variant = config.variant;
  return mc;
}

}  // namespace mat::config
