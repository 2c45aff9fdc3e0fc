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

#include "mat/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mat/checkpoint.hpp"
#include "mat/errors.hpp"
#include "mat/oracle.hpp"
#include "mat/training.hpp"

namespace mat::commands {
namespace {

namespace fs = std::filesystem;
using config::EvalMode;
using config::MatConfig;

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<ActMode> modes_of(EvalMode m) {
  switch (m) {
    case EvalMode::kGreedy: return {ActMode::kGreedy};
    case EvalMode::kSample: return {ActMode::kSample};
    case EvalMode::kBoth: return {ActMode::kGreedy, ActMode::kSample};
  }
  return {ActMode::kGreedy};
}

const char* mode_name(ActMode m) {
  return m == ActMode::kGreedy ? "greedy" : "sample";
}

void save_checkpoint(const training::Trainer& trainer, const MatConfig& cfg,
                     const std::string& text) {
  const fs::path path =
      fs::path(cfg.output_dir) / checkpoint::file_name(trainer.iteration());
  checkpoint::save(path.string(), checkpoint::capture(trainer, text));
  checkpoint::prune(cfg.output_dir, cfg.checkpoint_keep);
}

}  // namespace

int cmd_train(const MatConfig& cfg, std::ostream& out, std::ostream& err) {
  config::validate(cfg);
  fs::create_directories(cfg.output_dir);
  const std::string text = config::serialize_config(cfg);
  {
    std::ofstream echo(fs::path(cfg.output_dir) / "config.ini");
    echo << text;
  }
  const auto env = config::make_env(cfg);
  training::Trainer trainer(MatModel(config::model_config(cfg, *env), cfg.seed),
                            *env, cfg.train, cfg.seed);

  const fs::path metrics_path = fs::path(cfg.output_dir) / "metrics.csv";
  const fs::path eval_path = fs::path(cfg.output_dir) / "eval.csv";
  fs::remove(metrics_path);
  fs::remove(eval_path);
  training::MetricsCsv csv(metrics_path.string());
  std::ofstream eval_csv;
  if (cfg.eval_interval > 0) {
    eval_csv.open(eval_path);
    eval_csv << "iteration,mode,episodes,mean_return,std_return\n";
  }

  for (std::size_t k = 1; k <= cfg.iterations; ++k) {
    training::IterationMetrics m;
    try {
      m = trainer.train_iteration();
    } catch (const NumericError& e) {
      err << "numeric failure: " << e.what() << "\n";
      save_checkpoint(trainer, cfg, text);
      err << "last good state saved at iteration " << trainer.iteration()
          << "\n";
      return kNumericFailure;
    }
    csv.append(m);
    out << "iter " << m.iteration << " steps " << m.env_steps << " return "
        << fixed(m.mean_return) << " enc_loss " << fixed(m.encoder_loss, 5)
        << " dec_loss " << fixed(m.decoder_loss, 5) << " entropy "
        << fixed(m.entropy) << " clip " << fixed(m.clip_fraction, 3)
        << " ev " << fixed(m.explained_variance, 3) << " time "
        << fixed(m.wall_seconds, 2) << "s\n";
    if (cfg.eval_interval > 0 && k % cfg.eval_interval == 0) {
      for (ActMode mode : modes_of(cfg.eval_mode)) {
        const auto r = training::evaluate_policy(
            trainer.model(), *env, cfg.eval_episodes, mode, cfg.seed + k);
        out << "  eval " << mode_name(mode) << " mean " << fixed(r.mean)
            << " std " << fixed(r.stddev) << "\n";
        eval_csv << k << "," << mode_name(mode) << "," << cfg.eval_episodes
                 << "," << r.mean << "," << r.stddev << "\n" << std::flush;
      }
    }
    if (k % cfg.checkpoint_interval == 0 || k == cfg.iterations) {
      save_checkpoint(trainer, cfg, text);
    }
  }
  return kOk;
}

int cmd_eval(const std::string& path, std::size_t episodes, EvalMode mode,
             const std::optional<MatConfig>& architecture, std::uint64_t seed,
             std::ostream& out) {
  if (episodes == 0) throw ContractError("eval: episodes must be >= 1");
  const checkpoint::Checkpoint ckpt = checkpoint::load(path);
  const MatConfig cfg =
      architecture ? *architecture : config::parse_config(ckpt.config_text);
  const auto env = config::make_env(cfg);
  MatModel model(config::model_config(cfg, *env), cfg.seed);
  checkpoint::assign(model.params(), ckpt.params);
  checkpoint::assign(model.target(), ckpt.target);
  out << "checkpoint: " << path << " (iteration " << ckpt.state.iteration
      << ")\n";
  for (ActMode m : modes_of(mode)) {
    const auto r = training::evaluate_policy(model, *env, episodes, m, seed);
    out << "mode: " << mode_name(m) << " episodes: " << episodes
        << " return: " << fixed(r.mean, 6) << " +/- " << fixed(r.stddev, 6)
        << "\n";
  }
  return kOk;
}

int cmd_verify(std::uint64_t seed, std::size_t games, bool corrupt_rhs,
               std::ostream& out) {
  if (games == 0) throw ContractError("verify: trials must be >= 1");
  oracle::SuiteOptions opts;
  opts.games = games;
  opts.decomposition.corrupt_rhs = corrupt_rhs;
  const oracle::SuiteReport report = oracle::run_suite(seed, opts);
  out << "seed: " << seed << "\n" << report.to_text();
  return report.passed() ? kOk : kVerificationFailure;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const checkpoint::Checkpoint c = checkpoint::load(path);
  std::size_t total = 0;
  for (const auto& p : c.params) total += p.value.size();
  out << "format_version: " << checkpoint::kVersion << "\n"
      << "iteration: " << c.state.iteration << "\n"
      << "env_steps: " << c.state.env_steps << "\n"
      << "policy_epochs: " << c.state.policy_epochs << "\n"
      << "adam_steps: " << c.adam_steps << "\n"
      << "env_streams: " << c.state.env_rngs.size() << "\n"
      << "parameters: " << c.params.size() << " tensors, " << total
      << " values\n";
  for (const auto& p : c.params) {
    out << "  " << p.name << " " << ad::to_string(p.value.shape()) << "\n";
  }
  out << "target: " << c.target.size() << " tensors\n"
      << "config:\n" << c.config_text;
  return kOk;
}

int run_guarded(const std::function<int()>& command, std::ostream& err) {
  try {
    return command();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
}

}  // namespace mat::commands
