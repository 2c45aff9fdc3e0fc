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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mat/checkpoint.hpp"
#include "mat/commands.hpp"
#include "mat/config.hpp"
#include "mat/errors.hpp"
#include "mat/training.hpp"

namespace mat {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mat_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drops the trailing wall_seconds column of every row.
std::string without_wall_clock(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    out += line.substr(0, line.rfind(',')) + "\n";
  }
  return out;
}

config::MatConfig small_run(const fs::path& dir, std::size_t iterations) {
  const std::string text =
      "[env]\nname = coord_matrix\nagents = 2\nactions = 3\n"
      "[model]\nd_model = 16\nheads = 2\n"
      "[train]\nrollout_length = 4\nparallel_envs = 4\nppo_epochs = 2\n";
  const std::vector<std::string> sets{
      "train.iterations=" + std::to_string(iterations),
      "output.dir=" + dir.string()};
  return config::parse_config(text, sets);
}

std::string validation_message(const std::string& text,
                               std::vector<std::string> overrides = {}) {
  try {
    config::parse_config(text, overrides);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsMatchTrainingDefaults) {
  const config::MatConfig c = config::parse_config("[env]\nname = spread\n");
  EXPECT_EQ(c.train, training::TrainConfig{});
  EXPECT_EQ(c.checkpoint_interval, 50u);
  EXPECT_EQ(c.checkpoint_keep, 3u);
  EXPECT_EQ(c.variant, Variant::kMat);
}

TEST(Config, RoundTrip) {
  const std::string text =
      "[run]\nseed = 9\n[env]\nname = tabular\nstates = 4\ngame_seed = 12\n"
      "game_gamma = 0.7\n[model]\nvariant = mat-dec\nd_model = 32\nheads = 4\n"
      "blocks = 2\nactivation = relu\n[train]\ngamma = 0.95\nclip = 0.1\n"
      "actor_lr = 0.0003\nnormalize_advantages = false\n"
      "[eval]\ninterval = 5\nmode = both\n";
  const config::MatConfig a = config::parse_config(text);
  const std::string once = config::serialize_config(a);
  const config::MatConfig b = config::parse_config(once);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(config::serialize_config(b), once);
  EXPECT_EQ(b.variant, Variant::kMatDec);
  EXPECT_EQ(b.dims.activation, transformer::Activation::kRelu);
  EXPECT_EQ(b.eval_mode, config::EvalMode::kBoth);
  EXPECT_FALSE(b.train.normalize_advantages);
  EXPECT_EQ(b.seed, 9u);
}

TEST(Config, OrderInsensitive) {
  const config::MatConfig a = config::parse_config(
      "[train]\nclip = 0.1\ngamma = 0.9\n[env]\nname = spread\n");
  const config::MatConfig b = config::parse_config(
      "[env]\nname = spread\n[train]\ngamma = 0.9\nclip = 0.1\n");
  EXPECT_TRUE(a == b);
}

TEST(Config, MissingEnvIsNamed) {
  const std::string msg = validation_message("[train]\nclip = 0.1\n");
  EXPECT_NE(msg.find("env"), std::string::npos) << msg;
}

TEST(Config, UnknownKeyAndSectionRejected) {
  std::string msg =
      validation_message("[env]\nname = spread\n[train]\nclipp = 0.1\n");
  EXPECT_NE(msg.find("train.clipp"), std::string::npos) << msg;
  msg = validation_message("[env]\nname = spread\n[extra]\nx = 1\n");
  EXPECT_NE(msg.find("[extra]"), std::string::npos) << msg;
}

TEST(Config, EveryViolationListed) {
  const std::string msg = validation_message(
      "[env]\nname = spread\n[model]\nd_model = 10\nheads = 3\n"
      "[train]\nclip = 1.5\ngamma = 1.0\nactor_lr = 0\n");
  for (const char* key : {"clip", "gamma", "actor_lr", "heads"}) {
    EXPECT_NE(msg.find(key), std::string::npos) << key << " in " << msg;
  }
}

TEST(Config, OverridesApplyAndAreChecked) {
  const config::MatConfig c = config::parse_config(
      "[env]\nname = spread\n[train]\nclip = 0.1\n",
      std::vector<std::string>{"train.clip=0.3", "env.agents=3"});
  EXPECT_EQ(c.train.clip, 0.3);
  EXPECT_EQ(c.env.agents, 3u);
  EXPECT_NE(validation_message("[env]\nname = spread\n", {"clip=0.3"}), "");
  EXPECT_NE(validation_message("[env]\nname = spread\n", {"train.nope=1"}),
            "");
  EXPECT_NE(validation_message("[env]\nname = spread\n", {"train.clip=abc"}),
            "");
}

TEST(Checkpoint, EncodeDecodeIsByteExact) {
  const fs::path dir = scratch_dir("roundtrip");
  const config::MatConfig cfg = small_run(dir, 2);
  ASSERT_EQ(commands::cmd_train(cfg, std::cout, std::cerr), 0);
  const fs::path path = dir / checkpoint::file_name(2);
  const std::string bytes = read_file(path);
  const checkpoint::Checkpoint c = checkpoint::decode(bytes);
  EXPECT_EQ(checkpoint::encode(c), bytes);
  EXPECT_EQ(c.state.iteration, 2u);
  EXPECT_EQ(c.config_text, config::serialize_config(cfg));
}

TEST(Checkpoint, CorruptInputIsFormatError) {
  const fs::path dir = scratch_dir("corrupt");
  ASSERT_EQ(commands::cmd_train(small_run(dir, 1), std::cout, std::cerr), 0);
  const std::string bytes = read_file(dir / checkpoint::file_name(1));
  EXPECT_THROW(checkpoint::decode(bytes.substr(0, bytes.size() / 2)),
               FormatError);
  EXPECT_THROW(checkpoint::decode(bytes + "x"), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(checkpoint::decode(bad), FormatError);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const fs::path dir = scratch_dir("resume");
  const config::MatConfig cfg = small_run(dir, 4);
  const auto env = config::make_env(cfg);
  auto fresh = [&] {
    return training::Trainer(
        MatModel(config::model_config(cfg, *env), cfg.seed), *env, cfg.train,
        cfg.seed);
  };
  training::Trainer straight = fresh();
  for (int i = 0; i < 2; ++i) straight.train_iteration();
  const std::string text = config::serialize_config(cfg);
  const std::string bytes =
      checkpoint::encode(checkpoint::capture(straight, text));

  training::Trainer resumed = fresh();
  checkpoint::restore(checkpoint::decode(bytes), resumed);
  EXPECT_EQ(checkpoint::encode(checkpoint::capture(resumed, text)), bytes);
  // Coordination episodes last one step, so restarting the environments
  // on resume does not change the trajectory.
  for (int i = 0; i < 2; ++i) {
    const auto a = straight.train_iteration();
    const auto b = resumed.train_iteration();
    EXPECT_EQ(a.mean_return, b.mean_return);
    EXPECT_EQ(a.encoder_loss, b.encoder_loss);
    EXPECT_EQ(a.decoder_loss, b.decoder_loss);
  }
}

TEST(Checkpoint, RetentionKeepsNewest) {
  const fs::path dir = scratch_dir("retention");
  const std::vector<std::string> sets{
      "train.iterations=5", "output.dir=" + dir.string(),
      "output.checkpoint_interval=1", "output.checkpoint_keep=2",
      "train.rollout_length=2", "train.parallel_envs=2", "train.ppo_epochs=1",
      "model.d_model=8"};
  const config::MatConfig cfg =
      config::parse_config("[env]\nname = coord_matrix\n", sets);
  ASSERT_EQ(commands::cmd_train(cfg, std::cout, std::cerr), 0);
  const auto files = checkpoint::list(dir.string());
  ASSERT_EQ(files.size(), 2u);
  EXPECT_NE(files[0].find(checkpoint::file_name(4)), std::string::npos);
  EXPECT_NE(files[1].find(checkpoint::file_name(5)), std::string::npos);
}

TEST(Train, SmokeWritesRowsAndCheckpoint) {
  const fs::path dir = scratch_dir("smoke");
  std::ostringstream out;
  ASSERT_EQ(commands::cmd_train(small_run(dir, 3), out, std::cerr), 0);
  const std::string csv = read_file(dir / "metrics.csv");
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, training::MetricsCsv::kHeader);
  std::size_t rows = 0;
  while (std::getline(lines, row)) ++rows;
  EXPECT_EQ(rows, 3u);
  EXPECT_EQ(checkpoint::list(dir.string()).size(), 1u);
  EXPECT_TRUE(fs::exists(dir / checkpoint::file_name(3)));
  EXPECT_NE(out.str().find("iter 3"), std::string::npos);
}

TEST(Train, SameSeedSameMetrics) {
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  ASSERT_EQ(commands::cmd_train(small_run(a, 3), std::cout, std::cerr), 0);
  ASSERT_EQ(commands::cmd_train(small_run(b, 3), std::cout, std::cerr), 0);
  EXPECT_EQ(without_wall_clock(read_file(a / "metrics.csv")),
            without_wall_clock(read_file(b / "metrics.csv")));
}

TEST(Eval, RoundTripReproducesGreedyReturns) {
  const fs::path dir = scratch_dir("eval");
  const config::MatConfig cfg = small_run(dir, 2);
  const auto env = config::make_env(cfg);
  training::Trainer trainer(
      MatModel(config::model_config(cfg, *env), cfg.seed), *env, cfg.train,
      cfg.seed);
  trainer.train_iteration();
  trainer.train_iteration();
  const auto before =
      training::evaluate_policy(trainer.model(), *env, 10, ActMode::kGreedy, 4);
  const fs::path path = dir / "ckpt.bin";
  checkpoint::save(path.string(), checkpoint::capture(
                                      trainer, config::serialize_config(cfg)));
  MatModel loaded(config::model_config(cfg, *env), 999);
  const checkpoint::Checkpoint c = checkpoint::load(path.string());
  checkpoint::assign(loaded.params(), c.params);
  const auto after =
      training::evaluate_policy(loaded, *env, 10, ActMode::kGreedy, 4);
  EXPECT_EQ(before.returns, after.returns);

  std::ostringstream out;
  EXPECT_EQ(commands::cmd_eval(path.string(), 10, config::EvalMode::kGreedy,
                               std::nullopt, 4, out),
            0);
  EXPECT_NE(out.str().find("return"), std::string::npos);
}

TEST(Eval, ZeroEpisodesIsContractError) {
  const fs::path dir = scratch_dir("eval0");
  ASSERT_EQ(commands::cmd_train(small_run(dir, 1), std::cout, std::cerr), 0);
  std::ostringstream out;
  EXPECT_THROW(commands::cmd_eval((dir / checkpoint::file_name(1)).string(), 0,
                                  config::EvalMode::kGreedy, std::nullopt, 1,
                                  out),
               ContractError);
}

TEST(Eval, ArchitectureMismatchNamesTensor) {
  const fs::path dir = scratch_dir("mismatch");
  ASSERT_EQ(commands::cmd_train(small_run(dir, 1), std::cout, std::cerr), 0);
  config::MatConfig other = small_run(dir, 1);
  other.dims.d_model = 32;
  std::ostringstream out;
  try {
    commands::cmd_eval((dir / checkpoint::file_name(1)).string(), 2,
                       config::EvalMode::kGreedy, other, 1, out);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("tensor '"), std::string::npos)
        << e.what();
  }
}

TEST(Verify, ExitCodes) {
  std::ostringstream ok, bad;
  EXPECT_EQ(commands::cmd_verify(1, 50, false, ok), commands::kOk);
  EXPECT_NE(ok.str().find("max_discrepancy"), std::string::npos) << ok.str();
  EXPECT_NE(ok.str().find("trials"), std::string::npos) << ok.str();
  EXPECT_EQ(commands::cmd_verify(1, 50, true, bad),
            commands::kVerificationFailure);
}

TEST(Guarded, MapsErrorsToExitCodes) {
  std::ostringstream err;
  EXPECT_EQ(commands::run_guarded(
                [] () -> int { throw ValidationError("x"); }, err),
            commands::kValidationFailure);
  EXPECT_EQ(commands::run_guarded(
                [] () -> int { throw NumericError("x"); }, err),
            commands::kNumericFailure);
  EXPECT_EQ(commands::run_guarded([] { return 3; }, err), 3);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(MAT_CLI_PATH) + " " + args +
                                  " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ExitCodes) {
  const fs::path dir = scratch_dir("binary");
  std::ofstream(dir / "bad.ini") << "[train]\nclip = 0.1\n";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.ini").string()), 1);
  EXPECT_EQ(run_cli("verify --trials 20"), 0);
  EXPECT_EQ(run_cli("verify --trials 20 --corrupt-rhs"), 3);
  std::ofstream(dir / "good.ini")
      << "[env]\nname = coord_matrix\n[model]\nd_model = 8\n"
         "[train]\nrollout_length = 2\nparallel_envs = 2\nppo_epochs = 1\n";
  EXPECT_EQ(run_cli("train --config " + (dir / "good.ini").string() +
                    " --set train.iterations=2 --seed 3 --out " +
                    (dir / "run").string()),
            0);
  const std::string ckpt = (dir / "run" / checkpoint::file_name(2)).string();
  EXPECT_EQ(run_cli("eval " + ckpt + " --episodes 3"), 0);
  EXPECT_EQ(run_cli("inspect-checkpoint " + ckpt), 0);
  EXPECT_EQ(config::load_config((dir / "run" / "config.ini").string()).seed,
            3u);
}

}  // namespace
}  // namespace mat
