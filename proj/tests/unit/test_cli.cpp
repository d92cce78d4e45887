// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "qvdit/archive.hpp"
#include "qvdit/calibration.hpp"
#include "qvdit/cli.hpp"
#include "qvdit/config.hpp"

namespace qvdit {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kSmall = {
    "--set", "model.layers=2",  "--set", "model.hidden=8", "--set", "model.spatial=2", "--set", "model.frames=3",
    "--set", "data.prompts=2",  "--set", "data.timesteps=2", "--set", "eval.prompts=1", "--set", "calib.iters=4",
};

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "qvdit");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> with_small(const std::vector<std::string>& head) {
  std::vector<std::string> args = kSmall;
  args.insert(args.end(), head.begin(), head.end());
  return args;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("qvdit_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string sub(const char* name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, CalibrateWritesOutputsReproducibly) {
  ASSERT_EQ(run(with_small({"-q", "--out-dir", sub("a"), "calibrate"})).code, kExitOk);
  ASSERT_EQ(run(with_small({"-q", "--out-dir", sub("b"), "calibrate"})).code, kExitOk);
  for (const char* f : {"archive.qvda", "loss.csv", "metrics.json", "config.ini", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  }
  EXPECT_EQ(slurp(dir_ / "a/loss.csv"), slurp(dir_ / "b/loss.csv"));
  EXPECT_EQ(slurp(dir_ / "a/archive.qvda"), slurp(dir_ / "b/archive.qvda"));
  EXPECT_EQ(slurp(dir_ / "a/config.ini"), slurp(dir_ / "b/config.ini"));

  const std::string csv = slurp(dir_ / "a/loss.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,task,temporal,total");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

  const auto manifest = nlohmann::json::parse(slurp(dir_ / "a/manifest.json"));
  EXPECT_EQ(manifest["command"], "calibrate");
  EXPECT_EQ(manifest["seed"], 0);
}

TEST_F(CliTest, SeedFlagChangesTheRun) {
  ASSERT_EQ(run(with_small({"-q", "--out-dir", sub("a"), "calibrate"})).code, kExitOk);
  ASSERT_EQ(run(with_small({"-q", "--seed", "3", "--out-dir", sub("b"), "calibrate"})).code, kExitOk);
  EXPECT_NE(slurp(dir_ / "a/loss.csv"), slurp(dir_ / "b/loss.csv"));
  EXPECT_NE(slurp(dir_ / "b/config.ini").find("seed = 3"), std::string::npos);
}

TEST_F(CliTest, SavedConfigReproducesTheRun) {
  ASSERT_EQ(run(with_small({"-q", "--out-dir", sub("a"), "calibrate"})).code, kExitOk);
  ASSERT_EQ(run({"-q", "--out-dir", sub("b"), "calibrate", "-c", sub("a/config.ini")}).code, kExitOk);
  EXPECT_EQ(slurp(dir_ / "a/archive.qvda"), slurp(dir_ / "b/archive.qvda"));
}

TEST_F(CliTest, EvaluateMatchesLibrary) {
  ASSERT_EQ(run(with_small({"-q", "--out-dir", sub("cal"), "calibrate"})).code, kExitOk);
  const CliRun r = run(with_small({"-q", "--out-dir", sub("ev"), "evaluate", "-a", sub("cal/archive.qvda")}));
  ASSERT_EQ(r.code, kExitOk) << r.err;

  const RunConfig cfg = load_config(dir_ / "cal/config.ini");
  const Archive a = load_archive(dir_ / "cal/archive.qvda");
  const MetricsReport m = evaluate(a.model, a.state, make_eval_set(cfg));
  const auto j = nlohmann::json::parse(slurp(dir_ / "ev/metrics.json"));
  EXPECT_EQ(j["mean_task_loss"].get<double>(), m.mean_task_loss);
  EXPECT_EQ(j["mean_temporal_kl"].get<double>(), m.mean_temporal_kl);
  EXPECT_EQ(j["mean_relation_gap"].get<double>(), m.mean_relation_gap);
  EXPECT_EQ(j["mean_relative_error"].get<double>(), m.mean_relative_error);
  EXPECT_EQ(j["samples"].get<std::size_t>(), 5u);
}

TEST_F(CliTest, FullPrecisionRunScoresZero) {
  ASSERT_EQ(run(with_small({"-q", "--set", "calib.w_bits=0", "--set", "calib.a_bits=0", "--set",
                            "calib.enable_tqe=false", "--out-dir", sub("cal"), "calibrate"}))
                .code,
            kExitOk);
  ASSERT_EQ(run(with_small({"-q", "--out-dir", sub("ev"), "evaluate", "-a", sub("cal/archive.qvda")})).code, kExitOk);
  const auto j = nlohmann::json::parse(slurp(dir_ / "ev/metrics.json"));
  EXPECT_EQ(j["mean_task_loss"].get<double>(), 0.0);
  EXPECT_EQ(j["mean_temporal_kl"].get<double>(), 0.0);
}

TEST_F(CliTest, MissingConfigFails) {
  const CliRun r = run({"--out-dir", sub("x"), "calibrate", "-c", sub("absent.ini")});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("absent.ini"), std::string::npos);
}

TEST_F(CliTest, BadOverrideFails) {
  const CliRun r = run(with_small({"--set", "calib.w_bits=11", "--out-dir", sub("x"), "calibrate"}));
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("w_bits"), std::string::npos);
}

TEST_F(CliTest, MismatchedArchiveFails) {
  ASSERT_EQ(run(with_small({"-q", "--out-dir", sub("cal"), "calibrate"})).code, kExitOk);
  const CliRun bad = run(with_small({"--set", "model.hidden=16", "--out-dir", sub("ev"), "evaluate", "-a",
                                  sub("cal/archive.qvda")}));
  EXPECT_EQ(bad.code, kExitFailure);
  EXPECT_NE(bad.err.find("block0.mlp.fc1"), std::string::npos) << bad.err;
}

TEST_F(CliTest, DivergenceExitsWithTwo) {
  const CliRun r = run(with_small({"-q", "--set", "calib.lr_tqe=1e150", "--set", "calib.iters=50", "--out-dir",
                                   sub("x"), "calibrate"}));
  EXPECT_EQ(r.code, kExitDivergence);
  EXPECT_NE(r.err.find("iteration"), std::string::npos);
}

TEST_F(CliTest, AblationWritesOneRowPerSeedAndMethod) {
  const CliRun r =
      run(with_small({"-q", "--set", "calib.iters=1", "--out-dir", sub("abl"), "ablation", "--seeds", "0,1"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = slurp(dir_ / "abl/ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * static_cast<long>(kAblationRows));
  EXPECT_NE(r.out.find("Full"), std::string::npos);
}

TEST_F(CliTest, GradCheckExitCodes) {
  const CliRun ok = run({"grad-check"});
  EXPECT_EQ(ok.code, kExitOk);
  EXPECT_NE(ok.out.find("tmd_grad"), std::string::npos);
  EXPECT_EQ(run({"grad-check", "--corrupt-gradient"}).code, kExitFailure);
  EXPECT_EQ(run({"grad-check", "--frames", "2", "--spatial", "2", "--hidden", "3"}).code, kExitOk);
}

TEST_F(CliTest, EntropyCheckWritesOneRowPerCase) {
  const CliRun r = run({"--out-dir", sub("ent"), "entropy-check", "--seeds", "3", "--bits", "2,4", "--rows", "8",
                     "--cols", "8"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = slurp(dir_ / "ent/entropy.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(run({"--out-dir", sub("ent"), "entropy-check", "--bits", "12"}).code, kExitFailure);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitFailure);
  EXPECT_EQ(run({"frobnicate"}).code, kExitFailure);
  EXPECT_EQ(run({"evaluate"}).code, kExitFailure);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  const CliRun v = run({"--version"});
  EXPECT_EQ(v.code, kExitOk);
  EXPECT_FALSE(v.out.empty());
}

}  // namespace
}  // namespace qvdit
