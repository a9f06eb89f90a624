// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "som/cli.hpp"
#include "som/config_io.hpp"
#include "som/ndarray.hpp"
#include "som/trainer.hpp"

using namespace som;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

TrainConfig quick() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 3;
  c.warmup_epochs = 0;
  c.lora_activation_epoch = 1;
  c.lr_max = 1e-3;
  c.lr_warmup_start = 1e-4;
  c.lr_min = 1e-5;
  c.cosine_period_epochs = 3;
  return c;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_NE(run({"--help"}).out.find("generate"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"explode"}).code, 2);
  EXPECT_EQ(run({"stats", "--paths", "x.csv"}).code, 2);  // --out missing
  EXPECT_EQ(run({"generate", "--out", "/tmp/x", "--snapshots", "many"}).code, 2);
  EXPECT_EQ(run({"finetune", "--ckpt", "a", "--data", "b", "--out", "c", "--fraction", "0.1", "--fractions", "0.1"}).code,
            2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  const auto dir = fixture::temp_dir("cli_missing");
  const CliRun r = run({"stats", "--paths", (dir / "nope.csv").string(), "--out", (dir / "o.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run({"evaluate", "--ckpt", (dir / "c").string(), "--data", (dir / "d").string(), "--report",
                 (dir / "r.json").string()})
                .code,
            1);
}

TEST(Cli, StatsTwoEqualPaths) {
  const auto dir = fixture::temp_dir("cli_stats");
  fs::create_directories(dir);
  MultipathSet m;
  m.paths.resize(6);
  m.paths[0] = PathEntry{0.5, 0.0, true};
  m.paths[1] = PathEntry{0.5, 100e-9, true};
  m.n_paths = 2;
  m.total_power_w = 2e-9;
  write_file(dir / "paths.csv", format_paths_csv(m));
  const CliRun r = run({"stats", "--paths", (dir / "paths.csv").string(), "--out", (dir / "s.json").string(),
                     "--df-max-mhz", "5", "--df-points", "11"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = read_json(dir / "s.json");
  EXPECT_NEAR(j.at("rms_delay_spread_ns").get<double>(), 50.0, 1e-9);
  EXPECT_EQ(j.at("pdp").size(), 2u);
  EXPECT_EQ(j.at("fcf").size(), 11u);
  // first null of the two-path correlation sits at 5 MHz
  EXPECT_NEAR(j.at("fcf").at(10).at("normalized").get<double>(), 0.0, 1e-9);
  EXPECT_TRUE(j.contains("resolved_config"));
  fs::remove_all(dir);
}

TEST(Cli, EndToEndPipeline) {
  const auto root = fixture::temp_dir("cli_e2e");
  fs::create_directories(root);
  write_json(root / "scenario.json", to_json(fixture::tiny_scenario(15)));
  write_json(root / "model.json", to_json(fixture::tiny_model()));
  write_json(root / "train.json", to_json(quick()));
  const std::string data = (root / "data").string();

  CliRun r = run({"generate", "--config", (root / "scenario.json").string(), "--out", data, "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(run({"generate", "--config", (root / "scenario.json").string(), "--out", data}).code, 1);
  EXPECT_EQ(run({"generate", "--config", (root / "scenario.json").string(), "--out", data, "--seed", "5", "--force"}).code,
            0);

  r = run({"train", "--data", data, "--model-config", (root / "model.json").string(), "--train-config",
           (root / "train.json").string(), "--out", (root / "run").string(), "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(root / "run" / "resolved_config.json"));
  EXPECT_EQ(read_json(root / "run" / "resolved_config.json").at("train").at("seed"), 3);

  const fs::path report = root / "eval" / "report.json";
  r = run({"evaluate", "--ckpt", (root / "run" / "best").string(), "--data", data, "--report", report.string(),
           "--plots", (root / "eval" / "plots.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(read_json(report).contains("resolved_config"));
  EXPECT_TRUE(fs::exists(root / "eval" / "report.predictions.csv"));
  EXPECT_TRUE(read_json(root / "eval" / "plots.json").contains("fcf_normalized"));

  r = run({"capacity", "--data", data, "--seed", "1", "--out", (root / "cap.json").string(), "--predictions",
           (root / "eval" / "report.predictions.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json cap = read_json(root / "cap.json");
  EXPECT_EQ(cap.at("per_snapshot").size(), 3u);
  EXPECT_TRUE(cap.at("aggregate").contains("mean_predicted_capacity_bps"));

  r = run({"finetune", "--ckpt", (root / "run" / "final").string(), "--data", data, "--fraction", "0.5",
           "--mix-data", data, "--train-config", (root / "train.json").string(), "--out",
           (root / "ft").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(root / "ft" / "report.json").at("samples_used"), 4);
  EXPECT_TRUE(fs::exists(root / "ft" / "final" / "config.json"));

  r = run({"finetune", "--ckpt", (root / "run" / "final").string(), "--data", data, "--fractions", "0,0.5",
           "--case", "self", "--train-config", (root / "train.json").string(), "--out", (root / "grid").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(root / "grid" / "report.json").at("cases").at(0).at("few_shot").size(), 2u);

  r = run({"ablate", "--variant", "radar_only", "--data", data, "--model-config", (root / "model.json").string(),
           "--train-config", (root / "train.json").string(), "--out", (root / "abl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(root / "abl" / "ablation.json").at("rows").size(), 1u);
  EXPECT_EQ(run({"ablate", "--variant", "bogus", "--data", data, "--out", (root / "abl2").string()}).code, 1);
  fs::remove_all(root);
}
