#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace mvgib;
using namespace mvgib::testing;

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MVGIB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mvgib_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string small_run(const fs::path& out) {
  return "train --data-root " + data_dir().string() + " --dataset MUTAG --epochs 2 --layers 2 --hidden-dim 8 --out " +
         out.string();
}

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("train --no-such-flag 1"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("eval"), 2);  // --checkpoint is required
}

TEST(Cli, InvalidConfigExitsWithTwo) {
  const fs::path dir = scratch("config");
  EXPECT_EQ(run_cli("train --epochs 0 --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("train --views adj,adj --out " + dir.string()), 2);
  std::ofstream(dir / "bad.ini") << "[train]\nepochz = 3\n";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.ini").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("ablate --which EVERYTHING --out " + dir.string()), 2);
  fs::remove_all(dir);
}

TEST(Cli, MissingCheckpointExitsWithTwo) {
  EXPECT_EQ(run_cli("eval --checkpoint /nonexistent/checkpoint.cbor"), 2);
}

TEST(Cli, CorruptCheckpointExitsWithThree) {
  const fs::path dir = scratch("corrupt");
  std::ofstream(dir / "checkpoint.cbor") << "not a checkpoint";
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "checkpoint.cbor").string()), 3);
  fs::remove_all(dir);
}

TEST(Cli, MissingDatasetExitsWithThree) {
  const fs::path dir = scratch("nodata");
  EXPECT_EQ(run_cli("train --data-root " + dir.string() + " --dataset NOPE --epochs 1 --out " + (dir / "o").string()),
            3);
  fs::remove_all(dir);
}

TEST(Cli, DivergentTrainingExitsWithThree) {
  if (!have_dataset("MUTAG")) GTEST_SKIP() << "MUTAG not available";
  const fs::path dir = scratch("diverge");
  EXPECT_EQ(run_cli(small_run(dir) + " --lr 1e300 --batch-norm false"), 3);
  fs::remove_all(dir);
}

TEST(Cli, TrainThenEvaluate) {
  if (!have_dataset("MUTAG")) GTEST_SKIP() << "MUTAG not available";
  // The resolved config (including --out) is embedded in the checkpoint, so
  // the rerun goes to the same directory.
  const fs::path a = scratch("train");
  ASSERT_EQ(run_cli(small_run(a)), 0);
  for (const char* f : {"config.ini", "metrics.jsonl", "checkpoint.cbor"}) EXPECT_TRUE(fs::exists(a / f)) << f;
  const std::string metrics = slurp(a / "metrics.jsonl"), checkpoint = slurp(a / "checkpoint.cbor");
  EXPECT_FALSE(metrics.empty());
  ASSERT_EQ(run_cli(small_run(a)), 0);
  EXPECT_TRUE(metrics == slurp(a / "metrics.jsonl"));
  EXPECT_TRUE(checkpoint == slurp(a / "checkpoint.cbor"));

  ASSERT_EQ(run_cli("eval --checkpoint " + (a / "checkpoint.cbor").string()), 0);
  const auto report = nlohmann::json::parse(slurp(a / "eval_classify.json"));
  EXPECT_EQ(report["task"], "classify");
  EXPECT_EQ(report["per_fold"].size(), 10u);
  ASSERT_EQ(run_cli("eval --task cluster --checkpoint " + (a / "checkpoint.cbor").string()), 0);
  const auto cluster = nlohmann::json::parse(slurp(a / "eval_cluster.json"));
  EXPECT_GE(cluster["nmi"].get<double>(), 0.0);
  EXPECT_LE(cluster["nmi"].get<double>(), 1.0);
  fs::remove_all(a);
}
