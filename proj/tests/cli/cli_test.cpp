#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "bcpnn/bcpnn.hpp"
#include "../unit/test_util.hpp"

using namespace bcpnn;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = "env -u BCPNN_MNIST_DIR " + std::string(BCPNN_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyGrid =
    " --set experiment.hidden_sizes=2 --set unsup.hidden_mc=5 --set unsup.epochs=1 --set plasticity.p_conn=0.25"
    " --set plasticity.rewire_period=50 --set experiment.unsup_seeds=1 --set experiment.split_seeds=2"
    " --set experiment.label_grid=10,20 --set experiment.classifiers=assoc,gonogo --set experiment.validation_size=50";

} // namespace

TEST(Cli, MissingDataDirIsUsageError) {
  const auto dir = test::scratch_dir("cli_nodata");
  EXPECT_EQ(run("train-unsup --out " + (dir / "m.bcp1").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("no MNIST directory"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "m.bcp1"));
}

TEST(Cli, UnknownKeyAndSubcommandAreUsageErrors) {
  const auto dir = test::scratch_dir("cli_usage");
  EXPECT_EQ(run("", dir / "log"), 2);
  EXPECT_EQ(run("frobnicate", dir / "log"), 2);
  EXPECT_EQ(run("train-unsup --mnist-dir " + dir.string() + " --set unsup.nope=1 --out " + (dir / "m").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("unknown configuration key"), std::string::npos);
}

TEST(Cli, CorruptDataIsRuntimeError) {
  const auto dir = test::scratch_dir("cli_corrupt");
  std::ofstream(dir / "train-images-idx3-ubyte") << "garbage";
  std::ofstream(dir / "train-labels-idx1-ubyte") << "garbage";
  EXPECT_EQ(run("train-unsup --mnist-dir " + dir.string() + " --out " + (dir / "m").string(), dir / "log"), 1);
}

TEST(Cli, ZeroEpochPipeline) {
  const auto data = test::tiny_mnist_dir("cli_pipe_data", 200, 50);
  const auto dir = test::scratch_dir("cli_pipe");
  const std::string d = " --mnist-dir " + data.string();
  ASSERT_EQ(run("train-unsup" + d + " --epochs 0 --hidden-hc 2 --set unsup.hidden_mc=5 --set plasticity.p_conn=0.25 --out " +
                    (dir / "m.bcp1").string(),
                dir / "log"),
            0)
      << slurp(dir / "log");
  const auto m = load_unsup_model(dir / "m.bcp1");
  EXPECT_EQ(m.samples_seen, 0u);
  EXPECT_EQ(m.hidden_geometry, LayerGeometry(2, 5));
  EXPECT_NE(slurp(dir / "m.bcp1.log").find("unsup.tau_p = 60"), std::string::npos);

  ASSERT_EQ(run("extract" + d + " --model " + (dir / "m.bcp1").string() + " --split test --out " + (dir / "r.brep").string(),
                dir / "log"),
            0);
  EXPECT_EQ(load_representations(dir / "r.brep").rows, 50u);
  ASSERT_EQ(run("extract" + d + " --model " + (dir / "m.bcp1").string() + " --split train --out " + (dir / "tr.brep").string(),
                dir / "log"),
            0);
  ASSERT_EQ(run("train-cls" + d + " --reps " + (dir / "tr.brep").string() + " --classifier assoc --n-labels 20 --out " +
                    (dir / "c.bcp1").string(),
                dir / "log"),
            0)
      << slurp(dir / "log");
  EXPECT_EQ(load_classifier(dir / "c.bcp1").kind(), ClassifierKind::assoc);
  ASSERT_EQ(run("eval" + d + " --model " + (dir / "c.bcp1").string() + " --reps " + (dir / "r.brep").string(), dir / "out"), 0);
  EXPECT_NE(slurp(dir / "out").find("assoc accuracy "), std::string::npos);
  EXPECT_EQ(run("eval" + d + " --model " + (dir / "m.bcp1").string() + " --reps " + (dir / "r.brep").string(), dir / "out"), 1);
}

TEST(Cli, ExperimentIsDeterministicAndResumes) {
  const auto data = test::tiny_mnist_dir("cli_xp_data", 300, 20);
  const auto a = test::scratch_dir("cli_xp_a");
  const auto b = test::scratch_dir("cli_xp_b");
  const std::string base = "experiment --mnist-dir " + data.string() + kTinyGrid;
  ASSERT_EQ(run(base + " --out-dir " + a.string(), a / "log"), 0) << slurp(a / "log");
  ASSERT_EQ(run(base + " --out-dir " + b.string(), b / "log"), 0);
  const auto csv = slurp(a / "results.csv");
  EXPECT_EQ(csv, slurp(b / "results.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 2);
  EXPECT_TRUE(fs::exists(a / "table.md"));
  EXPECT_TRUE(fs::exists(a / "curves" / "curve_h2_assoc.csv"));
  EXPECT_FALSE(fs::exists(a / "failures.csv"));
  EXPECT_EQ(slurp(a / "run.log").find("cache hit"), std::string::npos);

  ASSERT_EQ(run(base + " --resume --out-dir " + a.string(), a / "log"), 0);
  EXPECT_NE(slurp(a / "run.log").find("cache hit"), std::string::npos);
  EXPECT_EQ(slurp(a / "results.csv"), csv);

  ASSERT_EQ(run("report --in " + (a / "results.csv").string() + " --out-table " + (a / "t2.md").string(), a / "rep"), 0);
  EXPECT_EQ(slurp(a / "t2.md"), slurp(a / "table.md"));
}

TEST(Cli, ReportRejectsEmptyAndMalformed) {
  const auto dir = test::scratch_dir("cli_report");
  std::ofstream(dir / "empty.csv") << kResultsHeader << "\n";
  EXPECT_EQ(run("report --in " + (dir / "empty.csv").string(), dir / "log"), 2);
  std::ofstream(dir / "bad.csv") << "run_id,accuracy\n";
  EXPECT_EQ(run("report --in " + (dir / "bad.csv").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("schema"), std::string::npos);
}
