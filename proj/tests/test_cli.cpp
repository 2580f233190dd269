#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(FAIRLENS_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path root;
  fs::path config;

  void SetUp() override {
    root = fs::temp_directory_path() / ("fairlens_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
    config = root / "config.json";
    std::ofstream(config) << json{{"preset", "parity_gap_2x2"},
                                  {"n", 600},
                                  {"embed", {{"dim", 64}}},
                                  {"hyper", {{"epochs", 5}}},
                                  {"subsets", json::array({json::array({"notes"}), json::array({"all"})})}}
                                 .dump();
  }
  void TearDown() override { fs::remove_all(root); }

  std::string common(const fs::path& out) const {
    return "--config " + config.string() + " --seed 7 --out " + out.string();
  }

  void pipeline(const fs::path& out) {
    const auto ds = (out / "dataset.jsonl").string();
    const auto model = (out / "model.json").string();
    ASSERT_EQ(run("synth " + common(out)), 0);
    ASSERT_EQ(run("train " + common(out) + " --dataset " + ds), 0);
    ASSERT_EQ(run("ablate " + common(out) + " --dataset " + ds), 0);
    ASSERT_EQ(run("audit " + common(out) + " --dataset " + ds + " --model " + model), 0);
    ASSERT_EQ(run("mitigate " + common(out) + " --dataset " + ds + " --model " + model + " --mitigator roc"), 0);
    ASSERT_EQ(run("mitigate " + common(out) + " --dataset " + ds + " --model " + model + " --mitigator sdae"), 0);
    ASSERT_EQ(run("report " + common(out)), 0);
  }
};

}  // namespace

TEST_F(Cli, FullPipelineWritesArtifacts) {
  const auto out = root / "a";
  pipeline(out);
  for (const char* f : {"dataset.jsonl", "dataset.meta.json", "group_counts.csv", "model.json", "metrics.json",
                        "ablation.csv", "ablation.md", "audit.json", "audit.md", "audit_disposition_intersection.csv",
                        "mitigate_roc_disposition_delta.csv", "mitigate_sdae_disposition.json",
                        "plot_sdae_disposition.json", "derived_roc_disposition.jsonl", "report.md"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_TRUE(fs::exists(out / "sdae_disposition" / "manifest.json"));
  const auto csv = slurp(out / "audit_disposition_intersection.csv");
  EXPECT_EQ(csv.rfind("# fairlens ", 0), 0u);
  EXPECT_NE(csv.find("group,n,dp,tpr,dp_delta,leveling_down"), std::string::npos);
  const auto verdict = json::parse(slurp(out / "mitigate_roc_disposition.json"))["verdict"].get<std::string>();
  EXPECT_TRUE(verdict == "fair" || verdict == "unfair" || verdict == "fair_but_leveling_down");
  EXPECT_EQ(json::parse(slurp(out / "audit.json"))["tasks"]["disposition"].size(), 3u);
  const auto report = slurp(out / "report.md");
  EXPECT_NE(report.find("80% rule"), std::string::npos);
}

TEST_F(Cli, RerunIsByteIdentical) {
  pipeline(root / "a");
  pipeline(root / "b");
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "a");
    ASSERT_TRUE(fs::exists(root / "b" / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(root / "b" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 15u);
}

TEST_F(Cli, ExitCodes) {
  const auto out = root / "e";
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate --out " + out.string()), 1);
  EXPECT_EQ(run("train --out " + out.string()), 1);
  EXPECT_EQ(run("synth --out " + out.string()), 1);
  EXPECT_EQ(run("synth --config /nonexistent.json --out " + out.string()), 1);
  EXPECT_EQ(run("audit " + common(out) + " --dataset x.jsonl --model m.json --grouping sideways"), 1);

  const auto bad = root / "bad.jsonl";
  std::ofstream(bad) << "{\"id\": \"a\", \"sensitive\": {\"gender\": \"male\"}\n";
  std::ofstream(root / "bad.meta.json") << R"({"schema": {"attributes": [{"name": "gender", "values": ["male", "female"]}]}, "tasks": ["y"]})";
  EXPECT_EQ(run("train " + common(out) + " --dataset " + bad.string()), 2);
  EXPECT_EQ(run("train " + common(out) + " --dataset " + (root / "missing.jsonl").string()), 1);
  EXPECT_EQ(run("report --out " + (root / "missing").string()), 1);
  fs::create_directories(root / "empty");
  EXPECT_EQ(run("report --out " + (root / "empty").string()), 2);
}
