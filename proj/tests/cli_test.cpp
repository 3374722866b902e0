#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "support.hpp"

namespace collusion {
namespace {

struct CliRun {
  int exit_code;
  std::string output;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(COLLUSION_CLI) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Cli, HelpListsDefaults) {
  const CliRun detect = run("detect --help");
  EXPECT_EQ(detect.exit_code, 0);
  for (const char* want : {"--min-shared UINT [5]", "--trees UINT [100]", "--subsample UINT [1000]",
                           "[score_zero]"}) {
    EXPECT_NE(detect.output.find(want), std::string::npos) << want;
  }
  for (const char* sub : {"simulate", "ingest", "stats", "features", "graph", "evaluate", "serve"}) {
    const CliRun help = run(std::string(sub) + " --help");
    EXPECT_EQ(help.exit_code, 0) << sub;
  }
}

TEST(Cli, DetectOnEmptyDirectoryFails) {
  testing::TempDir dir("cli-empty");
  const CliRun r = run("detect --data " + dir.path().string() + " --out " +
                    (dir.path() / "r.csv").string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("EmptyDataset"), std::string::npos) << r.output;
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "r.csv"));
}

TEST(Cli, EndToEndIsDeterministic) {
  testing::TempDir dir("cli-e2e");
  std::string outputs[2];
  for (int pass = 0; pass < 2; ++pass) {
    const auto data = dir.path() / ("data" + std::to_string(pass));
    const auto report = dir.path() / ("report" + std::to_string(pass) + ".csv");
    ASSERT_EQ(run("simulate --seed 7 --players 600 --matches 300 --colluders 5 --strength 1 --out " +
                  data.string()).exit_code, 0);
    ASSERT_EQ(run("detect --data " + data.string() + " --mode top_k --k 20 --out " +
                  report.string()).exit_code, 0);
    const CliRun eval = run("evaluate --report " + report.string() + " --truth " +
                         (data / "ground_truth.csv").string() + " --k 20");
    ASSERT_EQ(eval.exit_code, 0) << eval.output;
    outputs[pass] = slurp(data / "matches.jsonl") + slurp(report) + eval.output;
    EXPECT_EQ(nlohmann::json::parse(eval.output)["recall_at_k"], 1.0) << eval.output;
  }
  EXPECT_EQ(outputs[0], outputs[1]);
}

TEST(Cli, GraphAndFeaturesExports) {
  testing::TempDir dir("cli-graph");
  const auto data = dir.path() / "data";
  ASSERT_EQ(run("simulate --seed 2 --players 200 --matches 100 --colluders 2 --out " + data.string())
                .exit_code, 0);
  const CliRun graph = run("graph --data " + data.string() + " --out " + (dir.path() / "g.json").string());
  EXPECT_EQ(graph.exit_code, 0) << graph.output;
  EXPECT_NE(slurp(dir.path() / "g.json").find("\"nodes\""), std::string::npos);
  const CliRun features = run("features --data " + data.string() + " --min-shared 2 --out " +
                           (dir.path() / "f.csv").string());
  EXPECT_EQ(features.exit_code, 0) << features.output;
  const CliRun stats = run("--json stats --data " + data.string());
  EXPECT_EQ(stats.exit_code, 0);
  EXPECT_NE(stats.output.find("\"teammates\""), std::string::npos);
}

}  // namespace
}  // namespace collusion
