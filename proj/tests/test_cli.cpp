#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "s3e/cli.hpp"
#include "test_helpers.hpp"

using namespace s3e;
using testing_util::toy_path;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args, const std::string& stdin_text = "") {
  args.insert(args.begin(), "s3e");
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  const int code = cli::main(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("s3e_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
    unsetenv("S3E_SEED");
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(CliTest, ParseBuildGroupsDefaults) {
  auto c = cli::parse_args({"s3e", "build-groups", "--vectors", "v.txt", "--freq", "f.txt", "-k", "30", "--seed", "7",
                            "--out", "m.s3e"});
  EXPECT_EQ(c.subcommand, "build-groups");
  EXPECT_EQ(c.epsilon, 1e-3);
  EXPECT_EQ(*c.k, 30u);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.seed_source, "flag");
  EXPECT_EQ(c.vectors, (std::vector<std::string>{"v.txt"}));
}

TEST_F(CliTest, RepeatedVectorsKeepOrder) {
  auto c = cli::parse_args({"s3e", "build-groups", "--vectors", "a.txt", "--vectors", "b.txt", "--freq", "f", "-k",
                            "3", "--out", "m"});
  EXPECT_EQ(c.vectors, (std::vector<std::string>{"a.txt", "b.txt"}));
}

TEST_F(CliTest, UsageErrors) {
  auto missing = run_cli({"build-groups", "--vectors", "v.txt", "-k", "3", "--out", "m"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--freq"), std::string::npos) << missing.err;

  auto zero = run_cli({"build-groups", "--vectors", "v", "--freq", "f", "-k", "0", "--out", "m"});
  EXPECT_EQ(zero.code, 2);
  EXPECT_NE(zero.err.find("-k"), std::string::npos) << zero.err;

  auto unknown = run_cli({"build-groups", "--vectors", "v", "--freq", "f", "-k", "2", "--out", "m", "--bogus"});
  EXPECT_EQ(unknown.code, 2);

  auto conflict = run_cli({"eval-sts", "--data", "d", "--vectors", "v", "--freq", "f", "--model", "m", "--baseline",
                           "avg"});
  EXPECT_EQ(conflict.code, 2);
  EXPECT_NE(conflict.err.find("excludes"), std::string::npos) << conflict.err;

  auto neither = run_cli({"eval-sts", "--data", "d", "--vectors", "v", "--freq", "f"});
  EXPECT_EQ(neither.code, 2);

  auto bad_pre = run_cli({"build-groups", "--vectors", "v", "--freq", "f", "-k", "2", "--out", "m", "--preprocess",
                          "pvn"});
  EXPECT_EQ(bad_pre.code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
}

TEST_F(CliTest, HelpPerSubcommand) {
  auto h = run_cli({"embed", "--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("--model"), std::string::npos);
}

TEST_F(CliTest, SeedFromEnvironment) {
  setenv("S3E_SEED", "123", 1);
  auto c = cli::parse_args({"s3e", "build-groups", "--vectors", "v", "--freq", "f", "-k", "2", "--out", "m"});
  EXPECT_EQ(c.seed, 123u);
  EXPECT_EQ(c.seed_source, "env");
  auto flagged = cli::parse_args({"s3e", "build-groups", "--vectors", "v", "--freq", "f", "-k", "2", "--out", "m",
                                  "--seed", "5"});
  EXPECT_EQ(flagged.seed, 5u);
  setenv("S3E_SEED", "abc", 1);
  EXPECT_THROW(cli::parse_args({"s3e", "build-groups", "--vectors", "v", "--freq", "f", "-k", "2", "--out", "m"}),
               cli::UsageError);
  unsetenv("S3E_SEED");
}

TEST_F(CliTest, FullPipelineOnToyFixture) {
  const auto v = toy_path("vectors.txt"), f = toy_path("freq.txt");
  auto build = run_cli({"build-groups", "--vectors", v, "--freq", f, "-k", "5", "--seed", "3", "--out",
                        path("m.s3e"), "--diagnostics", path("diag.json")});
  ASSERT_EQ(build.code, 0) << build.err;
  EXPECT_NE(build.err.find("clustered"), std::string::npos);
  auto diag = nlohmann::json::parse(slurp(path("diag.json")));
  EXPECT_EQ(diag["config"]["k"], 5);

  auto emb = run_cli({"embed", "--vectors", v, "--freq", f, "--model", path("m.s3e"), "--input",
                      toy_path("sentences.txt"), "--output", path("emb.txt")});
  ASSERT_EQ(emb.code, 0) << emb.err;
  std::istringstream lines(slurp(path("emb.txt")));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    std::istringstream fields(line);
    std::size_t count = 0;
    double x;
    while (fields >> x) ++count;
    EXPECT_EQ(count, 15u + 8u);
  }
  EXPECT_EQ(n, 40u);

  auto eval = run_cli({"eval-sts", "--data", toy_path("sts.tsv"), "--vectors", v, "--freq", f, "--model",
                       path("m.s3e"), "--report", path("report.json")});
  ASSERT_EQ(eval.code, 0) << eval.err;
  auto report = nlohmann::json::parse(slurp(path("report.json")));
  EXPECT_EQ(report["schema_version"], 1);
  ASSERT_EQ(report["reports"].size(), 1u);
  EXPECT_EQ(report["reports"][0]["n_pairs"], 20);
  EXPECT_EQ(report["reports"][0]["k"], 5);
  EXPECT_EQ(report["reports"][0]["config"]["model"], path("m.s3e"));
  const double r = report["reports"][0]["pearson"];
  EXPECT_GE(r, -1.0);
  EXPECT_LE(r, 1.0);

  auto bench = run_cli({"bench", "--data", toy_path("sentences.txt"), "--vectors", v, "--freq", f, "--model",
                        path("m.s3e"), "--trials", "2"});
  ASSERT_EQ(bench.code, 0) << bench.err;
  auto bj = nlohmann::json::parse(bench.out);
  EXPECT_EQ(bj["n_trials"], 2);
  EXPECT_EQ(bj["n_sentences"], 40);
}

TEST_F(CliTest, EmbedFromStdinAsJsonLines) {
  const auto v = toy_path("vectors.txt"), f = toy_path("freq.txt");
  ASSERT_EQ(run_cli({"build-groups", "--vectors", v, "--freq", f, "-k", "4", "--out", path("m.s3e")}).code, 0);
  auto r = run_cli({"embed", "--vectors", v, "--freq", f, "--model", path("m.s3e"), "--format", "jsonl", "--mode",
                    "cov_only"},
                   "The cat eats fish.\nqwerty\n");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["text"], "The cat eats fish.");
  EXPECT_EQ(j["dim"], 10);
  EXPECT_EQ(j["norm_flag"], true);
  std::getline(lines, line);
  auto k = nlohmann::json::parse(line);
  EXPECT_EQ(k["norm_flag"], false);
}

TEST_F(CliTest, BaselinesAndSweep) {
  const auto v = toy_path("vectors.txt"), f = toy_path("freq.txt"), d = toy_path("sts.tsv");
  for (const char* b : {"avg", "sif", "sif_pc"}) {
    auto r = run_cli({"eval-sts", "--data", d, "--vectors", v, "--freq", f, "--baseline", b});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["reports"][0]["config"]["baseline"], b);
  }
  auto sweep = run_cli({"eval-sts", "--data", d, "--vectors", v, "--freq", f, "--k-sweep", "2:6:2", "--seed", "1"});
  ASSERT_EQ(sweep.code, 0) << sweep.err;
  auto j = nlohmann::json::parse(sweep.out);
  ASSERT_EQ(j["reports"].size(), 3u);
  EXPECT_EQ(j["reports"][0]["k"], 2);
  EXPECT_EQ(j["reports"][2]["k"], 6);
}

TEST_F(CliTest, MissingFilesFailWithPath) {
  auto r = run_cli({"eval-sts", "--data", "/nonexistent/sts.tsv", "--vectors", toy_path("vectors.txt"), "--freq",
                    toy_path("freq.txt"), "--baseline", "avg"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("/nonexistent/sts.tsv"), std::string::npos) << r.err;
}

TEST_F(CliTest, PreprocessConflictWithModel) {
  const auto v = toy_path("vectors.txt"), f = toy_path("freq.txt");
  ASSERT_EQ(run_cli({"build-groups", "--vectors", v, "--freq", f, "-k", "4", "--out", path("m.s3e"), "--preprocess",
                     "l2"})
                .code,
            0);
  auto bad = run_cli({"embed", "--vectors", v, "--freq", f, "--model", path("m.s3e"), "--preprocess", "none"}, "cat\n");
  EXPECT_EQ(bad.code, 1);
  auto ok = run_cli({"embed", "--vectors", v, "--freq", f, "--model", path("m.s3e")}, "cat\n");
  EXPECT_EQ(ok.code, 0) << ok.err;
}

TEST_F(CliTest, IdenticalRunsAreByteIdentical) {
  const auto v = toy_path("vectors.txt"), f = toy_path("freq.txt");
  for (const char* tag : {"1", "2"}) {
    ASSERT_EQ(run_cli({"build-groups", "--vectors", v, "--freq", f, "-k", "6", "--seed", "11", "--out",
                       path(std::string("m") + tag)})
                  .code,
              0);
    ASSERT_EQ(run_cli({"embed", "--vectors", v, "--freq", f, "--model", path(std::string("m") + tag), "--input",
                       toy_path("sentences.txt"), "--output", path(std::string("e") + tag)})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(path("m1")), slurp(path("m2")));
  EXPECT_EQ(slurp(path("e1")), slurp(path("e2")));
}
