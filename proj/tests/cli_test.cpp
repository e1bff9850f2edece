#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "datascope/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

struct CliFixture : ::testing::Test {
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("datascope_cli_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  CommandResult run(const std::string& args) const {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(DATASCOPE_CLI_PATH) + " " + args + " >" +
                            out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CommandResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = datascope::read_file(out.string());
    r.err = datascope::read_file(err.string());
    return r;
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_F(CliFixture, GenerateIsDeterministicAndWritesSidecar) {
  const std::string a = path("a.jsonl"), b = path("b.jsonl");
  ASSERT_EQ(run("generate --env chain5 --scheme random --n 400 --seed 3 --out " + a)
                .exit_code,
            0);
  ASSERT_EQ(run("generate --env chain5 --scheme random --n 400 --seed 3 --out " + b)
                .exit_code,
            0);
  EXPECT_TRUE(fs::exists(path("a.manifest.json")));
  EXPECT_EQ(datascope::read_file(a), datascope::read_file(b));

  const std::string c = path("c.jsonl");
  ASSERT_EQ(run("generate --env chain5 --scheme random --n 400 --seed 4 --out " + c)
                .exit_code,
            0);
  EXPECT_NE(datascope::read_file(a), datascope::read_file(c));
}

TEST_F(CliFixture, CharacterizeAgainstSelfGivesSacoOne) {
  const std::string a = path("a.jsonl");
  ASSERT_EQ(run("generate --env grid5 --scheme random --n 1500 --seed 5 --out " + a)
                .exit_code,
            0);
  const CommandResult r = run("characterize --data " + a + " --ref " + a +
                              " --min-return -60 --expert-return -8");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("saco"), 1.0);
  EXPECT_EQ(j.at("n_transitions"), 1500);

  const CommandResult csv = run("--format csv characterize --data " + a + " --ref " + a +
                                " --min-return -60 --expert-return -8");
  ASSERT_EQ(csv.exit_code, 0);
  EXPECT_NE(csv.out.find("tq,saco,lsaco"), std::string::npos);
}

TEST_F(CliFixture, CharacterizeCountersAgree) {
  const std::string a = path("a.jsonl");
  ASSERT_EQ(run("generate --env grid7 --scheme random --n 20000 --seed 5 --out " + a)
                .exit_code,
            0);
  const std::string base = "characterize --data " + a + " --ref " + a +
                           " --min-return -100 --expert-return -5 ";
  const CommandResult exact = run(base + "--counter exact");
  const CommandResult hll = run(base + "--counter hll:14");
  ASSERT_EQ(exact.exit_code, 0);
  ASSERT_EQ(hll.exit_code, 0);
  const double u_exact = nlohmann::json::parse(exact.out).at("unique_sa").get<double>();
  const double u_hll = nlohmann::json::parse(hll.out).at("unique_sa").get<double>();
  EXPECT_LE(std::abs(u_hll - u_exact) / u_exact, 0.02);
}

TEST_F(CliFixture, MalformedInputExitsTwoWithLineNumber) {
  const std::string bad = path("bad.jsonl");
  {
    std::ofstream f(bad);
    f << R"({"ep":0,"t":0,"s":0,"a":0,"r":1,"sn":1,"d":false})" << "\n";
    f << "this is not json\n";
  }
  const CommandResult r = run("characterize --data " + bad + " --ref " + bad +
                              " --min-return 0 --expert-return 1");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);
}

TEST_F(CliFixture, TrainProducesResultJson) {
  const std::string a = path("a.jsonl");
  ASSERT_EQ(run("generate --env chain5 --scheme random --n 2000 --seed 7 --out " + a)
                .exit_code,
            0);
  const std::string out = path("result.json");
  const CommandResult r = run("train --data " + a +
                              " --algo bcq --tau 0.3 --iters 20 --min-return 0"
                              " --expert-return 1 --out " + out);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = nlohmann::json::parse(datascope::read_file(out));
  EXPECT_EQ(j.at("algo"), "bcq");
  EXPECT_TRUE(j.at("omega").is_number());
  EXPECT_GE(j.at("eval_history").size(), 1u);
}

TEST_F(CliFixture, ShiftReportsPolicyShift) {
  const std::string a = path("a.jsonl"), b = path("b.jsonl");
  ASSERT_EQ(run("generate --env grid5 --scheme random --n 4000 --seed 1 --out " + a)
                .exit_code,
            0);
  ASSERT_EQ(run("generate --env grid5 --scheme expert --n 4000 --seed 1 --out " + b)
                .exit_code,
            0);
  const CommandResult r = run("shift --a " + a + " --b " + b + " --threshold 0.05");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.at("flags").at("policy").get<bool>());
}

TEST_F(CliFixture, VerifyTheoryPasses) {
  const CommandResult r = run("verify-theory --samples 25");
  EXPECT_EQ(r.exit_code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("all theory checks passed"), std::string::npos);
}

TEST_F(CliFixture, SweepAndCorrelateRoundTrip) {
  const std::string out_dir = path("sweep");
  const CommandResult r =
      run("sweep --envs chain5 --schemes random,expert --algos bc --dataset-seeds 1"
          " --run-seeds 1 --n 800 --jobs 2 --out-dir " + out_dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  ASSERT_TRUE(fs::exists(out_dir + "/runs.csv"));

  const CommandResult c = run("correlate --input " + out_dir + "/runs.csv");
  ASSERT_EQ(c.exit_code, 0) << c.err;
  const auto j = nlohmann::json::parse(c.out);
  EXPECT_EQ(j.at("correlations").size(), 4u);  // 4 measures x 1 algorithm
}

TEST_F(CliFixture, UnknownEnvironmentFailsCleanly) {
  const CommandResult r =
      run("generate --env not-real --scheme random --n 10 --out " + path("x.jsonl"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("unknown environment"), std::string::npos);
}
