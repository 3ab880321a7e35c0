// Copyright 2026 The cardrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const fs::path kData = CARDRACK_DATA_DIR;

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CARDRACK_CLI + "\" " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string scenario(const std::string& name) {
  return "\"" + (kData / "scenarios" / name).string() + "\"";
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cardrack-cli-" + std::to_string(getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& name) const { return "\"" + (dir_ / name).string() + "\""; }

  fs::path dir_;
};

TEST_F(CliTest, PlanJson) {
  const CliRun r = cli("--json plan --scenario " + scenario("plan-granite-3.3-8b.yaml"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["totals"]["cards"], 84);
  EXPECT_EQ(j["stages"].size(), 81u);
  EXPECT_EQ(j["nodes"].size(), 6u);
}

TEST_F(CliTest, PlanSummaryAndFile) {
  const CliRun r = cli("plan --scenario " + scenario("plan-granite-3.3-8b.yaml") + " --out " +
                    at("deployment.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("cards=84"), std::string::npos);
  EXPECT_NE(r.out.find("max_users@2k=28"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "deployment.json"));
}

TEST_F(CliTest, SimulateTwiceGivesIdenticalArtifacts) {
  const std::string s = scenario("simulate-granite-8b-desk.yaml");
  ASSERT_EQ(cli("simulate --scenario " + s + " --out " + at("a")).code, 0);
  ASSERT_EQ(cli("simulate --scenario " + s + " --out " + at("b")).code, 0);
  for (const char* f : {"trace.jsonl", "report.json", "report.csv", "tokens.csv",
                        "protocol.jsonl"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }

  const CliRun rep = cli("--json report --trace " + at("a/trace.jsonl"));
  ASSERT_EQ(rep.code, 0) << rep.out;
  const auto j = nlohmann::json::parse(rep.out);
  const auto direct = nlohmann::json::parse(slurp(dir_ / "a" / "report.json"));
  EXPECT_EQ(j["sequences"], direct["sequences"]);
  EXPECT_EQ(j["ttft"], direct["ttft"]);
}

TEST_F(CliTest, SeedOverrideChangesNothingForDenseModels) {
  const std::string s = scenario("simulate-granite-8b-desk.yaml");
  ASSERT_EQ(cli("simulate --scenario " + s + " --out " + at("a")).code, 0);
  ASSERT_EQ(cli("simulate --scenario " + s + " --seed 99 --out " + at("b")).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "tokens.csv"), slurp(dir_ / "b" / "tokens.csv"));
}

TEST_F(CliTest, Check) {
  const CliRun ok = cli("check --cards 3 --slots 2 --tensors 5");
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("verified: 10683 states, no overflow, no deadlock"), std::string::npos)
      << ok.out;
  const CliRun bad = cli("check --cards 3 --slots 2 --tensors 5 --credit-limit 3");
  EXPECT_EQ(bad.code, 5);
  EXPECT_NE(bad.out.find("overflow"), std::string::npos) << bad.out;
}

TEST_F(CliTest, Power) {
  const CliRun r = cli("--json power --scenario " + scenario("power-granite-8b.yaml"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["rack_watts"], 39600.0);
  EXPECT_EQ(j["extrapolation"]["headroom"], "marginal");
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("plan --scenario " + at("missing.yaml")).code, 2);
  EXPECT_EQ(cli("plan").code, 2);
  EXPECT_EQ(cli("nonsense").code, 2);
  std::ofstream(dir_ / "bad.yaml") << "model: [unclosed\n";
  EXPECT_EQ(cli("plan --scenario " + at("bad.yaml")).code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

}  // namespace
