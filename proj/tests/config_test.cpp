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


#include <atomic>
#include <fstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "cardrack/config.hpp"
#include "cardrack/error.hpp"
#include "cardrack/scenario.hpp"

namespace cardrack {
namespace {

const std::filesystem::path kData = CARDRACK_DATA_DIR;

class ScenarioFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static std::atomic<int> counter{0};
    dir_ = std::filesystem::temp_directory_path() /
           ("cardrack-config-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path write(const std::string& text) {
    const auto path = dir_ / "scenario.yaml";
    std::ofstream(path) << text;
    return path;
  }

  std::string granite_refs() const {
    return "model: " + (kData / "models/granite-3.3-8b.yaml").string() + "\n" +
           "directives: " + (kData / "directives/granite-3.3-8b.yaml").string() + "\n";
  }

  std::filesystem::path dir_;
};

TEST(DocumentTest, KeyPaths) {
  const auto doc = config::Document::parse(
      "model:\n  num_layers: 40\n  total_params: 8.17e9\nhardware:\n  cards_per_node: 16\n");
  EXPECT_TRUE(doc.has("model.num_layers"));
  EXPECT_FALSE(doc.has("model.vocab_size"));
  EXPECT_EQ(doc.get<int>("model.num_layers"), 40);
  EXPECT_EQ(doc.get_count("model.total_params"), 8'170'000'000ull);
  EXPECT_EQ(doc.get_or<int>("hardware.nodes_per_rack", 18), 18);
}

TEST(DocumentTest, ErrorsNameTheKey) {
  const auto doc = config::Document::parse("model:\n  num_layers: forty\n", "m.yaml");
  try {
    doc.get<int>("model.num_layers");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.num_layers"), std::string::npos);
  }
  try {
    doc.get<int>("model.hidden_dim");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.hidden_dim"), std::string::npos);
  }
  EXPECT_THROW(config::Document::parse("a: [1, 2\n"), ConfigError);
  EXPECT_THROW(config::Document::load_file("/nonexistent/x.yaml"), ConfigError);
}

TEST(DocumentTest, CountsRejectFractions) {
  const auto doc = config::Document::parse("a: 1.5\nb: -3\n");
  EXPECT_THROW(doc.get_count("a"), ConfigError);
  EXPECT_THROW(doc.get_count("b"), ConfigError);
}

TEST(LoadersTest, BundledDescriptors) {
  const auto m = config::load_model_file(kData / "models/gpt-oss-120b.yaml");
  EXPECT_TRUE(m.is_moe());
  EXPECT_EQ(m.num_layers, 36u);
  const auto d = config::load_directives_file(kData / "directives/gpt-oss-120b.yaml");
  EXPECT_EQ(d.cards.at(BlockKind::kExpertGroup), 11);
  EXPECT_EQ(d.cards.at(BlockKind::kOutput), 8);
}

TEST(LoadersTest, HardwareOverridesApplyOnTopOfDefaults) {
  const auto doc = config::Document::parse("hardware:\n  cards_per_node: 8\n  core_memory_mib: 96\n");
  const auto hw = config::load_hardware(doc, "hardware");
  EXPECT_EQ(hw.cards_per_node, 8);
  EXPECT_EQ(hw.core_memory_bytes, 96 * kMiB);
  EXPECT_EQ(hw.nodes_per_rack, 18);
}

TEST(LoadersTest, PrecisionLabelOrFields) {
  auto doc = config::Document::parse("precision: A4-C4-W4\n");
  EXPECT_EQ(config::load_precision(doc, "precision").label(), "A4-C4-W4");
  doc = config::Document::parse("precision:\n  weight_bits: 2\n");
  EXPECT_EQ(config::load_precision(doc, "precision").label(), "A8-C8-W2");
}

TEST_F(ScenarioFileTest, DefaultsFillTheWorkload) {
  const auto s = load_scenario(write(granite_refs() + "name: t\n"));
  EXPECT_EQ(s.workload.context_len, 2048u);
  EXPECT_EQ(s.workload.prefill_len, 1024u);
  EXPECT_EQ(s.workload.decode_len, 1024u);
  EXPECT_EQ(s.workload.users, 28u);
  EXPECT_EQ(s.output_dir, std::filesystem::path("out/t"));
  EXPECT_EQ(s.trace_level, engine::TraceLevel::kFull);
}

TEST_F(ScenarioFileTest, RelativeReferencesResolveAgainstTheFile) {
  std::filesystem::create_directories(dir_ / "m");
  std::filesystem::copy_file(kData / "models/granite-3.3-8b.yaml", dir_ / "m/g.yaml");
  std::filesystem::copy_file(kData / "directives/granite-3.3-8b.yaml", dir_ / "m/d.yaml");
  const auto s = load_scenario(write("model: m/g.yaml\ndirectives: m/d.yaml\n"));
  EXPECT_EQ(s.model.name, "granite-3.3-8b-instruct");
}

TEST_F(ScenarioFileTest, InlineModel) {
  const auto s = load_scenario(write(
      "model:\n  name: toy\n  num_layers: 2\n  hidden_dim: 64\n  num_heads: 4\n"
      "  num_kv_heads: 2\n  head_dim: 16\n  mlp_dim: 128\n  vocab_size: 100\n"
      "  total_params: 1e5\n"
      "directives:\n  cards:\n    attention: 1\n    mlp: 1\n    output: 1\n"
      "  kv_budget_bytes: 1e6\n"
      "workload:\n  context_len: 64\n  users: 2\n"));
  EXPECT_EQ(deploy(s).plan.total_cards, 5);
}

TEST_F(ScenarioFileTest, Rejections) {
  EXPECT_THROW(load_scenario(write("directives: x.yaml\n")), ConfigError);
  EXPECT_THROW(load_scenario(write(granite_refs() + "trace_level: verbose\n")), ConfigError);
  EXPECT_THROW(load_scenario(write(granite_refs() +
                                   "workload:\n  context_len: 100\n  prefill_len: 60\n"
                                   "  decode_len: 60\n")),
               ConfigError);
  EXPECT_THROW(load_scenario(write(granite_refs() + "workload:\n  priorities: [0, 5]\n")),
               ConfigError);
  EXPECT_THROW(load_scenario(write("model: missing.yaml\ndirectives: missing.yaml\n")),
               ConfigError);
}

TEST_F(ScenarioFileTest, TimingResolution) {
  auto s = load_scenario(write(granite_refs() + "timing:\n  target_itl: 2.8e-3\n"));
  const auto d = deploy(s);
  const auto t = resolve_timing(s, d);
  EXPECT_NEAR(t.decode_stage_seconds * d.plan.stage_count +
                  engine::forward_hop_total(d, t) + engine::feedback_hop(d, t),
              2.8e-3, 1e-12);

  s = load_scenario(write(granite_refs() + "timing:\n  decode_stage_seconds: 1e-5\n"));
  EXPECT_DOUBLE_EQ(resolve_timing(s, d).decode_stage_seconds, 1e-5);

  s = load_scenario(write(granite_refs()));
  EXPECT_THROW(resolve_timing(s, d), ConfigError);

  s = load_scenario(write(granite_refs() + "timing:\n  target_itl: 1e-6\n"));
  EXPECT_THROW(resolve_timing(s, d), CalibrationError);
}

TEST_F(ScenarioFileTest, RingNodesFollowConfigureList) {
  const auto s = load_scenario(
      write(granite_refs() + "serve:\n  ring:\n    configure_seconds: [1, 2]\n"));
  const auto nodes = ring_nodes(s, deploy(s));
  ASSERT_EQ(nodes.size(), 6u);
  EXPECT_EQ(nodes[0].name, "node 0");
  EXPECT_EQ(nodes[1].configure_seconds, 2.0);
  EXPECT_EQ(nodes[5].configure_seconds, 2.0);
}

TEST(BundledScenariosTest, AllLoad) {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kData / "scenarios")) {
    const auto name = entry.path().filename().string();
    if (name.rfind("plan-", 0) && name.rfind("simulate-", 0) && name.rfind("serve-", 0) &&
        name.rfind("power-", 0)) {
      continue;
    }
    EXPECT_NO_THROW(load_scenario(entry.path())) << name;
    ++count;
  }
  EXPECT_GE(count, 10);
}

}  // namespace
}  // namespace cardrack
