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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cardrack/core.hpp"
#include "cardrack/engine.hpp"
#include "cardrack/planner.hpp"
#include "cardrack/power.hpp"
#include "cardrack/service/ring.hpp"

namespace cardrack {

// Either explicit stage times or latency targets to calibrate against.
struct TimingSpec {
  std::optional<double> target_itl;
  std::optional<double> target_ttft;
  std::optional<double> decode_stage_seconds;
  std::optional<double> prefill_stage_seconds_per_token;
};

struct ServeSpec {
  int port = 8080;
  int priority_levels = 3;
  double real_time_scale = 0;
  std::uint64_t num_requests = 0;  // > 0: drive this many requests, then exit
  std::uint64_t max_new_tokens = 16;
  double ring_hop_seconds = 1e-3;
  double ring_timeout_seconds = 30;
  // Per-node configure time in virtual seconds; missing nodes use the last.
  std::vector<double> configure_seconds{1.0};
};

struct PowerSpec {
  power::PowerModel model;
  int rack_nodes = 18;
  std::optional<double> measured_watts;
  int instances = 0;
  power::ReserveRange reserve;
};

struct Scenario {
  std::string name;
  std::filesystem::path origin;
  ModelSpec model;
  MappingDirectives directives;
  PrecisionConfig precision;
  HardwareSpec hardware;
  engine::Workload workload;
  std::vector<int> priorities{0, 1, 2};
  TimingSpec timing;
  std::uint64_t seed = 0;
  engine::TraceLevel trace_level = engine::TraceLevel::kFull;
  bool protocol_log = false;
  int moe_circuits = 0;
  std::filesystem::path output_dir;
  ServeSpec serve;
  PowerSpec power;
};

// Reads a scenario. model/directives keys name files relative to the
// scenario; an inline `model:` map is accepted too. workload.users defaults
// to the plan's max_users(context_len). Throws ConfigError with the key path.
Scenario load_scenario(const std::filesystem::path& path);

Deployment deploy(const Scenario& s);

// Calibrates against targets where given, otherwise uses explicit times.
engine::TimingModel resolve_timing(const Scenario& s, const Deployment& d);

std::vector<service::RingNode> ring_nodes(const Scenario& s, const Deployment& d);

nlohmann::json echo(const Scenario& s);

}  // namespace cardrack
