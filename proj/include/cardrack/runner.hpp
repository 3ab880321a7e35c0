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
#include <functional>
#include <ostream>
#include <string>

#include "cardrack/engine.hpp"
#include "cardrack/metrics.hpp"
#include "cardrack/planner.hpp"
#include "cardrack/scenario.hpp"
#include "cardrack/service/ring.hpp"

namespace cardrack {

struct SimulationResult {
  Deployment deployment;
  MicroBatchPolicy policy;
  engine::TimingModel timing;
  engine::Trace trace;
  metrics::Report report;
};

// Plans, calibrates and simulates the scenario's workload.
SimulationResult run_simulation(const Scenario& s);

// File contents for one simulation. protocol_jsonl is empty unless the
// scenario asked for a protocol log.
struct Artifacts {
  std::string trace_jsonl;
  std::string report_json;
  std::string report_csv;
  std::string tokens_csv;
  std::string protocol_jsonl;
};

Artifacts render(const SimulationResult& r);
// Writes trace.jsonl, report.json, report.csv, tokens.csv and, if present,
// protocol.jsonl under dir.
void write_artifacts(const Artifacts& a, const std::filesystem::path& dir);

nlohmann::json power_report(const Scenario& s);
void print_power_table(std::ostream& out, const nlohmann::json& report);

struct ServeRunOptions {
  int port = -1;                 // -1 keeps the scenario's port
  double real_time_scale = -1;   // -1 keeps the scenario's scale
  std::uint64_t requests = 0;    // 0 keeps serve.num_requests
  int priority_levels = 0;       // 0 keeps serve.priority_levels
  // Polled while serving with no request budget; true shuts down.
  std::function<bool()> should_stop;
  std::ostream* log = nullptr;
};

struct ServeOutcome {
  service::RingResult ring;
  int port = 0;
  std::uint64_t requests = 0;
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;        // non-200, missing [DONE] or bad chunk sequence
  std::uint64_t inversions = 0;
  std::uint64_t dequeues = 0;
  std::uint64_t incoherent = 0;    // stream, service and engine timestamps disagree
  std::size_t peak_busy = 0;
  std::size_t pool_size = 0;
  std::optional<metrics::Report> report;
  double wall_seconds = 0;

  bool ok() const {
    return completed == requests && failed == 0 && inversions == 0 && incoherent == 0;
  }
};

// Brings the ring up, starts an instance and the HTTP endpoint, then either
// drives `requests` streaming clients across the scenario's priorities or
// serves until should_stop() returns true.
ServeOutcome run_serve(const Scenario& s, const ServeRunOptions& options = {});

nlohmann::json to_json(const ServeOutcome& o);

}  // namespace cardrack
