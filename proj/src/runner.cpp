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


#include "cardrack/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "cardrack/error.hpp"
#include "cardrack/power.hpp"
#include "cardrack/service/broker.hpp"
#include "cardrack/service/endpoint.hpp"
#include "cardrack/service/instance.hpp"

namespace cardrack {

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

nlohmann::json run_config(const Scenario& s, const SimulationResult& r) {
  auto cfg = echo(s);
  cfg["plan_hash"] = r.trace.meta.plan_hash;
  cfg["stages"] = r.deployment.plan.stage_count;
  cfg["micro_batch_size"] = r.policy.micro_batch_size;
  cfg["num_micro_batches"] = r.policy.num_micro_batches;
  cfg["timing"] = engine::to_json(r.timing);
  return cfg;
}

// Chunks must be numbered 0..n-1 for one task, with only the last terminal.
bool stream_intact(const service::StreamResult& r, std::uint64_t max_tokens) {
  if (r.status != 200 || !r.done_marker || r.chunks.empty()) return false;
  if (r.chunks.size() > max_tokens) return false;
  for (std::size_t i = 0; i < r.chunks.size(); ++i) {
    const auto& c = r.chunks[i];
    if (c.index != i || c.task_id != r.chunks.front().task_id || !c.error.empty()) return false;
    const bool last = i + 1 == r.chunks.size();
    if (last != (c.finish != service::FinishReason::kNone)) return false;
  }
  return r.chunks.back().finish == service::FinishReason::kStop ||
         r.chunks.size() == max_tokens;
}

bool same_record(const metrics::SequenceRecord& a, const metrics::SequenceRecord& b) {
  return a.id == b.id && a.n_in == b.n_in && a.n_out == b.n_out && a.t_start == b.t_start &&
         a.t_first == b.t_first && a.t_end == b.t_end && a.token_times == b.token_times;
}

}  // namespace

SimulationResult run_simulation(const Scenario& s) {
  SimulationResult r;
  r.deployment = deploy(s);
  r.timing = resolve_timing(s, r.deployment);
  r.policy = microbatch_policy(r.deployment.plan.stage_count,
                               static_cast<int>(s.workload.users));
  engine::EngineOptions options;
  options.level = s.trace_level;
  options.seed = s.seed;
  options.moe_circuits = s.moe_circuits;
  options.protocol_log = s.protocol_log;
  r.trace = engine::simulate(r.deployment, s.hardware, r.policy, r.timing, s.workload, options);
  r.report = metrics::aggregate(r.trace.sequences, run_config(s, r), r.trace.idle_fraction);
  return r;
}

Artifacts render(const SimulationResult& r) {
  Artifacts a;
  std::ostringstream trace, csv, tokens, protocol;
  engine::write_trace(trace, r.trace);
  a.trace_jsonl = trace.str();
  a.report_json = metrics::to_json(r.report).dump(2) + "\n";
  metrics::write_csv(csv, r.report);
  a.report_csv = csv.str();
  metrics::write_token_csv(tokens, r.trace.sequences);
  a.tokens_csv = tokens.str();
  if (!r.trace.protocol.empty()) {
    fabric::write_protocol_log(protocol, r.trace.protocol);
    a.protocol_jsonl = protocol.str();
  }
  return a;
}

void write_artifacts(const Artifacts& a, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "trace.jsonl", a.trace_jsonl);
  write_file(dir / "report.json", a.report_json);
  write_file(dir / "report.csv", a.report_csv);
  write_file(dir / "tokens.csv", a.tokens_csv);
  if (!a.protocol_jsonl.empty()) write_file(dir / "protocol.jsonl", a.protocol_jsonl);
}

nlohmann::json power_report(const Scenario& s) {
  const auto& pm = s.power.model;
  const Deployment d = deploy(s);
  const double server_exact = power::server_envelope(pm, power::Rounding::kExact);
  const double server_rounded = power::server_envelope(pm, power::Rounding::kTenthKw);
  const double rack_rounded = power::rack_envelope(pm, s.power.rack_nodes);
  const double allocated = power::rack_envelope(pm, d.node_count);
  nlohmann::json j = {
      {"server_watts", server_exact},
      {"server_watts_rounded", server_rounded},
      {"rack_nodes", s.power.rack_nodes},
      {"rack_watts", rack_rounded},
      {"rack_watts_exact", power::rack_envelope(pm, s.power.rack_nodes, power::Rounding::kExact)},
      {"instance_nodes", d.node_count},
      {"instance_allocated_watts", allocated},
  };
  if (s.power.measured_watts) {
    j["measured_watts"] = *s.power.measured_watts;
    j["utilization"] = power::utilization(*s.power.measured_watts, allocated);
    if (s.power.instances > 0) {
      j["extrapolation"] = power::to_json(power::extrapolate_instances(
          *s.power.measured_watts, s.power.instances, s.power.reserve, rack_rounded));
      j["extrapolation"]["instances"] = s.power.instances;
    }
  }
  return j;
}

void print_power_table(std::ostream& out, const nlohmann::json& j) {
  const auto kw = [](double w) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << power::round_sig3(w) / 1000.0 << " kW";
    return s.str();
  };
  out << std::left;
  out << std::setw(30) << "server envelope" << j["server_watts"].get<double>() << " W ("
      << kw(j["server_watts_rounded"].get<double>()) << ")\n";
  out << std::setw(30) << ("rack envelope, " + std::to_string(j["rack_nodes"].get<int>()) + " nodes")
      << kw(j["rack_watts"].get<double>()) << " (exact " << kw(j["rack_watts_exact"].get<double>())
      << ")\n";
  out << std::setw(30) << ("instance, " + std::to_string(j["instance_nodes"].get<int>()) + " nodes")
      << kw(j["instance_allocated_watts"].get<double>()) << "\n";
  if (j.contains("utilization")) {
    std::ostringstream pct;
    pct << std::fixed << std::setprecision(1) << 100.0 * j["utilization"].get<double>() << "%";
    out << std::setw(30) << "measured" << kw(j["measured_watts"].get<double>()) << " ("
        << pct.str() << " of allocation)\n";
  }
  if (j.contains("extrapolation")) {
    const auto& e = j["extrapolation"];
    out << std::setw(30) << (std::to_string(e["instances"].get<int>()) + " instances")
        << kw(e["total_watts"].get<double>()) << ", " << e["headroom"].get<std::string>()
        << " with " << kw(e["reserve_low_watts"].get<double>()) << " to "
        << kw(e["reserve_high_watts"].get<double>()) << " reserve\n";
  }
}

ServeOutcome run_serve(const Scenario& s, const ServeRunOptions& options) {
  using Clock = std::chrono::steady_clock;
  const auto wall_start = Clock::now();
  std::ostream* log = options.log;

  ServeOutcome out;
  const Deployment d = deploy(s);
  service::RingOptions ring_options;
  ring_options.hop_seconds = s.serve.ring_hop_seconds;
  ring_options.timeout_seconds = s.serve.ring_timeout_seconds;
  out.ring = service::ring_ready(ring_nodes(s, d), ring_options);
  if (log) {
    *log << "ring ready after " << out.ring.passes << " passes at t=" << out.ring.ready_time
         << " s\n";
  }

  const int levels = options.priority_levels > 0 ? options.priority_levels : s.serve.priority_levels;
  for (int p : s.priorities) {
    if (p >= levels) throw ConfigError("priority " + std::to_string(p) + " >= priority levels");
  }
  service::Broker broker(levels);
  service::InstanceConfig ic;
  ic.model = s.model.name;
  ic.deployment = d;
  ic.hw = s.hardware;
  ic.timing = resolve_timing(s, d);
  ic.context_len = s.workload.context_len;
  ic.real_time_scale =
      options.real_time_scale >= 0 ? options.real_time_scale : s.serve.real_time_scale;
  ic.engine_options.seed = s.seed;
  ic.engine_options.moe_circuits = s.moe_circuits;
  service::Instance instance(broker, ic);
  instance.start();
  out.pool_size = instance.pool_size();

  service::EndpointConfig ec;
  ec.port = options.port >= 0 ? options.port : s.serve.port;
  ec.default_model = s.model.name;
  service::Endpoint endpoint(broker, ec);
  try {
    out.port = endpoint.start();
  } catch (...) {
    instance.stop();
    throw;
  }
  if (log) *log << "serving " << s.model.name << " on http://127.0.0.1:" << out.port << "\n";

  const std::uint64_t requests = options.requests > 0 ? options.requests : s.serve.num_requests;
  out.requests = requests;
  std::vector<service::StreamResult> results(requests);
  if (requests == 0) {
    while (!(options.should_stop && options.should_stop())) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  } else {
    const std::size_t clients = std::min<std::uint64_t>(requests, 96);
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < clients; ++c) {
      threads.emplace_back([&] {
        for (std::uint64_t i = next++; i < requests; i = next++) {
          const int priority = s.priorities[i % s.priorities.size()];
          try {
            results[i] = service::post_chat(
                "127.0.0.1", out.port,
                service::chat_request(s.model.name, "request " + std::to_string(i),
                                      s.serve.max_new_tokens, priority, true));
          } catch (const std::exception& e) {
            results[i].status = -1;
            results[i].body = e.what();
          }
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  endpoint.stop();
  instance.stop();

  const auto service_records = instance.service_records();
  const auto& engine_records = instance.trace().sequences;
  std::map<std::int64_t, const metrics::SequenceRecord*> by_id;
  for (const auto& r : service_records) by_id[r.id] = &r;

  for (const auto& r : results) {
    if (!stream_intact(r, s.serve.max_new_tokens)) {
      ++out.failed;
      continue;
    }
    ++out.completed;
    const auto it = by_id.find(r.chunks.front().task_id);
    if (it == by_id.end() || it->second->token_times.size() != r.chunks.size()) {
      ++out.incoherent;
      continue;
    }
    for (const auto& c : r.chunks) {
      if (it->second->token_times[c.index] != c.time) {
        ++out.incoherent;
        break;
      }
    }
  }
  if (service_records.size() != engine_records.size()) {
    out.incoherent += 1;
  } else {
    for (std::size_t i = 0; i < service_records.size(); ++i) {
      if (!same_record(service_records[i], engine_records[i])) ++out.incoherent;
    }
  }
  out.inversions = broker.inversions();
  out.dequeues = broker.dequeue_log().size();
  out.peak_busy = instance.peak_busy();
  if (!service_records.empty()) out.report = metrics::aggregate(service_records, echo(s));
  out.wall_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
  return out;
}

nlohmann::json to_json(const ServeOutcome& o) {
  nlohmann::json j = {{"port", o.port},
                      {"ring_ready_time", o.ring.ready_time},
                      {"ring_passes", o.ring.passes},
                      {"requests", o.requests},
                      {"completed", o.completed},
                      {"failed", o.failed},
                      {"dequeues", o.dequeues},
                      {"inversions", o.inversions},
                      {"incoherent", o.incoherent},
                      {"pool_size", o.pool_size},
                      {"peak_busy", o.peak_busy},
                      {"wall_seconds", o.wall_seconds},
                      {"ok", o.ok()}};
  if (o.report) j["report"] = metrics::to_json(*o.report);
  return j;
}

}  // namespace cardrack
