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

#include "cardrack/scenario.hpp"

#include "cardrack/config.hpp"
#include "cardrack/error.hpp"

namespace cardrack {

namespace {

std::optional<double> optional_double(const config::Document& doc, std::string_view key) {
  if (!doc.has(key)) return std::nullopt;
  return doc.get<double>(key);
}

}  // namespace

Scenario load_scenario(const std::filesystem::path& path) {
  const auto doc = config::Document::load_file(path);
  Scenario s;
  s.origin = path;
  s.name = doc.get_or<std::string>("name", path.stem().string());

  if (!doc.has("model")) throw ConfigError(doc.origin() + ": missing key 'model'");
  s.model = doc.node("model").IsScalar() ? config::load_model_file(doc.get_path("model"))
                                         : config::load_model(doc, "model");
  if (!doc.has("directives")) throw ConfigError(doc.origin() + ": missing key 'directives'");
  s.directives = doc.node("directives").IsScalar()
                     ? config::load_directives_file(doc.get_path("directives"))
                     : config::load_directives(doc, "directives");
  s.precision = config::load_precision(doc, "precision");
  s.hardware = config::load_hardware(doc, "hardware");

  s.workload.context_len = doc.get_count_or("workload.context_len", 2048);
  s.workload.prefill_len = doc.get_count_or("workload.prefill_len", s.workload.context_len / 2);
  s.workload.decode_len =
      doc.get_count_or("workload.decode_len", s.workload.context_len - s.workload.prefill_len);
  s.workload.users = doc.get_count_or("workload.users", 0);
  if (doc.has("workload.priorities")) {
    try {
      s.priorities = doc.node("workload.priorities").as<std::vector<int>>();
    } catch (const YAML::Exception&) {
      throw ConfigError(doc.origin() + ": 'workload.priorities' must be a list of integers");
    }
  }

  s.timing.target_itl = optional_double(doc, "timing.target_itl");
  s.timing.target_ttft = optional_double(doc, "timing.target_ttft");
  s.timing.decode_stage_seconds = optional_double(doc, "timing.decode_stage_seconds");
  s.timing.prefill_stage_seconds_per_token =
      optional_double(doc, "timing.prefill_stage_seconds_per_token");

  s.seed = doc.get_count_or("seed", 0);
  const auto level = doc.get_or<std::string>("trace_level", "full");
  if (level == "full") {
    s.trace_level = engine::TraceLevel::kFull;
  } else if (level == "tokens") {
    s.trace_level = engine::TraceLevel::kTokens;
  } else {
    throw ConfigError(doc.origin() + ": 'trace_level' must be full or tokens");
  }
  s.protocol_log = doc.get_or<bool>("protocol_log", false);
  s.moe_circuits = doc.get_or<int>("moe_circuits", 0);
  s.output_dir = doc.get_or<std::string>("output", "out/" + s.name);

  s.serve.port = doc.get_or<int>("serve.port", s.serve.port);
  s.serve.priority_levels = doc.get_or<int>("serve.priority_levels", s.serve.priority_levels);
  s.serve.real_time_scale = doc.get_or<double>("serve.real_time_scale", 0.0);
  s.serve.num_requests =
      doc.get_count_or("serve.num_requests", doc.get_count_or("workload.num_requests", 0));
  s.serve.max_new_tokens = doc.get_count_or("serve.max_new_tokens", s.serve.max_new_tokens);
  s.serve.ring_hop_seconds = doc.get_or<double>("serve.ring.hop_seconds", 1e-3);
  s.serve.ring_timeout_seconds = doc.get_or<double>("serve.ring.timeout_seconds", 30.0);
  if (doc.has("serve.ring.configure_seconds")) {
    try {
      s.serve.configure_seconds =
          doc.node("serve.ring.configure_seconds").as<std::vector<double>>();
    } catch (const YAML::Exception&) {
      throw ConfigError(doc.origin() + ": 'serve.ring.configure_seconds' must be a list");
    }
  }

  auto& pm = s.power.model;
  pm.server_idle_watts = doc.get_or<double>("power.server_idle_watts", pm.server_idle_watts);
  pm.card_envelope_watts = doc.get_or<double>("power.card_envelope_watts", pm.card_envelope_watts);
  pm.cards_per_server = doc.get_or<int>("power.cards_per_server", pm.cards_per_server);
  pm.cooling_watts = doc.get_or<double>("power.cooling_watts", pm.cooling_watts);
  pm.margin_fraction = doc.get_or<double>("power.margin_fraction", pm.margin_fraction);
  s.power.rack_nodes = doc.get_or<int>("power.rack_nodes", s.hardware.nodes_per_rack);
  s.power.measured_watts = optional_double(doc, "power.measured_watts");
  s.power.instances = doc.get_or<int>("power.instances", 0);
  s.power.reserve.low_watts = doc.get_or<double>("power.reserve_low_watts", 5000.0);
  s.power.reserve.high_watts = doc.get_or<double>("power.reserve_high_watts", 10000.0);
  pm.validate();

  s.model.validate();
  s.hardware.validate();
  if (s.workload.users == 0) {
    s.workload.users = deploy(s).plan.max_users(s.workload.context_len);
    if (s.workload.users == 0) s.workload.users = 1;
  }
  s.workload.validate();
  for (int p : s.priorities) {
    if (p < 0 || p >= s.serve.priority_levels) {
      throw ConfigError(doc.origin() + ": 'workload.priorities' entry " + std::to_string(p) +
                        " outside [0, serve.priority_levels)");
    }
  }
  return s;
}

Deployment deploy(const Scenario& s) {
  return pack(plan_model(s.model, s.precision, s.hardware, s.directives), s.hardware);
}

engine::TimingModel resolve_timing(const Scenario& s, const Deployment& d) {
  engine::TimingModel t = engine::TimingModel::hops_from(s.hardware);
  if (s.timing.target_itl) {
    t = engine::calibrate(d, *s.timing.target_itl, t);
  } else if (s.timing.decode_stage_seconds) {
    t.decode_stage_seconds = *s.timing.decode_stage_seconds;
  } else {
    throw ConfigError(s.origin.string() +
                      ": timing needs target_itl or decode_stage_seconds");
  }
  if (s.timing.target_ttft) {
    t.prefill_stage_seconds_per_token =
        engine::prefill_calibrate(d, *s.timing.target_ttft, s.workload.prefill_len, t);
  } else if (s.timing.prefill_stage_seconds_per_token) {
    t.prefill_stage_seconds_per_token = *s.timing.prefill_stage_seconds_per_token;
  }
  t.validate();
  return t;
}

std::vector<service::RingNode> ring_nodes(const Scenario& s, const Deployment& d) {
  std::vector<service::RingNode> nodes;
  const auto& cfg = s.serve.configure_seconds;
  for (int n = 0; n < d.node_count; ++n) {
    const double t = cfg.empty() ? 0.0 : cfg[std::min<std::size_t>(n, cfg.size() - 1)];
    nodes.push_back({"node " + std::to_string(n), t});
  }
  return nodes;
}

nlohmann::json echo(const Scenario& s) {
  return {{"scenario", s.name},
          {"model", s.model.name},
          {"precision", s.precision.label()},
          {"seed", s.seed},
          {"workload",
           {{"users", s.workload.users},
            {"context_len", s.workload.context_len},
            {"prefill_len", s.workload.prefill_len},
            {"decode_len", s.workload.decode_len}}}};
}

}  // namespace cardrack
