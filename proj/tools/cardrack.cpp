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


// Command-line entry point: plan, power, simulate, serve, report, check and
// the one-shot acceptance run.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cardrack/acceptance.hpp"
#include "cardrack/engine.hpp"
#include "cardrack/error.hpp"
#include "cardrack/metrics.hpp"
#include "cardrack/planner.hpp"
#include "cardrack/power.hpp"
#include "cardrack/runner.hpp"
#include "cardrack/scenario.hpp"
#include "cardrack/verify.hpp"

#ifndef CARDRACK_DATA_DIR
#define CARDRACK_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace cardrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCapacity = 3;
constexpr int kExitCalibration = 4;
constexpr int kExitVerification = 5;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kCapacity: return kExitCapacity;
    case ErrorKind::kCalibration: return kExitCalibration;
    case ErrorKind::kVerification:
    case ErrorKind::kProtocol: return kExitVerification;
    default: return kExitOther;
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::optional<int> env_int(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const int value = std::stoi(v, &used);
    if (used == std::string(v).size()) return value;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(name) + " is not an integer: " + v);
}

std::string fmt(double value, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << value;
  return s.str();
}

void print_report(std::ostream& out, const metrics::Report& r) {
  out << "sequences " << r.sequences << ", tokens in " << r.tokens_in << ", out "
      << r.tokens_out << "\n";
  out << "TTFT mean " << fmt(r.ttft.mean * 1e3, 3) << " ms, median "
      << fmt(r.ttft.median * 1e3, 3) << " ms, p99 " << fmt(r.ttft.p99 * 1e3, 3) << " ms\n";
  if (r.itl) {
    out << "ITL  mean " << fmt(r.itl->mean * 1e3, 4) << " ms, median "
        << fmt(r.itl->median * 1e3, 4) << " ms, p99 " << fmt(r.itl->p99 * 1e3, 4) << " ms\n";
  }
  const auto tps = [](const std::optional<double>& v) { return v ? fmt(*v, 0) : "n/a"; };
  out << "ITPS " << tps(r.itps) << ", OTPS " << tps(r.otps) << ", EOTPS " << tps(r.eotps)
      << "\n";
  if (r.idle_fraction) out << "stage idle " << fmt(100 * *r.idle_fraction, 2) << "%\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cardrack: plan, simulate and serve pipelined inference on card racks"};
  app.require_subcommand(1);
  app.fallthrough();
  bool json = false;
  app.add_flag("--json", json, "Machine-readable summary on stdout");

  std::string scenario_path;
  std::string out_dir;

  auto* plan = app.add_subcommand("plan", "Plan and pack a model; emit the deployment");
  plan->add_option("--scenario", scenario_path, "Scenario file")->required();
  plan->add_option("--out", out_dir, "Write deployment.json here");

  auto* pow = app.add_subcommand("power", "Power envelope and utilization report");
  pow->add_option("--scenario", scenario_path, "Scenario file")->required();
  std::optional<double> measured;
  std::optional<int> instances;
  std::optional<int> rack_nodes;
  pow->add_option("--measured-watts", measured, "Measured draw of one instance");
  pow->add_option("--instances", instances, "Instances to extrapolate to");
  pow->add_option("--rack-nodes", rack_nodes, "Nodes per rack");
  pow->add_option("--out", out_dir, "Write power.json here");

  auto* sim = app.add_subcommand("simulate", "Run the pipeline simulation for a scenario");
  sim->add_option("--scenario", scenario_path, "Scenario file")->required();
  sim->add_option("--out", out_dir, "Artifact directory (default: scenario output)");
  std::optional<std::uint64_t> seed;
  sim->add_option("--seed", seed, "Override the scenario seed");

  auto* serve = app.add_subcommand("serve", "Start the streaming endpoint");
  serve->add_option("--scenario", scenario_path, "Scenario file")->required();
  std::optional<int> port;
  double scale = -1;
  std::uint64_t requests = 0;
  serve->add_option("--port", port, "Listen port (0 picks one)");
  serve->add_option("--real-time-scale", scale, "Wall seconds per virtual second (0 = virtual)");
  serve->add_option("--requests", requests, "Drive N local requests, report and exit");
  serve->add_option("--out", out_dir, "Write serve.json here");

  auto* report = app.add_subcommand("report", "Metrics from an existing trace");
  std::string trace_path;
  report->add_option("--trace", trace_path, "trace.jsonl")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out_dir, "Write report.json and report.csv here");

  auto* check = app.add_subcommand("check", "Exhaustive credit-protocol verification");
  verify::ChainModel model;
  bool parallel = false;
  int random_seeds = 0;
  std::uint64_t random_events = 100000;
  check->add_option("--cards", model.cards, "Cards in the chain")->capture_default_str();
  check->add_option("--slots", model.slots, "Framebuffer slots per card")->capture_default_str();
  check->add_option("--tensors", model.tensors, "Tensors injected")->capture_default_str();
  check->add_option("--credit-limit", model.credit_limit_override,
                    "Override the credit limit (fault injection)");
  check->add_flag("--parallel", parallel, "Expand frontiers with OpenMP");
  check->add_option("--random-seeds", random_seeds, "Also run N randomized schedules");
  check->add_option("--random-events", random_events, "Events per randomized run")
      ->capture_default_str();

  auto* run = app.add_subcommand("run", "Named batch runs");
  auto* accept = run->add_subcommand("all-acceptance", "Run every acceptance criterion");
  run->require_subcommand(1);
  run->fallthrough();
  std::string data_dir = CARDRACK_DATA_DIR;
  int only = 0;
  accept->add_option("--data", data_dir, "Bundled data directory")->capture_default_str();
  accept->add_option("--criterion", only, "Run a single criterion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*plan) {
      const auto d = deploy(load_scenario(scenario_path));
      const auto j = to_json(d);
      if (!out_dir.empty()) write_json(fs::path(out_dir) / "deployment.json", j);
      if (json) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << d.plan.model_name << " (" << d.plan.precision.label()
                  << "): cards=" << d.plan.total_cards << " nodes=" << d.node_count
                  << " racks=" << d.rack_count << " stages=" << d.plan.stage_count
                  << " max_users@2k=" << d.plan.max_users(2048)
                  << " max_users@4k=" << d.plan.max_users(4096) << "\n";
      }
      return kExitOk;
    }

    if (*pow) {
      auto s = load_scenario(scenario_path);
      if (measured) s.power.measured_watts = *measured;
      if (instances) s.power.instances = *instances;
      if (rack_nodes) s.power.rack_nodes = *rack_nodes;
      const auto j = power_report(s);
      if (!out_dir.empty()) write_json(fs::path(out_dir) / "power.json", j);
      if (json) {
        std::cout << j.dump(2) << "\n";
      } else {
        print_power_table(std::cout, j);
      }
      return kExitOk;
    }

    if (*sim) {
      auto s = load_scenario(scenario_path);
      if (seed) s.seed = *seed;
      const fs::path dir = out_dir.empty() ? s.output_dir : fs::path(out_dir);
      const auto r = run_simulation(s);
      write_artifacts(render(r), dir);
      if (json) {
        std::cout << metrics::to_json(r.report).dump(2) << "\n";
      } else {
        std::cout << s.name << ": " << r.deployment.plan.stage_count << " stages, "
                  << s.workload.users << " users, decode stage "
                  << fmt(r.timing.decode_stage_seconds * 1e6, 3) << " us\n";
        print_report(std::cout, r.report);
        std::cout << "artifacts in " << dir.string() << "\n";
      }
      return kExitOk;
    }

    if (*serve) {
      const auto s = load_scenario(scenario_path);
      ServeRunOptions options;
      if (const auto p = env_int("CARDRACK_PORT")) options.port = *p;
      if (port) options.port = *port;
      if (const auto l = env_int("CARDRACK_PRIORITY_LEVELS")) options.priority_levels = *l;
      options.real_time_scale = scale;
      options.requests = requests;
      options.log = json ? &std::cerr : &std::cout;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      options.should_stop = [] { return g_interrupted.load(); };
      const auto r = run_serve(s, options);
      const auto j = to_json(r);
      if (!out_dir.empty()) write_json(fs::path(out_dir) / "serve.json", j);
      if (json) {
        std::cout << j.dump(2) << "\n";
      } else if (r.requests > 0) {
        std::cout << r.completed << "/" << r.requests << " requests completed, "
                  << r.inversions << " priority inversions, peak " << r.peak_busy << "/"
                  << r.pool_size << " workers\n";
        if (r.report) print_report(std::cout, *r.report);
      }
      return r.requests == 0 || r.ok() ? kExitOk : kExitVerification;
    }

    if (*report) {
      std::ifstream in(trace_path);
      const auto trace = engine::read_trace(in);
      nlohmann::json cfg = {{"trace", trace_path},
                            {"model", trace.meta.model},
                            {"plan_hash", trace.meta.plan_hash},
                            {"seed", trace.meta.seed},
                            {"timing", engine::to_json(trace.meta.timing)}};
      const auto r = metrics::aggregate(trace.sequences, cfg, trace.idle_fraction);
      if (!out_dir.empty()) {
        write_json(fs::path(out_dir) / "report.json", metrics::to_json(r));
        std::ofstream csv(fs::path(out_dir) / "report.csv");
        metrics::write_csv(csv, r);
      }
      if (json) {
        std::cout << metrics::to_json(r).dump(2) << "\n";
      } else {
        print_report(std::cout, r);
      }
      return kExitOk;
    }

    if (*check) {
      const auto r = parallel ? verify::check_exhaustive_parallel(model)
                              : verify::check_exhaustive(model);
      bool ok = r.ok();
      nlohmann::json j = {{"cards", model.cards},      {"slots", model.slots},
                          {"tensors", model.tensors},  {"states", r.states},
                          {"transitions", r.transitions}, {"overflow", r.overflow},
                          {"deadlock", r.deadlock},    {"order_violation", r.order_violation},
                          {"max_outstanding_first_edge", r.max_outstanding_first_edge},
                          {"counterexample", r.counterexample}};
      if (!r.failure.empty()) j["failure"] = r.failure;
      if (random_seeds > 0) {
        auto& runs = j["random_runs"] = nlohmann::json::array();
        for (const auto& rr : verify::random_runs_parallel(1, random_seeds, random_events)) {
          ok = ok && rr.conserved;
          runs.push_back({{"seed", rr.seed},
                          {"cards", rr.cards},
                          {"slots", rr.slots},
                          {"events", rr.events},
                          {"delivered", rr.delivered},
                          {"conserved", rr.conserved},
                          {"failure", rr.failure}});
        }
      }
      j["ok"] = ok;
      if (json) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << r.summary() << "\n";
        if (!r.ok()) {
          std::cout << "counterexample:\n";
          for (std::size_t i = 0; i < r.counterexample.size(); ++i) {
            std::cout << "  " << i + 1 << ". " << r.counterexample[i] << "\n";
          }
        }
        if (random_seeds > 0) {
          int bad = 0;
          for (const auto& rr : j["random_runs"]) bad += rr["conserved"].get<bool>() ? 0 : 1;
          std::cout << random_seeds << " random runs x " << random_events << " events, " << bad
                    << " with broken credit conservation\n";
        }
      }
      return ok ? kExitOk : kExitVerification;
    }

    if (*accept) {
      std::vector<acceptance::Outcome> all;
      if (only > 0) {
        all.push_back(acceptance::run_one(only, data_dir, std::cout));
        acceptance::print(std::cout, all.back());
      } else {
        all = acceptance::run_all(data_dir, std::cout);
      }
      int failed = 0;
      for (const auto& o : all) failed += o.passed ? 0 : 1;
      std::cout << (failed == 0 ? "all " + std::to_string(all.size()) + " criteria passed"
                                : std::to_string(failed) + " criteria failed")
                << "\n";
      return failed == 0 ? kExitOk : kExitVerification;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
