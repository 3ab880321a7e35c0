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


#include "cardrack/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

#include "cardrack/config.hpp"
#include "cardrack/error.hpp"
#include "cardrack/metrics.hpp"
#include "cardrack/power.hpp"
#include "cardrack/runner.hpp"
#include "cardrack/scenario.hpp"
#include "cardrack/sweep.hpp"
#include "cardrack/verify.hpp"

namespace cardrack::acceptance {

namespace {

// Tolerances and published values.
constexpr double kPowerTolerance = 0.01;
constexpr double kServerWatts = 2200.0;
constexpr double kRackWatts = 39600.0;
constexpr double kUtilization = 0.76;
constexpr double kThreeInstanceWatts = 30000.0;

constexpr double kLatencyTolerance = 0.10;
struct TargetRow {
  const char* scenario;
  double ttft;
  double itl;
  double otps;
  double eotps;
};
constexpr TargetRow kLatencyTargets[] = {
    {"simulate-granite-8b-2k.yaml", 64.8e-3, 2.8e-3, 10341.0, 9552.0},
    {"simulate-granite-8b-4k.yaml", 96.2e-3, 2.8e-3, 5098.0, 4855.0},
};
constexpr std::uint64_t kDeskDecodeLen = 128;

constexpr double kIdleAtBalance = 0.01;

constexpr int kOracleRecords = 1000;
constexpr std::uint64_t kOracleSeed = 20260101;
constexpr double kOracleRelTol = 1e-12;

using Clock = std::chrono::steady_clock;

std::filesystem::path scenario(const std::filesystem::path& data, const std::string& name) {
  return data / "scenarios" / name;
}

bool within(double value, double target, double rel) {
  return std::fabs(value - target) <= rel * std::fabs(target);
}

std::string pct(double value, double target) {
  std::ostringstream s;
  s << std::showpos << std::fixed << std::setprecision(1)
    << 100.0 * (value - target) / target << "%";
  return s.str();
}

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.tellp() > 0 ? "; " : "") << what;
    }
  }
};

Outcome table_one(const std::filesystem::path& data, std::ostream&) {
  struct Row {
    const char* file;
    int cards, nodes, racks;
  };
  constexpr Row rows[] = {{"plan-granite-3.1-3b.yaml", 16, 1, 1},
                          {"plan-granite-3.3-8b.yaml", 84, 6, 1},
                          {"plan-gpt-oss-20b.yaml", 104, 7, 1},
                          {"plan-gpt-oss-120b.yaml", 440, 28, 2}};
  Outcome o;
  o.criterion = 1;
  o.title = "bundled plan sizes cards/nodes/racks";
  Check c;
  std::ostringstream got;
  for (const auto& r : rows) {
    const auto d = deploy(load_scenario(scenario(data, r.file)));
    got << (got.tellp() > 0 ? " " : "") << "(" << d.plan.total_cards << "," << d.node_count
        << "," << d.rack_count << ")";
    c.expect(d.plan.total_cards == r.cards && d.node_count == r.nodes && d.rack_count == r.racks,
             std::string(r.file) + " mismatch");
  }
  o.passed = c.ok;
  o.detail = got.str() + (c.ok ? "" : " | " + c.detail.str());
  o.limit_seconds = 1;
  return o;
}

Outcome context_users(const std::filesystem::path& data, std::ostream&) {
  Outcome o;
  o.criterion = 2;
  o.title = "max_users at 2k/4k context";
  const auto d = deploy(load_scenario(scenario(data, "plan-granite-3.3-8b.yaml")));
  const auto u2 = d.plan.max_users(2048);
  const auto u4 = d.plan.max_users(4096);
  o.passed = u2 == 28 && u4 == 14;
  o.detail = "2048 -> " + std::to_string(u2) + " (28), 4096 -> " + std::to_string(u4) + " (14)";
  o.limit_seconds = 1;
  return o;
}

Outcome power_model(const std::filesystem::path& data, std::ostream&) {
  Outcome o;
  o.criterion = 3;
  o.title = "power envelope and utilization";
  const auto s = load_scenario(scenario(data, "power-granite-8b.yaml"));
  const auto j = power_report(s);
  const double server = j["server_watts_rounded"];
  const double rack = j["rack_watts"];
  const double util = j["utilization"];
  const double total = j["extrapolation"]["total_watts"];
  Check c;
  c.expect(within(server, kServerWatts, kPowerTolerance), "server");
  c.expect(within(rack, kRackWatts, kPowerTolerance), "rack");
  c.expect(within(util, kUtilization, kPowerTolerance), "utilization");
  c.expect(within(total, kThreeInstanceWatts, kPowerTolerance), "three instances");
  std::ostringstream d;
  d << std::fixed << std::setprecision(0) << "server " << server << " W, rack " << rack
    << " W, util " << std::setprecision(4) << util << " (" << pct(util, kUtilization)
    << "), 3 instances " << std::setprecision(0) << total << " W";
  if (!c.ok) d << " | off: " << c.detail.str();
  o.passed = c.ok;
  o.detail = d.str();
  o.limit_seconds = 1;
  return o;
}

Outcome latency_throughput(const std::filesystem::path& data, std::ostream& out) {
  Outcome o;
  o.criterion = 4;
  o.title = "8B latency and throughput targets within 10%";
  Check c;
  std::ostringstream d;
  for (const auto& row : kLatencyTargets) {
    auto s = load_scenario(scenario(data, row.scenario));
    const auto r = run_simulation(s);
    const double ttft = r.report.ttft.mean;
    const double itl = r.report.itl ? r.report.itl->mean : 0;
    const double otps = r.report.otps.value_or(0);
    const double eotps = r.report.eotps.value_or(0);
    const std::string tag = "L=" + std::to_string(s.workload.context_len);
    c.expect(within(itl, row.itl, kLatencyTolerance), tag + " ITL");
    c.expect(within(otps, row.otps, kLatencyTolerance), tag + " OTPS");
    c.expect(within(eotps, row.eotps, kLatencyTolerance), tag + " EOTPS");
    c.expect(within(ttft, row.ttft, kLatencyTolerance), tag + " TTFT");
    d << (d.tellp() > 0 ? "; " : "") << tag << " ITL " << pct(itl, row.itl) << " OTPS "
      << pct(otps, row.otps) << " EOTPS " << pct(eotps, row.eotps) << " TTFT "
      << pct(ttft, row.ttft);

    // Same run with decode cut to 128 tokens per user, reported only.
    s.workload.decode_len = kDeskDecodeLen;
    const auto t = run_simulation(s);
    out << "INFO  4  " << tag << " decode_len " << kDeskDecodeLen << ": ITL "
        << pct(t.report.itl->mean, row.itl) << " OTPS " << pct(t.report.otps.value_or(0), row.otps)
        << " EOTPS " << pct(t.report.eotps.value_or(0), row.eotps) << " TTFT "
        << pct(t.report.ttft.mean, row.ttft) << " (not scored; scored runs decode half the context)\n";
  }
  if (!c.ok) d << " | off: " << c.detail.str();
  o.passed = c.ok;
  o.detail = d.str();
  o.limit_seconds = 120;
  return o;
}

Outcome bubble_law(const std::filesystem::path& data, std::ostream&) {
  Outcome o;
  o.criterion = 5;
  o.title = "pipeline bubble idle fraction";
  const auto doc = config::Document::load_file(scenario(data, "bubble-grid.yaml"));
  sweep::BubbleGridOptions options;
  options.values = doc.node("values").as<std::vector<int>>();
  options.decode_len = doc.get_count("decode_len");
  options.stage_seconds = doc.get<double>("stage_seconds");
  const double tolerance = doc.get<double>("tolerance");

  double worst = 0;
  double worst_balanced = 0;
  int worst_s = 0, worst_m = 0;
  for (const auto& p : sweep::bubble_grid_parallel(options)) {
    const double err = std::fabs(p.measured - p.expected);
    if (err > worst) {
      worst = err;
      worst_s = p.stages;
      worst_m = p.micro_batches;
    }
    if (p.stages == p.micro_batches) worst_balanced = std::max(worst_balanced, p.measured);
  }
  std::ostringstream d;
  d << options.values.size() * options.values.size() << " points, max |err| " << std::setprecision(3)
    << worst << " at S=" << worst_s << " M=" << worst_m << " (tol " << tolerance
    << "), max idle at M=S " << worst_balanced;
  o.passed = worst <= tolerance && worst_balanced < kIdleAtBalance;
  o.detail = d.str();
  o.limit_seconds = 60;
  return o;
}

Outcome credit_protocol(const std::filesystem::path& data, std::ostream&) {
  Outcome o;
  o.criterion = 6;
  o.title = "credit protocol safety and liveness";
  const auto doc = config::Document::load_file(scenario(data, "check.yaml"));
  const int max_cards = doc.get<int>("max_cards");
  const int max_slots = doc.get<int>("max_slots");
  const int max_tensors = doc.get<int>("max_tensors");
  const int seeds = doc.get<int>("random_seeds");
  const auto events = doc.get_count("random_events");

  Check c;
  std::uint64_t states = 0;
  int models = 0;
  for (int cards = 1; cards <= max_cards; ++cards) {
    for (int slots = 1; slots <= max_slots; ++slots) {
      for (int tensors = 0; tensors <= max_tensors; ++tensors) {
        const auto r = verify::check_exhaustive_parallel({cards, slots, tensors, 0});
        states += r.states;
        ++models;
        c.expect(r.ok(), std::to_string(cards) + "/" + std::to_string(slots) + "/" +
                             std::to_string(tensors) + ": " + r.failure);
      }
    }
  }
  // A miscounted credit limit must be caught, or the search proves nothing.
  const auto broken = verify::check_exhaustive({3, 2, 5, 3});
  c.expect(broken.overflow, "over-credited chain not flagged");

  std::uint64_t checks = 0;
  for (const auto& r : verify::random_runs_parallel(1, seeds, events)) {
    checks += r.invariant_checks;
    c.expect(r.conserved && r.events == events,
             "seed " + std::to_string(r.seed) + ": " + r.failure);
  }
  std::ostringstream d;
  d << models << " chains, " << states << " states, no overflow or deadlock; " << seeds
    << " random runs x " << events << " events, " << checks
    << " conservation checks; over-credit caught in " << broken.counterexample.size()
    << " steps";
  if (!c.ok) d << " | " << c.detail.str();
  o.passed = c.ok;
  o.detail = d.str();
  o.limit_seconds = 120;
  return o;
}

// Records with random prompt sizes, start times and token gaps.
std::vector<metrics::SequenceRecord> synthetic_records(std::mt19937_64& rng, int count) {
  std::uniform_int_distribution<std::uint64_t> n_in(1, 4096);
  std::uniform_int_distribution<std::uint64_t> n_out(2, 300);
  std::uniform_real_distribution<double> start(0.0, 5.0);
  std::uniform_real_distribution<double> prefill(1e-4, 0.5);
  std::exponential_distribution<double> gap(1.0 / 3e-3);
  std::vector<metrics::SequenceRecord> out;
  for (int i = 0; i < count; ++i) {
    metrics::SequenceRecord r;
    r.id = i;
    r.n_in = n_in(rng);
    r.n_out = n_out(rng);
    r.t_start = start(rng);
    r.t_first = r.t_start + prefill(rng);
    double t = r.t_first;
    for (std::uint64_t k = 0; k < r.n_out; ++k) {
      if (k > 0) t += gap(rng) + 1e-7;
      r.token_times.push_back(t);
    }
    r.t_end = t;
    out.push_back(std::move(r));
  }
  return out;
}

Outcome metrics_oracle(const std::filesystem::path&, std::ostream&) {
  Outcome o;
  o.criterion = 7;
  o.title = "metrics against brute-force formulas";
  std::mt19937_64 rng(kOracleSeed);
  const auto records = synthetic_records(rng, kOracleRecords);
  Check c;
  double worst = 0;
  const auto compare = [&](double got, double want, const std::string& what) {
    const double rel = std::fabs(got - want) / std::max(std::fabs(want), 1e-300);
    worst = std::max(worst, rel);
    c.expect(rel <= kOracleRelTol, what);
  };

  for (const auto& r : records) {
    compare(metrics::ttft(r), r.t_first - r.t_start, "ttft " + std::to_string(r.id));
    long double sum = 0;
    for (std::size_t k = 1; k < r.token_times.size(); ++k) {
      sum += static_cast<long double>(r.token_times[k]) - r.token_times[k - 1];
    }
    compare(metrics::itl(r), static_cast<double>(sum / (r.n_out - 1)),
            "itl " + std::to_string(r.id));
  }

  // Random batches of 1..40 records.
  std::uniform_int_distribution<std::size_t> size(1, 40);
  int batches = 0;
  for (std::size_t i = 0; i < records.size(); ++batches) {
    const std::size_t n = std::min(size(rng), records.size() - i);
    std::vector<metrics::SequenceRecord> members(records.begin() + i, records.begin() + i + n);
    i += n;
    double lo = members[0].t_start, first = members[0].t_first, hi = members[0].t_end;
    std::uint64_t in = 0, outs = 0;
    for (const auto& m : members) {
      lo = std::min(lo, m.t_start);
      first = std::max(first, m.t_first);
      hi = std::max(hi, m.t_end);
      in += m.n_in;
      outs += m.n_out;
    }
    const auto t = metrics::batch_throughputs(metrics::BatchRecord::from(members));
    const std::string tag = "batch " + std::to_string(batches);
    compare(t.itps, in / (first - lo), tag + " itps");
    compare(t.otps, outs / (hi - first), tag + " otps");
    compare(t.eotps, outs / (hi - lo), tag + " eotps");
  }

  metrics::SequenceRecord single;
  single.n_out = 1;
  single.t_start = 0;
  single.t_first = single.t_end = 1;
  single.token_times = {1};
  bool threw = false;
  try {
    metrics::itl(single);
  } catch (const MetricError&) {
    threw = true;
  }
  c.expect(threw, "itl accepted n_out = 1");

  std::ostringstream d;
  d << kOracleRecords << " records, " << batches << " batches, max rel err "
    << std::setprecision(2) << worst << " (tol " << kOracleRelTol << "), n_out<2 "
    << (threw ? "rejected" : "accepted");
  if (!c.ok) d << " | " << c.detail.str();
  o.passed = c.ok;
  o.detail = d.str();
  o.limit_seconds = 10;
  return o;
}

Outcome serve_run(const std::filesystem::path& data, std::ostream&) {
  Outcome o;
  o.criterion = 8;
  o.title = "streaming serve run";
  const auto s = load_scenario(scenario(data, "serve-granite-8b.yaml"));
  ServeRunOptions options;
  options.port = 0;
  options.real_time_scale = 0;
  const auto r = run_serve(s, options);
  std::ostringstream d;
  d << r.completed << "/" << r.requests << " streams intact, " << r.inversions
    << " inversions in " << r.dequeues << " dequeues, " << r.incoherent
    << " timestamp mismatches, peak " << r.peak_busy << "/" << r.pool_size
    << " workers, ring ready at " << r.ring.ready_time << " s";
  o.passed = r.ok() && r.requests == s.serve.num_requests && r.dequeues == r.requests;
  o.detail = d.str();
  o.limit_seconds = 60;
  return o;
}

Outcome determinism(const std::filesystem::path& data, std::ostream&) {
  Outcome o;
  o.criterion = 9;
  o.title = "same seed, identical artifacts";
  Check c;
  int files = 0;
  for (const char* name : {"simulate-granite-8b-desk.yaml", "simulate-gpt-oss-20b.yaml"}) {
    const auto s = load_scenario(scenario(data, name));
    const auto a = render(run_simulation(s));
    const auto b = render(run_simulation(s));
    c.expect(!a.trace_jsonl.empty() && a.trace_jsonl == b.trace_jsonl,
             std::string(name) + " trace");
    c.expect(a.report_json == b.report_json, std::string(name) + " report.json");
    c.expect(a.report_csv == b.report_csv, std::string(name) + " report.csv");
    c.expect(a.tokens_csv == b.tokens_csv, std::string(name) + " tokens.csv");
    c.expect(a.protocol_jsonl == b.protocol_jsonl, std::string(name) + " protocol");
    files += a.protocol_jsonl.empty() ? 4 : 5;
  }
  // The OpenMP kernels must agree with their serial references.
  const auto serial = verify::check_exhaustive({3, 2, 5, 0});
  const auto parallel = verify::check_exhaustive_parallel({3, 2, 5, 0});
  c.expect(serial.states == parallel.states && serial.transitions == parallel.transitions,
           "exhaustive serial/parallel");
  const auto rs = verify::random_runs(1, 4, 20000);
  const auto rp = verify::random_runs_parallel(1, 4, 20000);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    c.expect(rs[i].digest == rp[i].digest, "random run serial/parallel");
  }
  std::ostringstream d;
  d << "2 scenarios x 2 runs, " << files << " artifact pairs byte-identical; parallel kernels "
    << "match serial";
  if (!c.ok) d << " | differs: " << c.detail.str();
  o.passed = c.ok;
  o.detail = d.str();
  o.limit_seconds = 60;
  return o;
}

using Runner = std::function<Outcome(const std::filesystem::path&, std::ostream&)>;

const std::vector<Runner>& runners() {
  static const std::vector<Runner> all = {table_one,      context_users, power_model,
                                          latency_throughput, bubble_law, credit_protocol,
                                          metrics_oracle, serve_run,     determinism};
  return all;
}

}  // namespace

void print(std::ostream& out, const Outcome& o) {
  out << (o.passed ? "PASS" : "FAIL") << "  " << o.criterion << "  " << o.title << ": "
      << o.detail << " [" << std::fixed << std::setprecision(2) << o.seconds << " s, limit "
      << std::setprecision(0) << o.limit_seconds << " s]" << std::defaultfloat << "\n";
  out.flush();
}

Outcome run_one(int criterion, const std::filesystem::path& data_dir, std::ostream& out) {
  if (criterion < 1 || criterion > static_cast<int>(runners().size())) {
    throw ConfigError("no acceptance criterion " + std::to_string(criterion));
  }
  const auto start = Clock::now();
  Outcome o;
  try {
    o = runners()[criterion - 1](data_dir, out);
  } catch (const std::exception& e) {
    o.criterion = criterion;
    o.title = "error";
    o.passed = false;
    o.detail = e.what();
  }
  o.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (o.limit_seconds > 0 && o.seconds >= o.limit_seconds) {
    o.passed = false;
    o.detail += " | over time limit";
  }
  return o;
}

std::vector<Outcome> run_all(const std::filesystem::path& data_dir, std::ostream& out) {
  std::vector<Outcome> all;
  for (int i = 1; i <= static_cast<int>(runners().size()); ++i) {
    all.push_back(run_one(i, data_dir, out));
    print(out, all.back());
  }
  return all;
}

}  // namespace cardrack::acceptance
