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

#include "cardrack/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cardrack/error.hpp"

namespace cardrack::metrics {

namespace {

std::int64_t micros(double seconds) { return std::llround(seconds * 1e6); }

nlohmann::json timed(double seconds) {
  return {{"seconds", seconds}, {"us", micros(seconds)}};
}

nlohmann::json optional_rate(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json to_json(const Distribution& d) {
  return {{"count", d.count},   {"mean", timed(d.mean)}, {"median", timed(d.median)},
          {"p99", timed(d.p99)}, {"min", timed(d.min)},   {"max", timed(d.max)}};
}

}  // namespace

void SequenceRecord::validate() const {
  const std::string who = "sequence " + std::to_string(id);
  if (!(t_start <= t_first && t_first <= t_end)) {
    throw MetricError(who + ": requires t_start <= t_first <= t_end");
  }
  if (token_times.size() != n_out) {
    throw MetricError(who + ": token_times has " + std::to_string(token_times.size()) +
                      " entries but n_out is " + std::to_string(n_out));
  }
  if (n_out == 0) return;
  if (token_times.front() != t_first || token_times.back() != t_end) {
    throw MetricError(who + ": first/last token time must equal t_first/t_end");
  }
  for (std::size_t k = 1; k < token_times.size(); ++k) {
    if (!(token_times[k] > token_times[k - 1])) {
      throw MetricError(who + ": token_times must be strictly increasing");
    }
  }
}

BatchRecord BatchRecord::from(std::vector<SequenceRecord> members) {
  if (members.empty()) throw MetricError("batch has no member sequences");
  BatchRecord b;
  b.t_start = members.front().t_start;
  b.t_first = members.front().t_first;
  b.t_end = members.front().t_end;
  for (const SequenceRecord& s : members) {
    b.t_start = std::min(b.t_start, s.t_start);
    b.t_first = std::max(b.t_first, s.t_first);
    b.t_end = std::max(b.t_end, s.t_end);
    b.n_in += s.n_in;
    b.n_out += s.n_out;
  }
  b.members = std::move(members);
  return b;
}

double ttft(const SequenceRecord& s) { return s.t_first - s.t_start; }

double itl(const SequenceRecord& s) {
  if (s.n_out < 2) {
    throw MetricError("ITL is undefined for sequence " + std::to_string(s.id) +
                      " with fewer than 2 output tokens");
  }
  return (s.t_end - s.t_first) / static_cast<double>(s.n_out - 1);
}

Throughputs batch_throughputs(const BatchRecord& b) {
  const double prefill = b.t_first - b.t_start;
  const double decode = b.t_end - b.t_first;
  const double total = b.t_end - b.t_start;
  if (prefill <= 0 || decode <= 0 || total <= 0) {
    throw MetricError("batch throughput needs non-empty prefill and decode windows");
  }
  return {static_cast<double>(b.n_in) / prefill, static_cast<double>(b.n_out) / decode,
          static_cast<double>(b.n_out) / total};
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw MetricError("percentile of an empty set");
  if (q < 0 || q > 1) throw MetricError("percentile rank must be in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Distribution summarize(std::vector<double> values) {
  if (values.empty()) throw MetricError("cannot summarize an empty distribution");
  std::sort(values.begin(), values.end());
  Distribution d;
  d.count = values.size();
  // Offsets from the minimum keep a constant sample exact.
  long double offset = 0;
  for (double v : values) offset += static_cast<long double>(v) - values.front();
  d.mean = values.front() + static_cast<double>(offset / values.size());
  d.median = percentile(values, 0.5);
  d.p99 = percentile(values, 0.99);
  d.min = values.front();
  d.max = values.back();
  return d;
}

Report aggregate(const std::vector<SequenceRecord>& sequences, const nlohmann::json& config,
                 std::optional<double> idle_fraction) {
  if (sequences.empty()) throw MetricError("no completed sequences to report");
  Report r;
  r.config = config;
  r.idle_fraction = idle_fraction;
  std::vector<double> ttfts;
  std::vector<double> itls;
  for (const SequenceRecord& s : sequences) {
    s.validate();
    ttfts.push_back(ttft(s));
    if (s.n_out >= 2) itls.push_back(itl(s));
  }
  r.sequences = sequences.size();
  r.ttft = summarize(std::move(ttfts));
  if (!itls.empty()) r.itl = summarize(std::move(itls));

  const BatchRecord b = BatchRecord::from(sequences);
  r.tokens_in = b.n_in;
  r.tokens_out = b.n_out;
  r.batch_t_start = b.t_start;
  r.batch_t_first = b.t_first;
  r.batch_t_end = b.t_end;
  if (b.t_first > b.t_start) r.itps = static_cast<double>(b.n_in) / (b.t_first - b.t_start);
  if (b.t_end > b.t_first) r.otps = static_cast<double>(b.n_out) / (b.t_end - b.t_first);
  if (b.t_end > b.t_start) r.eotps = static_cast<double>(b.n_out) / (b.t_end - b.t_start);
  return r;
}

nlohmann::json to_json(const Report& r) {
  return {
      {"schema_version", kReportSchemaVersion},
      {"batch_window", "t_start=min(t_start), t_first=max(t_first), t_end=max(t_end)"},
      {"sequences", r.sequences},
      {"tokens_in", r.tokens_in},
      {"tokens_out", r.tokens_out},
      {"ttft", to_json(r.ttft)},
      {"itl", r.itl ? to_json(*r.itl) : nlohmann::json(nullptr)},
      {"batch",
       {{"t_start", timed(r.batch_t_start)},
        {"t_first", timed(r.batch_t_first)},
        {"t_end", timed(r.batch_t_end)},
        {"ttft", timed(r.batch_t_first - r.batch_t_start)},
        {"itps", optional_rate(r.itps)},
        {"otps", optional_rate(r.otps)},
        {"eotps", optional_rate(r.eotps)}}},
      {"idle_fraction", optional_rate(r.idle_fraction)},
      {"config", r.config},
  };
}

void write_csv(std::ostream& out, const Report& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v).dump() : std::string();
  };
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  out << "metric,statistic,seconds,us\n";
  auto dist = [&](const char* name, const Distribution& d) {
    const std::pair<const char*, double> rows[] = {
        {"mean", d.mean}, {"median", d.median}, {"p99", d.p99}, {"min", d.min}, {"max", d.max}};
    for (const auto& [stat, v] : rows) {
      out << name << ',' << stat << ',' << num(v) << ',' << micros(v) << '\n';
    }
  };
  dist("ttft", r.ttft);
  if (r.itl) dist("itl", *r.itl);
  out << "batch_ttft,value," << num(r.batch_t_first - r.batch_t_start) << ','
      << micros(r.batch_t_first - r.batch_t_start) << '\n';
  out << "\nmetric,tokens_per_second\n";
  out << "itps," << opt(r.itps) << '\n';
  out << "otps," << opt(r.otps) << '\n';
  out << "eotps," << opt(r.eotps) << '\n';
  out << "idle_fraction," << opt(r.idle_fraction) << '\n';
}

void write_token_csv(std::ostream& out, const std::vector<SequenceRecord>& sequences) {
  out << "sequence,index,seconds,us\n";
  for (const SequenceRecord& s : sequences) {
    for (std::size_t k = 0; k < s.token_times.size(); ++k) {
      out << s.id << ',' << k << ',' << nlohmann::json(s.token_times[k]).dump() << ','
          << micros(s.token_times[k]) << '\n';
    }
  }
}

nlohmann::json to_json(const SequenceRecord& s) {
  return {{"id", s.id},       {"n_in", s.n_in},   {"n_out", s.n_out},
          {"t_start", s.t_start}, {"t_first", s.t_first}, {"t_end", s.t_end},
          {"token_times", s.token_times}};
}

SequenceRecord sequence_from_json(const nlohmann::json& j) {
  try {
    SequenceRecord s;
    s.id = j.at("id").get<std::int64_t>();
    s.n_in = j.at("n_in").get<std::uint64_t>();
    s.n_out = j.at("n_out").get<std::uint64_t>();
    s.t_start = j.at("t_start").get<double>();
    s.t_first = j.at("t_first").get<double>();
    s.t_end = j.at("t_end").get<double>();
    s.token_times = j.at("token_times").get<std::vector<double>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed sequence record: ") + e.what());
  }
}

}  // namespace cardrack::metrics
