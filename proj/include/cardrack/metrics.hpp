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
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

namespace cardrack::metrics {

inline constexpr int kReportSchemaVersion = 1;

struct SequenceRecord {
  std::int64_t id = 0;
  std::uint64_t n_in = 0;
  std::uint64_t n_out = 0;
  double t_start = 0;
  double t_first = 0;
  double t_end = 0;
  std::vector<double> token_times;  // one per output token

  // Throws MetricError if timestamps are out of order or token_times
  // disagrees with n_out, t_first or t_end.
  void validate() const;
};

// Batch window: earliest prefill start, latest first token, latest finish.
struct BatchRecord {
  std::vector<SequenceRecord> members;
  double t_start = 0;
  double t_first = 0;
  double t_end = 0;
  std::uint64_t n_in = 0;
  std::uint64_t n_out = 0;

  // Throws MetricError for an empty member list.
  static BatchRecord from(std::vector<SequenceRecord> members);
};

double ttft(const SequenceRecord& s);
// Mean gap between consecutive tokens. Throws MetricError when n_out < 2.
double itl(const SequenceRecord& s);

struct Throughputs {
  double itps = 0;
  double otps = 0;
  double eotps = 0;
};

// Throws MetricError if any of the three windows has zero length.
Throughputs batch_throughputs(const BatchRecord& b);

struct Distribution {
  std::size_t count = 0;
  double mean = 0;
  double median = 0;
  double p99 = 0;
  double min = 0;
  double max = 0;
};

// Linear interpolation between closest ranks; q in [0, 1].
double percentile(const std::vector<double>& sorted, double q);
Distribution summarize(std::vector<double> values);

struct Report {
  std::uint64_t sequences = 0;
  std::uint64_t tokens_in = 0;
  std::uint64_t tokens_out = 0;
  Distribution ttft;
  // Sequences with a single output token have no ITL and are not counted.
  std::optional<Distribution> itl;
  double batch_t_start = 0;
  double batch_t_first = 0;
  double batch_t_end = 0;
  // Unset when the corresponding window is empty.
  std::optional<double> itps;
  std::optional<double> otps;
  std::optional<double> eotps;
  std::optional<double> idle_fraction;
  nlohmann::json config = nlohmann::json::object();
};

// Throws MetricError for an empty record set.
Report aggregate(const std::vector<SequenceRecord>& sequences,
                 const nlohmann::json& config = nlohmann::json::object(),
                 std::optional<double> idle_fraction = std::nullopt);

nlohmann::json to_json(const Report& r);
void write_csv(std::ostream& out, const Report& r);
// One row per output token: sequence, index, seconds, microseconds.
void write_token_csv(std::ostream& out, const std::vector<SequenceRecord>& sequences);

nlohmann::json to_json(const SequenceRecord& s);
SequenceRecord sequence_from_json(const nlohmann::json& j);

}  // namespace cardrack::metrics
