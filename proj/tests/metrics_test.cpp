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


#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cardrack/error.hpp"
#include "cardrack/metrics.hpp"

namespace cardrack::metrics {
namespace {

SequenceRecord record(std::int64_t id, std::uint64_t n_in, double start, double first,
                      std::vector<double> gaps) {
  SequenceRecord r;
  r.id = id;
  r.n_in = n_in;
  r.t_start = start;
  r.t_first = first;
  double t = first;
  r.token_times.push_back(t);
  for (double g : gaps) r.token_times.push_back(t += g);
  r.n_out = r.token_times.size();
  r.t_end = t;
  return r;
}

std::vector<SequenceRecord> random_records(std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1e-4, 5e-3);
  std::uniform_int_distribution<int> n(1, 60);
  std::vector<SequenceRecord> out;
  for (int i = 0; i < count; ++i) {
    std::vector<double> gaps(n(rng));
    for (double& g : gaps) g = u(rng);
    const double start = 10 * u(rng);
    out.push_back(record(i, 1 + i % 17, start, start + 20 * u(rng), gaps));
  }
  return out;
}

TEST(SequenceTest, TtftAndItl) {
  const auto r = record(0, 4, 1.0, 1.25, {0.01, 0.03});
  EXPECT_DOUBLE_EQ(ttft(r), 0.25);
  EXPECT_NEAR(itl(r), 0.02, 1e-15);
}

TEST(SequenceTest, ItlNeedsTwoTokens) {
  const auto r = record(0, 4, 1.0, 1.25, {});
  EXPECT_THROW(itl(r), MetricError);
}

TEST(SequenceTest, ValidateCatchesInconsistentRecords) {
  auto r = record(0, 4, 1.0, 1.25, {0.01});
  EXPECT_NO_THROW(r.validate());
  r.t_first = 0.5;
  EXPECT_THROW(r.validate(), MetricError);
  r = record(0, 4, 1.0, 1.25, {0.01});
  r.n_out = 5;
  EXPECT_THROW(r.validate(), MetricError);
}

// Explicit sum over consecutive gaps, in long double.
TEST(OracleTest, ItlMatchesPairwiseSum) {
  for (const auto& r : random_records(1, 1000)) {
    if (r.n_out < 2) continue;
    long double sum = 0;
    for (std::size_t k = 1; k < r.token_times.size(); ++k) {
      sum += static_cast<long double>(r.token_times[k]) - r.token_times[k - 1];
    }
    const double want = static_cast<double>(sum / (r.n_out - 1));
    EXPECT_NEAR(itl(r), want, 1e-12 * want);
  }
}

TEST(BatchTest, Window) {
  const auto a = record(0, 10, 0.0, 0.5, {0.5});
  const auto b = record(1, 30, 0.2, 0.4, {0.1, 0.1});
  const auto batch = BatchRecord::from({a, b});
  EXPECT_DOUBLE_EQ(batch.t_start, 0.0);
  EXPECT_DOUBLE_EQ(batch.t_first, 0.5);
  EXPECT_DOUBLE_EQ(batch.t_end, 1.0);
  EXPECT_EQ(batch.n_in, 40u);
  EXPECT_EQ(batch.n_out, 5u);
  const auto t = batch_throughputs(batch);
  EXPECT_DOUBLE_EQ(t.itps, 40 / 0.5);
  EXPECT_DOUBLE_EQ(t.otps, 5 / 0.5);
  EXPECT_DOUBLE_EQ(t.eotps, 5 / 1.0);
  EXPECT_THROW(BatchRecord::from({}), MetricError);
}

TEST(BatchTest, ZeroWindowThrows) {
  const auto a = record(0, 10, 0.5, 0.5, {0.1});
  EXPECT_THROW(batch_throughputs(BatchRecord::from({a})), MetricError);
}

TEST(BatchTest, EotpsNeverExceedsOtps) {
  auto records = random_records(2, 200);
  for (std::size_t i = 0; i + 8 <= records.size(); i += 8) {
    const auto t = batch_throughputs(
        BatchRecord::from({records.begin() + i, records.begin() + i + 8}));
    EXPECT_LE(t.eotps, t.otps);
  }
  // With prefill shrinking to nothing, EOTPS approaches OTPS.
  auto r = record(0, 1, 1.0, 2.0, {0.1, 0.1, 0.1});
  double previous = 0;
  for (double prefill : {1.0, 0.1, 1e-3, 1e-6}) {
    r.t_start = r.t_first - prefill;
    const auto t = batch_throughputs(BatchRecord::from({r}));
    EXPECT_GT(t.eotps, previous);
    previous = t.eotps;
    if (prefill == 1e-6) EXPECT_NEAR(t.eotps / t.otps, 1.0, 1e-4);
  }
}

TEST(DistributionTest, Percentiles) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 0.0), 1);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 1.0), 4);
  EXPECT_DOUBLE_EQ(percentile({7}, 0.99), 7);
  std::vector<double> hundred;
  for (int i = 1; i <= 101; ++i) hundred.push_back(i);
  EXPECT_DOUBLE_EQ(percentile(hundred, 0.99), 100);
}

TEST(AggregateTest, DegenerateDistribution) {
  std::vector<SequenceRecord> same;
  for (int i = 0; i < 1400; ++i) same.push_back(record(i, 64, 0.0, 0.05, {0.0028, 0.0028}));
  const auto r = aggregate(same);
  EXPECT_EQ(r.ttft.mean, r.ttft.median);
  EXPECT_EQ(r.ttft.mean, r.ttft.min);
  EXPECT_DOUBLE_EQ(r.ttft.p99, r.ttft.median);
  EXPECT_NEAR(r.itl->mean, 0.0028, 1e-15);
  EXPECT_EQ(r.sequences, 1400u);
}

TEST(AggregateTest, TwoPointMean) {
  std::vector<SequenceRecord> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(record(i, 1, 0.0, i % 2 ? 0.020 : 0.010, {0.001}));
  EXPECT_NEAR(aggregate(rs).ttft.mean, 0.015, 1e-15);
}

TEST(AggregateTest, EmptyInputThrows) { EXPECT_THROW(aggregate({}), MetricError); }

TEST(AggregateTest, SingleTokenSequencesHaveNoItl) {
  const auto r = aggregate({record(0, 1, 0.0, 0.1, {})});
  EXPECT_FALSE(r.itl.has_value());
}

TEST(AggregateTest, TranslationInvariant) {
  const auto base = random_records(3, 100);
  auto shifted = base;
  for (auto& r : shifted) {
    r.t_start += 1000;
    r.t_first += 1000;
    r.t_end += 1000;
    for (double& t : r.token_times) t += 1000;
  }
  const auto a = aggregate(base);
  const auto b = aggregate(shifted);
  EXPECT_NEAR(a.ttft.mean, b.ttft.mean, 1e-9);
  EXPECT_NEAR(a.itl->mean, b.itl->mean, 1e-9);
  EXPECT_NEAR(*a.otps, *b.otps, 1e-6 * *a.otps);
  EXPECT_NEAR(*a.eotps, *b.eotps, 1e-6 * *a.eotps);
  EXPECT_NEAR(*a.itps, *b.itps, 1e-6 * *a.itps);
}

TEST(AggregateTest, ScaleCovariant) {
  const auto base = random_records(4, 100);
  const double c = 3.0;
  auto scaled = base;
  for (auto& r : scaled) {
    r.t_start *= c;
    r.t_first *= c;
    r.t_end *= c;
    for (double& t : r.token_times) t *= c;
  }
  const auto a = aggregate(base);
  const auto b = aggregate(scaled);
  EXPECT_NEAR(b.ttft.mean, c * a.ttft.mean, 1e-12);
  EXPECT_NEAR(b.itl->p99, c * a.itl->p99, 1e-12);
  EXPECT_NEAR(*b.otps, *a.otps / c, 1e-9 * *a.otps);
  EXPECT_NEAR(*b.eotps, *a.eotps / c, 1e-9 * *a.eotps);
}

TEST(ReportTest, JsonCarriesSecondsAndMicroseconds) {
  const auto r = aggregate({record(0, 8, 0.0, 0.0648, {0.0028})}, {{"model", "m"}});
  const auto j = to_json(r);
  EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
  EXPECT_EQ(j["config"]["model"], "m");
  EXPECT_DOUBLE_EQ(j["ttft"]["mean"]["seconds"].get<double>(), 0.0648);
  EXPECT_EQ(j["ttft"]["mean"]["us"].get<std::int64_t>(), 64800);
  std::ostringstream csv;
  write_csv(csv, r);
  EXPECT_NE(csv.str().find("ttft"), std::string::npos);
}

TEST(ReportTest, SequenceJsonRoundTrip) {
  const auto r = record(5, 8, 0.125, 0.25, {0.001, 0.002});
  const auto back = sequence_from_json(to_json(r));
  EXPECT_EQ(back.id, r.id);
  EXPECT_EQ(back.token_times, r.token_times);
  EXPECT_EQ(back.t_end, r.t_end);
}

}  // namespace
}  // namespace cardrack::metrics
