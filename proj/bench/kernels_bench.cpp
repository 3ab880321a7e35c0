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


// Serial reference against the OpenMP version of each kernel. Each pair runs
// the same input; the parallel result is checked against the serial one once
// per benchmark so a fast but wrong kernel fails loudly.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cstdlib>
#include <iostream>

#include "cardrack/sweep.hpp"
#include "cardrack/verify.hpp"

namespace {

using namespace cardrack;

void require(bool ok, const char* what) {
  if (!ok) {
    std::cerr << "parallel result differs from serial: " << what << "\n";
    std::exit(1);
  }
}

verify::ChainModel chain(const benchmark::State& state) {
  verify::ChainModel m;
  m.cards = static_cast<int>(state.range(0));
  m.slots = 2;
  m.tensors = static_cast<int>(state.range(1));
  return m;
}

void BM_CheckSerial(benchmark::State& state) {
  const auto m = chain(state);
  std::uint64_t states = 0;
  for (auto _ : state) {
    const auto r = verify::check_exhaustive(m);
    states = r.states;
    benchmark::DoNotOptimize(states);
  }
  state.counters["states"] = static_cast<double>(states);
  state.counters["states/s"] = benchmark::Counter(
      static_cast<double>(states) * state.iterations(), benchmark::Counter::kIsRate);
}

void BM_CheckParallel(benchmark::State& state) {
  const auto m = chain(state);
  require(verify::check_exhaustive_parallel(m).states == verify::check_exhaustive(m).states,
          "check_exhaustive");
  std::uint64_t states = 0;
  for (auto _ : state) {
    const auto r = verify::check_exhaustive_parallel(m);
    states = r.states;
    benchmark::DoNotOptimize(states);
  }
  state.counters["states"] = static_cast<double>(states);
  state.counters["states/s"] = benchmark::Counter(
      static_cast<double>(states) * state.iterations(), benchmark::Counter::kIsRate);
  state.counters["threads"] = omp_get_max_threads();
}

BENCHMARK(BM_CheckSerial)->Args({3, 5})->Args({3, 6})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CheckParallel)->Args({3, 5})->Args({3, 6})->Unit(benchmark::kMillisecond);

constexpr std::uint64_t kFirstSeed = 1;
constexpr std::uint64_t kEvents = 20000;

void BM_RandomRunsSerial(benchmark::State& state) {
  const int count = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(verify::random_runs(kFirstSeed, count, kEvents));
  state.counters["events/s"] = benchmark::Counter(
      static_cast<double>(kEvents) * count * state.iterations(), benchmark::Counter::kIsRate);
}

void BM_RandomRunsParallel(benchmark::State& state) {
  const int count = static_cast<int>(state.range(0));
  const auto a = verify::random_runs(kFirstSeed, count, kEvents);
  const auto b = verify::random_runs_parallel(kFirstSeed, count, kEvents);
  for (std::size_t i = 0; i < a.size(); ++i) require(a[i].digest == b[i].digest, "random_runs");
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify::random_runs_parallel(kFirstSeed, count, kEvents));
  }
  state.counters["events/s"] = benchmark::Counter(
      static_cast<double>(kEvents) * count * state.iterations(), benchmark::Counter::kIsRate);
  state.counters["threads"] = omp_get_max_threads();
}

BENCHMARK(BM_RandomRunsSerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RandomRunsParallel)->Arg(8)->Unit(benchmark::kMillisecond);

sweep::BubbleGridOptions grid() {
  sweep::BubbleGridOptions o;
  o.values = {1, 2, 4, 8, 16};
  o.decode_len = 48;
  return o;
}

void BM_BubbleGridSerial(benchmark::State& state) {
  const auto o = grid();
  for (auto _ : state) benchmark::DoNotOptimize(sweep::bubble_grid(o));
}

void BM_BubbleGridParallel(benchmark::State& state) {
  const auto o = grid();
  const auto a = sweep::bubble_grid(o);
  const auto b = sweep::bubble_grid_parallel(o);
  for (std::size_t i = 0; i < a.size(); ++i) require(a[i].measured == b[i].measured, "bubble_grid");
  for (auto _ : state) benchmark::DoNotOptimize(sweep::bubble_grid_parallel(o));
  state.counters["threads"] = omp_get_max_threads();
}

BENCHMARK(BM_BubbleGridSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BubbleGridParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
