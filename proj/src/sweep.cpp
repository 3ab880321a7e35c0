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

#include "cardrack/sweep.hpp"

#include "cardrack/engine.hpp"
#include "cardrack/error.hpp"
#include "cardrack/planner.hpp"

namespace cardrack::sweep {

BubblePoint bubble_point(int stages, int micro_batches, const BubbleGridOptions& options) {
  HardwareSpec hw;
  hw.intra_node_hop_latency = 0;
  hw.inter_node_hop_latency = 0;
  const Deployment dep = engine::uniform_deployment(stages, hw);

  engine::TimingModel timing = engine::TimingModel::hops_from(hw);
  timing.decode_stage_seconds = options.stage_seconds;

  engine::Workload work;
  work.users = static_cast<std::uint64_t>(micro_batches);
  work.context_len = options.decode_len;
  work.decode_len = options.decode_len;

  engine::EngineOptions eo;
  eo.level = engine::TraceLevel::kTokens;
  const auto trace =
      engine::simulate(dep, hw, MicroBatchPolicy{1, micro_batches}, timing, work, eo);
  if (!trace.idle_fraction) {
    throw MetricError("bubble point S=" + std::to_string(stages) + " M=" +
                      std::to_string(micro_batches) + " has an empty steady-state window");
  }
  return {stages, micro_batches, bubble_fraction(stages, micro_batches), *trace.idle_fraction};
}

namespace {

std::vector<std::pair<int, int>> grid(const BubbleGridOptions& options) {
  std::vector<std::pair<int, int>> out;
  for (int s : options.values) {
    for (int m : options.values) out.emplace_back(s, m);
  }
  return out;
}

}  // namespace

std::vector<BubblePoint> bubble_grid(const BubbleGridOptions& options) {
  std::vector<BubblePoint> out;
  for (const auto& [s, m] : grid(options)) out.push_back(bubble_point(s, m, options));
  return out;
}

std::vector<BubblePoint> bubble_grid_parallel(const BubbleGridOptions& options) {
  const auto points = grid(options);
  std::vector<BubblePoint> out(points.size());
  const auto n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = bubble_point(points[i].first, points[i].second, options);
  }
  return out;
}

}  // namespace cardrack::sweep
