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
#include <vector>

namespace cardrack::sweep {

struct BubbleGridOptions {
  std::vector<int> values{1, 2, 4, 8, 16, 32};
  std::uint64_t decode_len = 96;
  double stage_seconds = 1e-3;
};

struct BubblePoint {
  int stages = 0;
  int micro_batches = 0;
  double expected = 0;  // planner bubble_fraction
  double measured = 0;  // engine idle fraction
};

// Uniform stages, zero hops, one user per micro-batch, no prompt.
BubblePoint bubble_point(int stages, int micro_batches, const BubbleGridOptions& options);

// Every (S, M) pair from options.values, S-major.
std::vector<BubblePoint> bubble_grid(const BubbleGridOptions& options);
// Points simulated concurrently; output order and values match bubble_grid.
std::vector<BubblePoint> bubble_grid_parallel(const BubbleGridOptions& options);

}  // namespace cardrack::sweep
