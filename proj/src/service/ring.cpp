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

#include "cardrack/service/ring.hpp"

#include <algorithm>

#include "cardrack/error.hpp"

namespace cardrack::service {

RingResult ring_ready(const std::vector<RingNode>& nodes, const RingOptions& options) {
  if (nodes.empty()) throw ConfigError("ring has no nodes");
  if (options.hop_seconds <= 0) throw ConfigError("ring hop_seconds must be > 0");

  RingResult result;
  std::vector<bool> flags(nodes.size(), false);
  double t = 0;
  for (;;) {
    ++result.passes;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      t += options.hop_seconds;
      const auto& done = nodes[i].configure_seconds;
      if (!flags[i] && done && *done <= t) flags[i] = true;
    }
    t += options.hop_seconds;
    result.flags_per_pass.push_back(flags);
    if (std::all_of(flags.begin(), flags.end(), [](bool f) { return f; })) {
      result.ready_time = t;
      return result;
    }
    if (t > options.timeout_seconds) {
      const auto it = std::find(flags.begin(), flags.end(), false);
      const auto& node = nodes[it - flags.begin()];
      throw StartupError("ring startup timed out after " +
                         std::to_string(options.timeout_seconds) + " s: " + node.name +
                         " never reported ready");
    }
  }
}

}  // namespace cardrack::service
