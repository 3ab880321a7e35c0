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

#include <optional>
#include <string>
#include <vector>

namespace cardrack::service {

struct RingNode {
  std::string name;
  // Virtual seconds until the node finishes configuring; unset never does.
  std::optional<double> configure_seconds;
};

struct RingOptions {
  double hop_seconds = 1e-3;  // token transfer between neighbours
  double timeout_seconds = 30;
};

struct RingResult {
  double ready_time = 0;
  int passes = 0;
  // Flags as seen at the end of each pass; never cleared once set.
  std::vector<std::vector<bool>> flags_per_pass;
};

// The manager sends a token around manager -> node 0 -> ... -> manager. A
// node sets its flag when the token finds it configured; the manager
// declares readiness at the end of the first pass that sees every flag set.
// Throws StartupError naming the first node still unset at the timeout, and
// ConfigError for an empty ring.
RingResult ring_ready(const std::vector<RingNode>& nodes, const RingOptions& options = {});

}  // namespace cardrack::service
