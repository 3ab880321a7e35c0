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
#include <string>
#include <vector>

namespace cardrack::service {

// Token 0 is reserved: generating it ends the sequence with finish "stop".
inline constexpr int kStopToken = 0;

struct StopCondition {
  // Step at which the stub emits kStopToken.
  std::optional<std::uint64_t> stop_at_step;
};

// Byte-level stand-in for a real vocabulary.
std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids);

// Deterministic in (task_id, step): a lowercase letter, or kStopToken when
// the stop condition fires at this step.
int generate_stub(std::int64_t task_id, std::uint64_t step, const StopCondition& stop = {});

}  // namespace cardrack::service
