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

#include "cardrack/service/tokenizer.hpp"

namespace cardrack::service {

std::vector<int> tokenize(const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

std::string detokenize(const std::vector<int>& ids) {
  std::string text;
  text.reserve(ids.size());
  for (int id : ids) {
    if (id != kStopToken) text.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return text;
}

int generate_stub(std::int64_t task_id, std::uint64_t step, const StopCondition& stop) {
  if (stop.stop_at_step && *stop.stop_at_step == step) return kStopToken;
  std::uint64_t x = static_cast<std::uint64_t>(task_id) * 0x9e3779b97f4a7c15ull + step;
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 29;
  return 'a' + static_cast<int>(x % 26);
}

}  // namespace cardrack::service
