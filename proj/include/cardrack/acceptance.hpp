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

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace cardrack::acceptance {

struct Outcome {
  int criterion = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0;
  double limit_seconds = 0;
};

// Runs every criterion against the scenarios under data_dir/scenarios and
// prints one PASS/FAIL line per criterion as it finishes.
std::vector<Outcome> run_all(const std::filesystem::path& data_dir, std::ostream& out);

// Single criterion, 1-based. Throws ConfigError for an unknown number.
Outcome run_one(int criterion, const std::filesystem::path& data_dir, std::ostream& out);

void print(std::ostream& out, const Outcome& o);

}  // namespace cardrack::acceptance
