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


// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.

#include <iostream>
#include <string>

#include "cardrack/acceptance.hpp"

int main(int argc, char** argv) {
  const std::string data = argc > 1 ? argv[1] : CARDRACK_DATA_DIR;
  int failed = 0;
  for (const auto& o : cardrack::acceptance::run_all(data, std::cout)) {
    failed += o.passed ? 0 : 1;
  }
  std::cout << (failed == 0 ? "acceptance: all criteria passed" : "acceptance: failures") << "\n";
  return failed == 0 ? 0 : 1;
}
