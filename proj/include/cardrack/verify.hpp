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
#include <string>
#include <vector>

#include "cardrack/fabric.hpp"

namespace cardrack::verify {

// host -> card0 -> ... -> card(cards-1) -> host, one circuit.
struct ChainModel {
  int cards = 3;
  int slots = 2;
  int tensors = 5;
  // Forwarded to FabricOptions; nonzero miscounts credits on purpose.
  int credit_limit_override = 0;
};

struct CheckResult {
  std::uint64_t states = 0;
  std::uint64_t transitions = 0;
  bool overflow = false;
  bool deadlock = false;
  bool order_violation = false;
  // Largest (occupied + in flight) seen on the card0 -> card1 edge.
  int max_outstanding_first_edge = 0;
  // Actions from the initial state to the first failing state.
  std::vector<std::string> counterexample;
  std::string failure;

  bool ok() const { return !overflow && !deadlock && !order_violation; }
  std::string summary() const;
};

fabric::Fabric make_chain_fabric(int cards, int slots, int credit_limit_override = 0);

// Breadth-first enumeration of every interleaving of inject, deliver,
// compute-and-forward and credit actions. Throws ConfigError on a bad model.
CheckResult check_exhaustive(const ChainModel& model);
// Same search with each frontier expanded in parallel; results are identical.
CheckResult check_exhaustive_parallel(const ChainModel& model);

struct RandomRunResult {
  std::uint64_t seed = 0;
  int cards = 0;
  int slots = 0;
  std::uint64_t events = 0;
  std::uint64_t delivered = 0;
  std::uint64_t invariant_checks = 0;
  bool conserved = true;
  std::string failure;
  // FNV-1a over the chosen action sequence.
  std::uint64_t digest = 0;
};

// Random scheduler over an unbounded tensor stream. The chain shape is
// derived from the seed (2..8 cards, 1..4 slots).
RandomRunResult random_run(std::uint64_t seed, std::uint64_t events);

std::vector<RandomRunResult> random_runs(std::uint64_t first_seed, int count,
                                         std::uint64_t events);
std::vector<RandomRunResult> random_runs_parallel(std::uint64_t first_seed, int count,
                                                  std::uint64_t events);

}  // namespace cardrack::verify
