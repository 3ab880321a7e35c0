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
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cardrack/core.hpp"

namespace cardrack {

// kLayer is a fused attention + MLP block on a shared card group, used by
// models whose whole layer fits on its cards.
enum class BlockKind { kAttention, kMlp, kExpertGroup, kLayer, kOutput };

enum class Parallelism { kPipeline, kTensor };

std::string_view to_string(BlockKind kind);
BlockKind parse_block_kind(std::string_view name);
std::string_view to_string(Parallelism p);

struct MappingDirectives {
  std::map<BlockKind, int> cards;
  // (layer, kind) -> cards, replacing the per-kind count for that layer.
  std::map<std::pair<std::uint64_t, BlockKind>, int> overrides;
  bool fuse_layers = false;
  // Calibrated KV pool held by each layer's attention cards.
  Bytes kv_budget_bytes = 0;
  double scratch_fraction = 0.10;

  // Block kinds a model needs under these directives, in layer order.
  std::vector<BlockKind> layer_kinds(const ModelSpec& m) const;
  int cards_for(std::uint64_t layer, BlockKind kind) const;
  void validate(const ModelSpec& m) const;
};

struct PipelineStage {
  int stage_index = 0;
  BlockKind kind = BlockKind::kAttention;
  int layer_index = -1;  // -1 for the output stage
  std::vector<int> card_ids;
  Parallelism parallelism = Parallelism::kPipeline;
  MemoryBudget memory;
};

struct Plan {
  std::string model_name;
  PrecisionConfig precision;
  std::vector<PipelineStage> stages;
  int total_cards = 0;
  int stage_count = 0;
  Bytes kv_budget_bytes = 0;
  // KV bytes one user adds to one layer per token of context.
  Bytes kv_bytes_per_token = 0;
  // Bytes of the embedding tensor passed between stages for one user.
  Bytes activation_bytes = 0;

  std::uint64_t max_users(std::uint64_t context_len) const;
};

struct Deployment {
  Plan plan;
  std::vector<int> node_of_card;
  std::vector<int> rack_of_node;
  int node_count = 0;
  int rack_count = 0;

  // Node hosting the stage's first card.
  int node_of_stage(int stage_index) const;
};

struct MicroBatchPolicy {
  int micro_batch_size = 1;
  int num_micro_batches = 1;
};

struct CapacityWorkload {
  std::uint64_t context_len = 0;
  std::uint64_t users = 0;
};

// One stage per (layer, block kind) in layer order plus a tensor-parallel
// output stage. Card ids are assigned contiguously in stage order. Throws
// CapacityError naming the first stage whose weights, KV pool and scratch do
// not fit on its cards.
Plan plan_model(const ModelSpec& m, const PrecisionConfig& p,
                const HardwareSpec& hw, const MappingDirectives& d);

int cards_for_bytes(Bytes bytes, const HardwareSpec& hw);

// Minimum cards per block kind for the given workload (never below one).
std::map<BlockKind, int> capacity_lower_bound(const ModelSpec& m,
                                              const PrecisionConfig& p,
                                              const HardwareSpec& hw,
                                              const CapacityWorkload& w,
                                              double scratch_fraction = 0.10);

Deployment pack(const Plan& plan, const HardwareSpec& hw);

MicroBatchPolicy microbatch_policy(int stage_count, int mini_batch);

// Steady-state idle fraction of a pipeline with uniform stage times.
double bubble_fraction(int stage_count, int num_micro_batches);

nlohmann::json to_json(const Deployment& deployment);

// FNV-1a over the deployment's canonical JSON; identifies a plan in traces.
std::uint64_t plan_hash(const Deployment& deployment);

}  // namespace cardrack
