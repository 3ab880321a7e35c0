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

#include "cardrack/planner.hpp"

#include <algorithm>
#include <cmath>

#include "cardrack/error.hpp"

namespace cardrack {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kAttention: return "attention";
    case BlockKind::kMlp: return "mlp";
    case BlockKind::kExpertGroup: return "expert_group";
    case BlockKind::kLayer: return "layer";
    case BlockKind::kOutput: return "output";
  }
  return "unknown";
}

BlockKind parse_block_kind(std::string_view name) {
  for (BlockKind k : {BlockKind::kAttention, BlockKind::kMlp,
                      BlockKind::kExpertGroup, BlockKind::kLayer,
                      BlockKind::kOutput}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown block kind '" + std::string(name) + "'");
}

std::string_view to_string(Parallelism p) {
  return p == Parallelism::kPipeline ? "pipeline" : "tensor";
}

std::vector<BlockKind> MappingDirectives::layer_kinds(const ModelSpec& m) const {
  if (fuse_layers) return {BlockKind::kLayer};
  if (m.is_moe()) return {BlockKind::kAttention, BlockKind::kExpertGroup};
  return {BlockKind::kAttention, BlockKind::kMlp};
}

int MappingDirectives::cards_for(std::uint64_t layer, BlockKind kind) const {
  if (auto it = overrides.find({layer, kind}); it != overrides.end()) {
    return it->second;
  }
  auto it = cards.find(kind);
  if (it == cards.end()) {
    throw ConfigError("directives: no card count for block kind '" +
                      std::string(to_string(kind)) + "'");
  }
  return it->second;
}

void MappingDirectives::validate(const ModelSpec& m) const {
  std::vector<BlockKind> needed = layer_kinds(m);
  needed.push_back(BlockKind::kOutput);
  for (BlockKind k : needed) {
    auto it = cards.find(k);
    if (it == cards.end()) {
      throw ConfigError("directives.cards." + std::string(to_string(k)) +
                        " is required for model '" + m.name + "'");
    }
  }
  for (const auto& [kind, count] : cards) {
    if (count < 1) {
      throw ConfigError("directives.cards." + std::string(to_string(kind)) +
                        " must be >= 1");
    }
  }
  for (const auto& [key, count] : overrides) {
    if (key.first >= m.num_layers) {
      throw ConfigError("directives.overrides: layer " +
                        std::to_string(key.first) + " out of range");
    }
    if (count < 1) {
      throw ConfigError("directives.overrides: card count must be >= 1");
    }
  }
  if (scratch_fraction < 0) {
    throw ConfigError("directives.scratch_fraction must be >= 0");
  }
}

namespace {

std::uint64_t block_params(const ModelSpec& m, BlockKind kind) {
  switch (kind) {
    case BlockKind::kAttention: return m.attention_params();
    case BlockKind::kMlp: return m.mlp_params();
    case BlockKind::kExpertGroup: return m.expert_group_params();
    case BlockKind::kLayer: return m.layer_params();
    case BlockKind::kOutput: return m.output_params();
  }
  return 0;
}

bool holds_kv(BlockKind kind) {
  return kind == BlockKind::kAttention || kind == BlockKind::kLayer;
}

Bytes scratch_for(Bytes weights, double fraction) {
  return static_cast<Bytes>(std::ceil(static_cast<double>(weights) * fraction));
}

std::string describe(const PipelineStage& s) {
  std::string out = "stage " + std::to_string(s.stage_index) + " (";
  if (s.layer_index >= 0) out += "layer " + std::to_string(s.layer_index) + " ";
  out += std::string(to_string(s.kind)) + ")";
  return out;
}

}  // namespace

std::uint64_t Plan::max_users(std::uint64_t context_len) const {
  MemoryBudget budget;
  budget.kv_budget_bytes = kv_budget_bytes;
  return cardrack::max_users(budget, kv_bytes_per_token, context_len);
}

int Deployment::node_of_stage(int stage_index) const {
  return node_of_card.at(plan.stages.at(stage_index).card_ids.front());
}

Plan plan_model(const ModelSpec& m, const PrecisionConfig& p,
                const HardwareSpec& hw, const MappingDirectives& d) {
  m.validate();
  p.validate();
  hw.validate();
  d.validate(m);

  Plan plan;
  plan.model_name = m.name;
  plan.precision = p;
  plan.kv_budget_bytes = d.kv_budget_bytes;
  plan.kv_bytes_per_token = kv_bytes_per_user(m, p, 1);
  plan.activation_bytes = (m.hidden_dim * p.activation_bits + 7) / 8;

  int next_card = 0;
  auto add_stage = [&](BlockKind kind, int layer, int cards) {
    PipelineStage stage;
    stage.stage_index = static_cast<int>(plan.stages.size());
    stage.kind = kind;
    stage.layer_index = layer;
    for (int i = 0; i < cards; ++i) stage.card_ids.push_back(next_card++);
    stage.parallelism = (kind == BlockKind::kOutput || cards > 1)
                            ? Parallelism::kTensor
                            : Parallelism::kPipeline;
    stage.memory.weight_bytes = weight_bytes(block_params(m, kind), p);
    stage.memory.scratch_bytes =
        scratch_for(stage.memory.weight_bytes, d.scratch_fraction);
    if (holds_kv(kind)) {
      stage.memory.kv_bytes_per_user = plan.kv_bytes_per_token;
      stage.memory.kv_budget_bytes = d.kv_budget_bytes;
    }
    if (!stage.memory.fits(cards, hw)) {
      throw CapacityError(
          describe(stage) + " needs " +
          std::to_string(stage.memory.required_bytes()) + " bytes but " +
          std::to_string(cards) + " card(s) provide " +
          std::to_string(static_cast<Bytes>(cards) * hw.core_memory_bytes));
    }
    plan.stages.push_back(std::move(stage));
  };

  const std::vector<BlockKind> kinds = d.layer_kinds(m);
  for (std::uint64_t layer = 0; layer < m.num_layers; ++layer) {
    for (BlockKind kind : kinds) {
      add_stage(kind, static_cast<int>(layer), d.cards_for(layer, kind));
    }
  }
  add_stage(BlockKind::kOutput, -1, d.cards.at(BlockKind::kOutput));

  plan.total_cards = next_card;
  plan.stage_count = static_cast<int>(plan.stages.size());
  return plan;
}

int cards_for_bytes(Bytes bytes, const HardwareSpec& hw) {
  const Bytes cards = (bytes + hw.core_memory_bytes - 1) / hw.core_memory_bytes;
  return std::max<int>(1, static_cast<int>(cards));
}

std::map<BlockKind, int> capacity_lower_bound(const ModelSpec& m,
                                              const PrecisionConfig& p,
                                              const HardwareSpec& hw,
                                              const CapacityWorkload& w,
                                              double scratch_fraction) {
  const Bytes kv_share = w.users * kv_bytes_per_user(m, p, w.context_len);
  std::vector<BlockKind> kinds = {BlockKind::kAttention, BlockKind::kLayer,
                                  BlockKind::kOutput};
  kinds.push_back(m.is_moe() ? BlockKind::kExpertGroup : BlockKind::kMlp);

  std::map<BlockKind, int> bound;
  for (BlockKind kind : kinds) {
    const Bytes weights = weight_bytes(block_params(m, kind), p);
    Bytes total = weights + scratch_for(weights, scratch_fraction);
    if (holds_kv(kind)) total += kv_share;
    bound[kind] = cards_for_bytes(total, hw);
  }
  return bound;
}

Deployment pack(const Plan& plan, const HardwareSpec& hw) {
  Deployment d;
  d.plan = plan;
  d.node_of_card.resize(plan.total_cards);
  for (int card = 0; card < plan.total_cards; ++card) {
    d.node_of_card[card] = card / hw.cards_per_node;
  }
  d.node_count = (plan.total_cards + hw.cards_per_node - 1) / hw.cards_per_node;
  d.rack_count = (d.node_count + hw.nodes_per_rack - 1) / hw.nodes_per_rack;
  for (int n = 0; n < d.node_count; ++n) {
    d.rack_of_node.push_back(n / hw.nodes_per_rack);
  }
  return d;
}

MicroBatchPolicy microbatch_policy(int stage_count, int mini_batch) {
  if (stage_count < 1 || mini_batch < 1) {
    throw ConfigError("microbatch_policy: stage_count and mini_batch must be >= 1");
  }
  MicroBatchPolicy policy;
  if (stage_count >= 16) {
    policy.micro_batch_size = 1;
    policy.num_micro_batches = mini_batch;
  } else {
    policy.micro_batch_size = (mini_batch + stage_count - 1) / stage_count;
    policy.num_micro_batches =
        (mini_batch + policy.micro_batch_size - 1) / policy.micro_batch_size;
  }
  return policy;
}

double bubble_fraction(int stage_count, int num_micro_batches) {
  if (stage_count < 1 || num_micro_batches < 1) {
    throw ConfigError("bubble_fraction: arguments must be >= 1");
  }
  const double idle = static_cast<double>(stage_count - num_micro_batches) /
                      static_cast<double>(stage_count);
  return std::max(0.0, idle);
}

nlohmann::json to_json(const Deployment& deployment) {
  const Plan& plan = deployment.plan;
  nlohmann::json stages = nlohmann::json::array();
  for (const PipelineStage& s : plan.stages) {
    std::vector<int> nodes;
    for (int card : s.card_ids) nodes.push_back(deployment.node_of_card[card]);
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    stages.push_back({{"index", s.stage_index},
                      {"kind", to_string(s.kind)},
                      {"layer", s.layer_index},
                      {"cards", s.card_ids},
                      {"nodes", nodes},
                      {"parallelism", to_string(s.parallelism)},
                      {"weight_bytes", s.memory.weight_bytes},
                      {"kv_budget_bytes", s.memory.kv_budget_bytes},
                      {"scratch_bytes", s.memory.scratch_bytes}});
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (int n = 0; n < deployment.node_count; ++n) {
    std::vector<int> cards;
    for (int c = 0; c < plan.total_cards; ++c) {
      if (deployment.node_of_card[c] == n) cards.push_back(c);
    }
    nodes.push_back(
        {{"index", n}, {"rack", deployment.rack_of_node[n]}, {"cards", cards}});
  }
  return {{"model", plan.model_name},
          {"precision", plan.precision.label()},
          {"stages", stages},
          {"nodes", nodes},
          {"totals",
           {{"cards", plan.total_cards},
            {"stage_count", plan.stage_count},
            {"nodes", deployment.node_count},
            {"racks", deployment.rack_count},
            {"kv_budget_bytes", plan.kv_budget_bytes},
            {"kv_bytes_per_token", plan.kv_bytes_per_token}}}};
}

std::uint64_t plan_hash(const Deployment& deployment) {
  const std::string text = to_json(deployment).dump();
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

}  // namespace cardrack
