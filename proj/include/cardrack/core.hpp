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

namespace cardrack {

using Bytes = std::uint64_t;

inline constexpr Bytes kMiB = Bytes{1} << 20;

// Per-tensor-class bit widths, written A<act>-C<cache>-W<weight>.
struct PrecisionConfig {
  int activation_bits = 8;
  int cache_bits = 8;
  int weight_bits = 4;

  // Throws ConfigError unless every width is one of 2, 4, 8, 16.
  void validate() const;
  std::string label() const;

  // Parses the "A8-C8-W4" notation.
  static PrecisionConfig parse(const std::string& label);

  friend bool operator==(const PrecisionConfig&,
                         const PrecisionConfig&) = default;
};

struct MoeSpec {
  std::uint64_t num_experts = 0;
  std::uint64_t active_experts = 0;
  std::uint64_t expert_dim = 0;
};

// Transformer (dense or MoE) architecture descriptor. Parameter counts are
// derived from the dimensions; norms and biases are ignored.
struct ModelSpec {
  std::string name;
  std::uint64_t num_layers = 0;
  std::uint64_t hidden_dim = 0;
  std::uint64_t num_heads = 0;
  std::uint64_t num_kv_heads = 0;
  std::uint64_t head_dim = 0;
  std::uint64_t mlp_dim = 0;
  std::uint64_t vocab_size = 0;
  std::optional<MoeSpec> moe;
  std::uint64_t total_params = 0;
  // Some architectures project attention to num_heads * head_dim != hidden.
  bool decoupled_head_dim = false;

  void validate() const;

  bool is_moe() const { return moe.has_value(); }

  std::uint64_t attention_params() const;
  // Gated MLP: gate, up and down projections.
  std::uint64_t mlp_params() const;
  // All experts of one MoE layer plus the router.
  std::uint64_t expert_group_params() const;
  std::uint64_t layer_params() const;
  std::uint64_t output_params() const;
  // Layers plus one vocab x hidden matrix (embeddings tied to the output).
  std::uint64_t computed_params() const;
};

struct HardwareSpec {
  Bytes core_memory_bytes = 192 * kMiB;
  Bytes framebuffer_bytes = 32 * kMiB;
  int framebuffer_slots = 8;
  int cards_per_node = 16;
  int nodes_per_rack = 18;
  double intra_node_hop_latency = 2e-6;
  double inter_node_hop_latency = 10e-6;
  double onchip_bandwidth = 13e12;  // bytes/s, decimal

  void validate() const;

  Bytes total_onchip_bytes() const {
    return core_memory_bytes + framebuffer_bytes;
  }
  int cards_per_rack() const { return cards_per_node * nodes_per_rack; }
  double rack_bandwidth() const { return onchip_bandwidth * cards_per_rack(); }
};

// Memory held by one card group (a pipeline stage).
struct MemoryBudget {
  Bytes weight_bytes = 0;
  Bytes kv_bytes_per_user = 0;
  Bytes scratch_bytes = 0;
  // Calibrated pool available for KV caches across the group's cards.
  Bytes kv_budget_bytes = 0;

  Bytes required_bytes() const {
    return weight_bytes + scratch_bytes + kv_budget_bytes;
  }
  bool fits(int cards, const HardwareSpec& hw) const {
    return required_bytes() <= static_cast<Bytes>(cards) * hw.core_memory_bytes;
  }
};

// ceil(block_params * weight_bits / 8).
Bytes weight_bytes(std::uint64_t block_params, const PrecisionConfig& p);

// Key + value cache for one user and one layer:
// 2 * context_len * kv_heads * head_dim * cache_bits / 8, rounded up.
Bytes kv_bytes_per_user(const ModelSpec& m, const PrecisionConfig& p,
                        std::uint64_t context_len);

// floor(kv_budget / (kv_per_user_per_token * context_len)). An empty budget
// yields 0.
std::uint64_t max_users(const MemoryBudget& budget,
                        Bytes kv_per_user_per_token,
                        std::uint64_t context_len);

}  // namespace cardrack
