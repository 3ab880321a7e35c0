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

#include "cardrack/core.hpp"

#include <regex>
#include <string_view>

#include "cardrack/error.hpp"

namespace cardrack {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kCalibration: return "calibration";
    case ErrorKind::kVerification: return "verification";
    case ErrorKind::kRouting: return "routing";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kMetric: return "metric";
    case ErrorKind::kStartup: return "startup";
  }
  return "unknown";
}

namespace {

bool supported_width(int bits) {
  return bits == 2 || bits == 4 || bits == 8 || bits == 16;
}

}  // namespace

void PrecisionConfig::validate() const {
  if (!supported_width(activation_bits) || !supported_width(cache_bits) ||
      !supported_width(weight_bits)) {
    throw ConfigError("unsupported precision " + label() +
                      ": widths must be 2, 4, 8 or 16 bits");
  }
}

std::string PrecisionConfig::label() const {
  return "A" + std::to_string(activation_bits) + "-C" +
         std::to_string(cache_bits) + "-W" + std::to_string(weight_bits);
}

PrecisionConfig PrecisionConfig::parse(const std::string& label) {
  static const std::regex kPattern(R"(A(\d+)-C(\d+)-W(\d+))");
  std::smatch match;
  if (!std::regex_match(label, match, kPattern)) {
    throw ConfigError("precision '" + label + "' is not of the form A8-C8-W4");
  }
  PrecisionConfig p{std::stoi(match[1]), std::stoi(match[2]),
                    std::stoi(match[3])};
  p.validate();
  return p;
}

void ModelSpec::validate() const {
  auto fail = [this](const std::string& what) {
    throw ConfigError("model '" + name + "': " + what);
  };
  if (num_layers == 0 || hidden_dim == 0 || num_heads == 0 ||
      num_kv_heads == 0 || head_dim == 0 || vocab_size == 0) {
    fail("dimensions must be positive");
  }
  if (num_heads % num_kv_heads != 0) fail("num_kv_heads must divide num_heads");
  if (!decoupled_head_dim && head_dim * num_heads != hidden_dim) {
    fail("head_dim * num_heads must equal hidden_dim");
  }
  if (total_params == 0) fail("total_params must be positive");
  if (moe) {
    if (moe->num_experts == 0 || moe->expert_dim == 0 ||
        moe->active_experts == 0 || moe->active_experts > moe->num_experts) {
      fail("invalid moe section");
    }
  } else if (mlp_dim == 0) {
    fail("mlp_dim must be positive for dense models");
  }
}

std::uint64_t ModelSpec::attention_params() const {
  const std::uint64_t q_dim = num_heads * head_dim;
  const std::uint64_t kv_dim = num_kv_heads * head_dim;
  return hidden_dim * q_dim + 2 * hidden_dim * kv_dim + q_dim * hidden_dim;
}

std::uint64_t ModelSpec::mlp_params() const { return 3 * hidden_dim * mlp_dim; }

std::uint64_t ModelSpec::expert_group_params() const {
  if (!moe) return 0;
  return moe->num_experts * 3 * hidden_dim * moe->expert_dim +
         hidden_dim * moe->num_experts;
}

std::uint64_t ModelSpec::layer_params() const {
  return attention_params() + (moe ? expert_group_params() : mlp_params());
}

std::uint64_t ModelSpec::output_params() const { return vocab_size * hidden_dim; }

std::uint64_t ModelSpec::computed_params() const {
  return num_layers * layer_params() + output_params();
}

void HardwareSpec::validate() const {
  if (core_memory_bytes == 0 || framebuffer_slots < 1 || cards_per_node < 1 ||
      nodes_per_rack < 1) {
    throw ConfigError("hardware: memory and counts must be >= 1");
  }
  if (intra_node_hop_latency < 0 || inter_node_hop_latency < 0) {
    throw ConfigError("hardware: hop latencies must be >= 0");
  }
  if (onchip_bandwidth <= 0) {
    throw ConfigError("hardware: onchip_bandwidth must be positive");
  }
}

Bytes weight_bytes(std::uint64_t block_params, const PrecisionConfig& p) {
  const std::uint64_t bits =
      block_params * static_cast<std::uint64_t>(p.weight_bits);
  return (bits + 7) / 8;
}

Bytes kv_bytes_per_user(const ModelSpec& m, const PrecisionConfig& p,
                        std::uint64_t context_len) {
  const std::uint64_t bits = 2 * context_len * m.num_kv_heads * m.head_dim *
                             static_cast<std::uint64_t>(p.cache_bits);
  return (bits + 7) / 8;
}

std::uint64_t max_users(const MemoryBudget& budget,
                        Bytes kv_per_user_per_token,
                        std::uint64_t context_len) {
  if (budget.kv_budget_bytes == 0) return 0;
  const Bytes per_user = kv_per_user_per_token * context_len;
  if (per_user == 0) {
    throw ConfigError("max_users: per-user KV footprint is zero");
  }
  return budget.kv_budget_bytes / per_user;
}

}  // namespace cardrack
