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

#include "cardrack/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cardrack::config {

namespace {

std::string join(std::string_view prefix, std::string_view key) {
  return std::string(prefix) + "." + std::string(key);
}

}  // namespace

Document Document::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  Document doc = parse(buffer.str(), path.string());
  doc.base_dir_ = path.parent_path();
  return doc;
}

Document Document::parse(const std::string& text, std::string origin) {
  Document doc;
  doc.origin_ = std::move(origin);
  try {
    doc.root_ = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(doc.origin_ + ": parse error: " + e.what());
  }
  return doc;
}

namespace {

YAML::Node lookup(const YAML::Node& node, std::string_view path) {
  if (!node.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
  const std::size_t dot = path.find('.');
  const YAML::Node child = node[std::string(path.substr(0, dot))];
  if (!child) return YAML::Node(YAML::NodeType::Undefined);
  if (dot == std::string_view::npos) return child;
  return lookup(child, path.substr(dot + 1));
}

}  // namespace

YAML::Node Document::node(std::string_view path) const {
  return lookup(root_, path);
}

bool Document::has(std::string_view path) const {
  YAML::Node n = node(path);
  return n.IsDefined() && !n.IsNull();
}

std::uint64_t Document::get_count(std::string_view path) const {
  const double value = get<double>(path);
  if (value < 0 || std::floor(value) != value) {
    throw ConfigError(origin_ + ": '" + std::string(path) +
                      "' must be a non-negative integer");
  }
  return static_cast<std::uint64_t>(value);
}

std::uint64_t Document::get_count_or(std::string_view path,
                                     std::uint64_t fallback) const {
  return has(path) ? get_count(path) : fallback;
}

std::filesystem::path Document::get_path(std::string_view path) const {
  std::filesystem::path p = get<std::string>(path);
  if (p.is_relative()) p = base_dir_ / p;
  return p.lexically_normal();
}

ModelSpec load_model(const Document& doc, std::string_view prefix) {
  ModelSpec m;
  m.name = doc.get<std::string>(join(prefix, "name"));
  m.num_layers = doc.get_count(join(prefix, "num_layers"));
  m.hidden_dim = doc.get_count(join(prefix, "hidden_dim"));
  m.num_heads = doc.get_count(join(prefix, "num_heads"));
  m.num_kv_heads = doc.get_count(join(prefix, "num_kv_heads"));
  m.head_dim = doc.get_count(join(prefix, "head_dim"));
  m.mlp_dim = doc.get_count_or(join(prefix, "mlp_dim"), 0);
  m.vocab_size = doc.get_count(join(prefix, "vocab_size"));
  m.total_params = doc.get_count(join(prefix, "total_params"));
  m.decoupled_head_dim = doc.get_or<bool>(join(prefix, "decoupled_head_dim"), false);
  if (doc.has(join(prefix, "moe"))) {
    MoeSpec moe;
    moe.num_experts = doc.get_count(join(prefix, "moe.num_experts"));
    moe.active_experts = doc.get_count(join(prefix, "moe.active_experts"));
    moe.expert_dim = doc.get_count(join(prefix, "moe.expert_dim"));
    m.moe = moe;
  }
  m.validate();
  return m;
}

PrecisionConfig load_precision(const Document& doc, std::string_view prefix,
                               PrecisionConfig fallback) {
  if (!doc.has(prefix)) return fallback;
  if (doc.node(prefix).IsScalar()) {
    return PrecisionConfig::parse(doc.get<std::string>(prefix));
  }
  PrecisionConfig p;
  p.activation_bits = doc.get_or<int>(join(prefix, "activation_bits"), fallback.activation_bits);
  p.cache_bits = doc.get_or<int>(join(prefix, "cache_bits"), fallback.cache_bits);
  p.weight_bits = doc.get_or<int>(join(prefix, "weight_bits"), fallback.weight_bits);
  p.validate();
  return p;
}

HardwareSpec load_hardware(const Document& doc, std::string_view prefix,
                           HardwareSpec hw) {
  if (doc.has(join(prefix, "core_memory_mib"))) {
    hw.core_memory_bytes = doc.get_count(join(prefix, "core_memory_mib")) * kMiB;
  }
  if (doc.has(join(prefix, "framebuffer_mib"))) {
    hw.framebuffer_bytes = doc.get_count(join(prefix, "framebuffer_mib")) * kMiB;
  }
  hw.core_memory_bytes = doc.get_count_or(join(prefix, "core_memory_bytes"), hw.core_memory_bytes);
  hw.framebuffer_bytes = doc.get_count_or(join(prefix, "framebuffer_bytes"), hw.framebuffer_bytes);
  hw.framebuffer_slots = doc.get_or<int>(join(prefix, "framebuffer_slots"), hw.framebuffer_slots);
  hw.cards_per_node = doc.get_or<int>(join(prefix, "cards_per_node"), hw.cards_per_node);
  hw.nodes_per_rack = doc.get_or<int>(join(prefix, "nodes_per_rack"), hw.nodes_per_rack);
  hw.intra_node_hop_latency =
      doc.get_or<double>(join(prefix, "intra_node_hop_latency"), hw.intra_node_hop_latency);
  hw.inter_node_hop_latency =
      doc.get_or<double>(join(prefix, "inter_node_hop_latency"), hw.inter_node_hop_latency);
  hw.onchip_bandwidth = doc.get_or<double>(join(prefix, "onchip_bandwidth"), hw.onchip_bandwidth);
  hw.validate();
  return hw;
}

MappingDirectives load_directives(const Document& doc, std::string_view prefix) {
  MappingDirectives d;
  const std::string cards_path = join(prefix, "cards");
  YAML::Node cards = doc.node(cards_path);
  if (!cards || !cards.IsMap()) {
    throw ConfigError(doc.origin() + ": missing map '" + cards_path + "'");
  }
  for (const auto& entry : cards) {
    const std::string kind = entry.first.as<std::string>();
    d.cards[parse_block_kind(kind)] = doc.get<int>(join(cards_path, kind));
  }
  d.fuse_layers = doc.get_or<bool>(join(prefix, "fuse_layers"), false);
  d.kv_budget_bytes = doc.get_count_or(join(prefix, "kv_budget_bytes"), 0);
  d.scratch_fraction = doc.get_or<double>(join(prefix, "scratch_fraction"), 0.10);
  const std::string overrides_path = join(prefix, "overrides");
  if (doc.has(overrides_path)) {
    YAML::Node list = doc.node(overrides_path);
    if (!list.IsSequence()) {
      throw ConfigError(doc.origin() + ": '" + overrides_path + "' must be a list");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string item = overrides_path + "[" + std::to_string(i) + "]";
      try {
        const auto layer = list[i]["layer"].as<std::uint64_t>();
        const BlockKind kind = parse_block_kind(list[i]["block"].as<std::string>());
        d.overrides[{layer, kind}] = list[i]["cards"].as<int>();
      } catch (const YAML::Exception&) {
        throw ConfigError(doc.origin() + ": invalid entry at '" + item +
                          "' (expected layer, block, cards)");
      }
    }
  }
  return d;
}

ModelSpec load_model_file(const std::filesystem::path& path) {
  return load_model(Document::load_file(path));
}

MappingDirectives load_directives_file(const std::filesystem::path& path) {
  return load_directives(Document::load_file(path));
}

}  // namespace cardrack::config
