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
#include <filesystem>
#include <string>
#include <string_view>

#include <yaml-cpp/yaml.h>

#include "cardrack/core.hpp"
#include "cardrack/error.hpp"
#include "cardrack/planner.hpp"

namespace cardrack::config {

// A parsed descriptor file addressed by dotted key paths such as
// "model.num_layers". Lookup failures raise ConfigError naming the path.
class Document {
 public:
  static Document load_file(const std::filesystem::path& path);
  static Document parse(const std::string& text, std::string origin = "<string>");

  bool has(std::string_view path) const;
  YAML::Node node(std::string_view path) const;

  template <typename T>
  T get(std::string_view path) const {
    YAML::Node n = node(path);
    if (!n) throw ConfigError(origin_ + ": missing key '" + std::string(path) + "'");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(origin_ + ": invalid value at '" + std::string(path) + "'");
    }
  }

  template <typename T>
  T get_or(std::string_view path, T fallback) const {
    return has(path) ? get<T>(path) : fallback;
  }

  // Non-negative integer that may be written in scientific notation (8.17e9).
  std::uint64_t get_count(std::string_view path) const;
  std::uint64_t get_count_or(std::string_view path, std::uint64_t fallback) const;

  // Resolves a path-valued key relative to this document's directory.
  std::filesystem::path get_path(std::string_view path) const;

  const std::string& origin() const { return origin_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

 private:
  YAML::Node root_;
  std::string origin_;
  std::filesystem::path base_dir_;
};

ModelSpec load_model(const Document& doc, std::string_view prefix = "model");
PrecisionConfig load_precision(const Document& doc, std::string_view prefix,
                               PrecisionConfig fallback = {});
// Applies any keys present under `prefix` on top of `base`.
HardwareSpec load_hardware(const Document& doc, std::string_view prefix,
                           HardwareSpec base = {});
MappingDirectives load_directives(const Document& doc,
                                  std::string_view prefix = "directives");

ModelSpec load_model_file(const std::filesystem::path& path);
MappingDirectives load_directives_file(const std::filesystem::path& path);

}  // namespace cardrack::config
