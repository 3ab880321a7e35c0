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

#include <stdexcept>
#include <string>
#include <string_view>

namespace cardrack {

// Error categories. The CLI maps each category to a distinct exit code.
enum class ErrorKind {
  kConfig,
  kCapacity,
  kCalibration,
  kVerification,
  kRouting,
  kProtocol,
  kMetric,
  kStartup,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorKind::kConfig, message) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& message)
      : Error(ErrorKind::kCapacity, message) {}
};

class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& message)
      : Error(ErrorKind::kCalibration, message) {}
};

class RoutingError : public Error {
 public:
  explicit RoutingError(const std::string& message)
      : Error(ErrorKind::kRouting, message) {}
};

// Raised when the credit protocol's safety guarantees are broken (overflowing
// a framebuffer, crediting a free slot, out-of-order delivery). Never expected
// while credits are respected.
class ProtocolFault : public Error {
 public:
  explicit ProtocolFault(const std::string& message)
      : Error(ErrorKind::kProtocol, message) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& message)
      : Error(ErrorKind::kMetric, message) {}
};

class StartupError : public Error {
 public:
  explicit StartupError(const std::string& message)
      : Error(ErrorKind::kStartup, message) {}
};

}  // namespace cardrack
