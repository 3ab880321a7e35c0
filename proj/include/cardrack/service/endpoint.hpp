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

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cardrack/service/broker.hpp"

namespace cardrack::service {

struct EndpointConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::size_t threads = 128;
  // Used when a request omits "model".
  std::string default_model;
  // Longest a request waits for its next chunk before failing.
  double chunk_timeout_seconds = 120;
};

// Chat-completions subset over HTTP:
//   POST /v1/chat/completions {model, messages, stream, max_tokens,
//                              priority, stop_at_step}
//   GET  /healthz
// Streaming responses are server-sent events, one chunk per token, closed by
// "data: [DONE]".
class Endpoint {
 public:
  Endpoint(Broker& broker, EndpointConfig config);
  ~Endpoint();

  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  // Binds and serves on a background thread. Returns the bound port; throws
  // StartupError if the address cannot be bound.
  int start();
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

nlohmann::json chat_request(const std::string& model, const std::string& prompt,
                            std::uint64_t max_tokens, int priority, bool stream);

struct StreamResult {
  int status = 0;
  std::vector<StreamChunk> chunks;
  bool done_marker = false;
  std::string body;  // raw body for non-streaming or failed requests
};

// Minimal client used by tests and the acceptance run.
StreamResult post_chat(const std::string& host, int port, const nlohmann::json& request);

}  // namespace cardrack::service
