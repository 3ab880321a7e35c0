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

#include "cardrack/service/endpoint.hpp"

#include <chrono>

// Bursts of concurrent streaming clients overflow the default backlog.
#define CPPHTTPLIB_LISTEN_BACKLOG 512
#include <httplib.h>

#include "cardrack/error.hpp"

namespace cardrack::service {

namespace {

nlohmann::json finish_json(FinishReason reason) {
  return reason == FinishReason::kNone ? nlohmann::json(nullptr)
                                       : nlohmann::json(std::string(to_string(reason)));
}

nlohmann::json chunk_json(const StreamChunk& c, const std::string& model) {
  nlohmann::json j = {
      {"id", "chatcmpl-" + std::to_string(c.task_id)},
      {"object", "chat.completion.chunk"},
      {"model", model},
      {"choices",
       {{{"index", 0}, {"delta", {{"content", c.text}}}, {"finish_reason", finish_json(c.finish)}}}},
      {"cardrack", {{"index", c.index}, {"time", c.time}}}};
  if (!c.error.empty()) j["error"] = {{"message", c.error}};
  return j;
}

void send_error(httplib::Response& res, int status, const std::string& type,
                const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", {{"type", type}, {"message", message}}}}.dump(),
                  "application/json");
}

FinishReason parse_finish(const nlohmann::json& j) {
  if (j.is_null()) return FinishReason::kNone;
  const auto s = j.get<std::string>();
  if (s == "stop") return FinishReason::kStop;
  if (s == "length") return FinishReason::kLength;
  return FinishReason::kError;
}

}  // namespace

struct Endpoint::Impl {
  Broker& broker;
  EndpointConfig config;
  httplib::Server server;

  Impl(Broker& b, EndpointConfig c) : broker(b), config(std::move(c)) {}

  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return send_error(res, 400, "invalid_request", "body is not valid JSON");
    }
    InferenceTask task;
    bool stream = false;
    try {
      task.model = body.value("model", config.default_model);
      const auto& messages = body.at("messages");
      if (!messages.is_array() || messages.empty()) {
        return send_error(res, 400, "invalid_request", "messages must be a non-empty array");
      }
      for (const auto& m : messages) {
        if (!task.prompt.empty()) task.prompt += '\n';
        task.prompt += m.at("content").get<std::string>();
      }
      stream = body.value("stream", false);
      task.max_new_tokens = body.value("max_tokens", std::uint64_t{16});
      task.priority = body.value("priority", broker.priority_levels() - 1);
      if (body.contains("stop_at_step")) {
        task.stop.stop_at_step = body.at("stop_at_step").get<std::uint64_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      return send_error(res, 400, "invalid_request", e.what());
    }

    SubmitReceipt receipt;
    try {
      receipt = broker.submit(task);
    } catch (const RoutingError& e) {
      return send_error(res, 404, "routing_error", e.what());
    } catch (const CapacityError& e) {
      return send_error(res, 400, "capacity_error", e.what());
    } catch (const Error& e) {
      return send_error(res, 400, "invalid_request", e.what());
    }

    const auto timeout = std::chrono::milliseconds(
        static_cast<long long>(config.chunk_timeout_seconds * 1000));
    auto channel = receipt.channel;
    const std::string model = task.model;

    if (stream) {
      auto deadline = std::make_shared<std::chrono::steady_clock::time_point>(
          std::chrono::steady_clock::now() + timeout);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [channel, model, timeout, deadline](std::size_t, httplib::DataSink& sink) {
            auto chunk = channel->pop_for(std::chrono::milliseconds(100));
            if (!chunk) {
              if (std::chrono::steady_clock::now() > *deadline) return false;
              return sink.is_writable();
            }
            *deadline = std::chrono::steady_clock::now() + timeout;
            const std::string line = "data: " + chunk_json(*chunk, model).dump() + "\n\n";
            if (!sink.write(line.data(), line.size())) return false;
            if (chunk->finish != FinishReason::kNone) {
              static const std::string kDone = "data: [DONE]\n\n";
              sink.write(kDone.data(), kDone.size());
              sink.done();
            }
            return true;
          },
          [channel](bool) { channel->close(); });
      return;
    }

    std::string text;
    StreamChunk last;
    for (;;) {
      auto chunk = channel->pop_for(timeout);
      if (!chunk) {
        channel->close();
        return send_error(res, 504, "timeout", "no token produced in time");
      }
      text += chunk->text;
      last = *chunk;
      if (chunk->finish != FinishReason::kNone) break;
    }
    channel->close();
    if (last.finish == FinishReason::kError) {
      return send_error(res, 400, "capacity_error", last.error);
    }
    nlohmann::json out = {
        {"id", "chatcmpl-" + std::to_string(receipt.task_id)},
        {"object", "chat.completion"},
        {"model", model},
        {"choices",
         {{{"index", 0},
           {"message", {{"role", "assistant"}, {"content", text}}},
           {"finish_reason", finish_json(last.finish)}}}},
        {"usage", {{"prompt_tokens", task.prompt.size()}, {"completion_tokens", last.index + 1}}}};
    res.set_content(out.dump(), "application/json");
  }
};

Endpoint::Endpoint(Broker& broker, EndpointConfig config)
    : impl_(std::make_unique<Impl>(broker, std::move(config))) {
  const std::size_t threads = impl_->config.threads;
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->server.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                       impl_->handle_chat(req, res);
                     });
  impl_->server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"status", "ok"}, {"models", impl_->broker.models()}}.dump(),
                    "application/json");
  });
}

Endpoint::~Endpoint() { stop(); }

int Endpoint::start() {
  auto& cfg = impl_->config;
  if (cfg.port == 0) {
    port_ = impl_->server.bind_to_any_port(cfg.host);
    if (port_ < 0) throw StartupError("cannot bind " + cfg.host);
  } else {
    if (!impl_->server.bind_to_port(cfg.host, cfg.port)) {
      throw StartupError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    }
    port_ = cfg.port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void Endpoint::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

void Endpoint::wait() {
  if (thread_.joinable()) thread_.join();
}

nlohmann::json chat_request(const std::string& model, const std::string& prompt,
                            std::uint64_t max_tokens, int priority, bool stream) {
  return {{"model", model},
          {"messages", {{{"role", "user"}, {"content", prompt}}}},
          {"max_tokens", max_tokens},
          {"priority", priority},
          {"stream", stream}};
}

StreamResult post_chat(const std::string& host, int port, const nlohmann::json& request) {
  httplib::Client cli(host, port);
  cli.set_read_timeout(std::chrono::seconds(120));
  StreamResult out;
  std::string pending;
  auto drain_events = [&] {
    std::size_t split;
    while ((split = pending.find("\n\n")) != std::string::npos) {
      const std::string event = pending.substr(0, split);
      pending.erase(0, split + 2);
      if (event.rfind("data: ", 0) != 0) continue;
      const std::string data = event.substr(6);
      if (data == "[DONE]") {
        out.done_marker = true;
        continue;
      }
      const auto j = nlohmann::json::parse(data);
      StreamChunk c;
      c.task_id = std::stoll(j.at("id").get<std::string>().substr(9));
      c.text = j.at("choices").at(0).at("delta").at("content").get<std::string>();
      c.finish = parse_finish(j.at("choices").at(0).at("finish_reason"));
      c.index = j.at("cardrack").at("index").get<std::uint64_t>();
      c.time = j.at("cardrack").at("time").get<double>();
      if (j.contains("error")) c.error = j.at("error").at("message").get<std::string>();
      out.chunks.push_back(std::move(c));
    }
  };

  httplib::Request req;
  req.method = "POST";
  req.path = "/v1/chat/completions";
  req.headers = {{"Content-Type", "application/json"}};
  req.body = request.dump();
  const bool streaming = request.value("stream", false);
  req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
    out.body.append(data, len);
    if (streaming) {
      pending.append(data, len);
      drain_events();
    }
    return true;
  };
  auto res = cli.send(req);
  if (!res) throw StartupError("request to " + host + ":" + std::to_string(port) + " failed: " +
                               httplib::to_string(res.error()));
  out.status = res->status;
  return out;
}

}  // namespace cardrack::service
