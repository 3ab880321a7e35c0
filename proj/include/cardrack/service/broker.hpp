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

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cardrack/service/bounded_queue.hpp"
#include "cardrack/service/tokenizer.hpp"

namespace cardrack::service {

struct InferenceTask {
  std::int64_t task_id = -1;  // assigned by submit when negative
  std::string model;
  int priority = 0;  // 0 is the most urgent level
  std::string prompt;
  std::uint64_t max_new_tokens = 16;
  StopCondition stop;
  double submit_time = 0;
};

enum class FinishReason { kNone, kStop, kLength, kError };

std::string_view to_string(FinishReason reason);

struct StreamChunk {
  std::int64_t task_id = 0;
  std::string text;
  std::uint64_t index = 0;
  FinishReason finish = FinishReason::kNone;
  double time = 0;  // virtual seconds
  std::string error;
};

using ResponseChannel = BoundedQueue<StreamChunk>;

struct ModelLimits {
  std::uint64_t context_len = 0;
};

struct SubmitReceipt {
  std::int64_t task_id = 0;
  std::size_t position = 0;  // tasks ahead of it for the same model
  std::shared_ptr<ResponseChannel> channel;
};

struct DequeueRecord {
  std::int64_t task_id = 0;
  int priority = 0;
  // A more urgent task for the same model was still queued.
  bool inversion = false;
};

// In-process stand-in for the message broker: one FIFO per (model, priority)
// and one response channel per task.
class Broker {
 public:
  explicit Broker(int priority_levels = 3, std::size_t channel_capacity = 4096);

  int priority_levels() const { return levels_; }

  void register_instance(const std::string& model, ModelLimits limits);
  std::optional<ModelLimits> limits(const std::string& model) const;
  std::vector<std::string> models() const;

  // RoutingError for a model with no instance, ConfigError for a priority
  // outside [0, levels) or a zero token budget, CapacityError when prompt
  // bytes plus max_new_tokens exceed the model's context length.
  SubmitReceipt submit(InferenceTask task);

  // Most urgent non-empty level first, FIFO within a level.
  std::optional<InferenceTask> try_dequeue(const std::string& model);
  std::optional<InferenceTask> dequeue(const std::string& model,
                                       std::chrono::milliseconds timeout);

  std::shared_ptr<ResponseChannel> channel(std::int64_t task_id) const;
  void release_channel(std::int64_t task_id);

  std::size_t queued(const std::string& model) const;
  std::vector<DequeueRecord> dequeue_log() const;
  std::uint64_t inversions() const;

  // Wakes blocked consumers; later dequeues return nullopt.
  void close();

 private:
  struct ModelQueues {
    ModelLimits limits;
    std::vector<std::deque<InferenceTask>> levels;
  };

  std::optional<InferenceTask> take_locked(ModelQueues& q);

  const int levels_;
  const std::size_t channel_capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, ModelQueues> queues_;
  std::map<std::int64_t, std::shared_ptr<ResponseChannel>> channels_;
  std::vector<DequeueRecord> log_;
  std::int64_t next_id_ = 0;
  bool closed_ = false;
};

}  // namespace cardrack::service
