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

#include "cardrack/service/broker.hpp"

#include <algorithm>

#include "cardrack/error.hpp"

namespace cardrack::service {

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::kNone: return "none";
    case FinishReason::kStop: return "stop";
    case FinishReason::kLength: return "length";
    case FinishReason::kError: return "error";
  }
  return "none";
}

Broker::Broker(int priority_levels, std::size_t channel_capacity)
    : levels_(priority_levels), channel_capacity_(channel_capacity) {
  if (levels_ < 1) throw ConfigError("broker needs at least one priority level");
}

void Broker::register_instance(const std::string& model, ModelLimits limits) {
  std::lock_guard lock(mu_);
  auto& q = queues_[model];
  q.limits = limits;
  q.levels.resize(levels_);
}

std::optional<ModelLimits> Broker::limits(const std::string& model) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(model);
  if (it == queues_.end()) return std::nullopt;
  return it->second.limits;
}

std::vector<std::string> Broker::models() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, q] : queues_) out.push_back(name);
  return out;
}

SubmitReceipt Broker::submit(InferenceTask task) {
  if (task.priority < 0 || task.priority >= levels_) {
    throw ConfigError("priority " + std::to_string(task.priority) + " outside [0, " +
                      std::to_string(levels_) + ")");
  }
  if (task.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");

  std::lock_guard lock(mu_);
  auto it = queues_.find(task.model);
  if (it == queues_.end()) {
    throw RoutingError("no instance serves model '" + task.model + "'");
  }
  ModelQueues& q = it->second;
  if (q.limits.context_len > 0 &&
      task.prompt.size() + task.max_new_tokens > q.limits.context_len) {
    throw CapacityError("prompt of " + std::to_string(task.prompt.size()) + " tokens plus " +
                        std::to_string(task.max_new_tokens) +
                        " new tokens exceeds the context length " +
                        std::to_string(q.limits.context_len));
  }
  if (task.task_id < 0) task.task_id = next_id_;
  next_id_ = std::max(next_id_, task.task_id + 1);

  SubmitReceipt receipt;
  receipt.task_id = task.task_id;
  for (const auto& level : q.levels) receipt.position += level.size();
  receipt.channel = std::make_shared<ResponseChannel>(channel_capacity_);
  channels_[task.task_id] = receipt.channel;
  q.levels[task.priority].push_back(std::move(task));
  cv_.notify_all();
  return receipt;
}

std::optional<InferenceTask> Broker::take_locked(ModelQueues& q) {
  for (int p = 0; p < levels_; ++p) {
    auto& level = q.levels[p];
    if (level.empty()) continue;
    InferenceTask task = std::move(level.front());
    level.pop_front();
    // Independent of the scan above: any more urgent task still waiting?
    bool inversion = false;
    for (int h = 0; h < task.priority; ++h) inversion |= !q.levels[h].empty();
    log_.push_back({task.task_id, task.priority, inversion});
    return task;
  }
  return std::nullopt;
}

std::optional<InferenceTask> Broker::try_dequeue(const std::string& model) {
  std::lock_guard lock(mu_);
  auto it = queues_.find(model);
  if (it == queues_.end() || closed_) return std::nullopt;
  return take_locked(it->second);
}

std::optional<InferenceTask> Broker::dequeue(const std::string& model,
                                             std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  auto it = queues_.find(model);
  if (it == queues_.end()) return std::nullopt;
  auto has_work = [&] {
    if (closed_) return true;
    for (const auto& level : it->second.levels) {
      if (!level.empty()) return true;
    }
    return false;
  };
  cv_.wait_for(lock, timeout, has_work);
  if (closed_) return std::nullopt;
  return take_locked(it->second);
}

std::shared_ptr<ResponseChannel> Broker::channel(std::int64_t task_id) const {
  std::lock_guard lock(mu_);
  auto it = channels_.find(task_id);
  return it == channels_.end() ? nullptr : it->second;
}

void Broker::release_channel(std::int64_t task_id) {
  std::lock_guard lock(mu_);
  channels_.erase(task_id);
}

std::size_t Broker::queued(const std::string& model) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(model);
  if (it == queues_.end()) return 0;
  std::size_t n = 0;
  for (const auto& level : it->second.levels) n += level.size();
  return n;
}

std::vector<DequeueRecord> Broker::dequeue_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::uint64_t Broker::inversions() const {
  std::lock_guard lock(mu_);
  std::uint64_t n = 0;
  for (const auto& r : log_) n += r.inversion ? 1 : 0;
  return n;
}

void Broker::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

}  // namespace cardrack::service
