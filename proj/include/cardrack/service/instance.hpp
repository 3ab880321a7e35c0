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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cardrack/engine.hpp"
#include "cardrack/metrics.hpp"
#include "cardrack/planner.hpp"
#include "cardrack/service/bounded_queue.hpp"
#include "cardrack/service/broker.hpp"

namespace cardrack::service {

struct InstanceConfig {
  std::string model;
  Deployment deployment;
  HardwareSpec hw;
  engine::TimingModel timing;
  std::uint64_t context_len = 0;
  // 0 sizes the pool to the plan's max_users(context_len).
  std::size_t pool_size = 0;
  // 0 runs in virtual time; otherwise wall seconds per virtual second.
  double real_time_scale = 0;
  engine::EngineOptions engine_options{engine::TraceLevel::kTokens, true, 0, 0};
  std::size_t queue_capacity = 1024;
};

enum class WorkerStatus { kIdle, kPrefilling, kDecoding, kPostprocessing };

struct SequenceWorkerState {
  int worker_id = 0;
  WorkerStatus status = WorkerStatus::kIdle;
  std::int64_t task_id = -1;
};

struct WorkerStats {
  std::size_t pool = 0;
  std::size_t idle = 0;
  std::size_t busy = 0;
};

// One model instance on its own pipeline. Three roles exchange messages over
// bounded queues: the sequence head binds queued tasks to free workers, the
// driver runs the engine, the postprocessor turns tokens into stream chunks.
class Instance {
 public:
  Instance(Broker& broker, InstanceConfig config);
  ~Instance();

  Instance(const Instance&) = delete;
  Instance& operator=(const Instance&) = delete;

  void start();
  // Stops taking tasks, lets the engine drain, joins all roles.
  void stop();

  bool wait_completed(std::size_t count, std::chrono::milliseconds timeout) const;
  std::size_t completed() const;
  std::size_t pool_size() const { return pool_size_; }
  WorkerStats workers() const;
  // Most busy workers observed at once.
  std::size_t peak_busy() const;

  // Timestamps as recorded by the postprocessor, ordered by task id.
  std::vector<metrics::SequenceRecord> service_records() const;
  // Engine trace; valid after stop().
  const engine::Trace& trace() const { return trace_; }

 private:
  struct Admission {
    InferenceTask task;
    int worker = 0;
    std::vector<int> prompt;
  };

  enum class PostKind { kStarted, kToken, kRejected };

  struct PostMessage {
    PostKind kind = PostKind::kToken;
    std::int64_t task_id = 0;
    int worker = 0;
    std::uint64_t index = 0;
    int token = 0;
    FinishReason finish = FinishReason::kNone;
    double time = 0;
    std::uint64_t n_in = 0;
    std::string error;
  };

  void sequence_head();
  void driver();
  void postprocessor();
  void set_status(int worker, WorkerStatus status, std::int64_t task);

  Broker& broker_;
  InstanceConfig config_;
  std::size_t pool_size_ = 0;

  BoundedQueue<int> permits_;
  BoundedQueue<Admission> admissions_;
  BoundedQueue<PostMessage> post_;

  mutable std::mutex state_mu_;
  mutable std::condition_variable done_cv_;
  std::vector<SequenceWorkerState> workers_;
  std::size_t peak_busy_ = 0;
  std::size_t completed_ = 0;
  std::map<std::int64_t, metrics::SequenceRecord> records_;

  std::atomic<bool> accepting_{false};
  std::atomic<bool> draining_{false};
  std::thread head_thread_;
  std::thread driver_thread_;
  std::thread post_thread_;
  engine::Trace trace_;
};

}  // namespace cardrack::service
