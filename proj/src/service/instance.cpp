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

#include "cardrack/service/instance.hpp"

#include <algorithm>

#include "cardrack/error.hpp"
#include "cardrack/service/tokenizer.hpp"

namespace cardrack::service {

namespace {

using namespace std::chrono_literals;

std::size_t resolve_pool(const InstanceConfig& c) {
  if (c.pool_size > 0) return c.pool_size;
  const auto n = c.deployment.plan.max_users(c.context_len);
  if (n == 0) {
    throw CapacityError("model '" + c.model + "' fits no users at context length " +
                        std::to_string(c.context_len));
  }
  return n;
}

}  // namespace

Instance::Instance(Broker& broker, InstanceConfig config)
    : broker_(broker),
      config_(std::move(config)),
      pool_size_(resolve_pool(config_)),
      permits_(pool_size_),
      admissions_(config_.queue_capacity),
      post_(config_.queue_capacity) {
  for (std::size_t w = 0; w < pool_size_; ++w) {
    workers_.push_back({static_cast<int>(w), WorkerStatus::kIdle, -1});
    permits_.push(static_cast<int>(w));
  }
  broker_.register_instance(config_.model, {config_.context_len});
}

Instance::~Instance() { stop(); }

void Instance::start() {
  if (accepting_.exchange(true)) return;
  post_thread_ = std::thread([this] { postprocessor(); });
  driver_thread_ = std::thread([this] { driver(); });
  head_thread_ = std::thread([this] { sequence_head(); });
}

void Instance::stop() {
  accepting_ = false;
  if (head_thread_.joinable()) head_thread_.join();
  draining_ = true;
  if (driver_thread_.joinable()) driver_thread_.join();
  if (post_thread_.joinable()) post_thread_.join();
}

void Instance::set_status(int worker, WorkerStatus status, std::int64_t task) {
  std::lock_guard lock(state_mu_);
  workers_[worker].status = status;
  workers_[worker].task_id = status == WorkerStatus::kIdle ? -1 : task;
  const auto busy = static_cast<std::size_t>(
      std::count_if(workers_.begin(), workers_.end(),
                    [](const auto& w) { return w.status != WorkerStatus::kIdle; }));
  peak_busy_ = std::max(peak_busy_, busy);
}

void Instance::sequence_head() {
  while (accepting_) {
    auto worker = permits_.pop_for(20ms);
    if (!worker) continue;
    std::optional<InferenceTask> task;
    while (accepting_ && !task) task = broker_.dequeue(config_.model, 20ms);
    if (!task) {
      permits_.push(*worker);
      break;
    }
    set_status(*worker, WorkerStatus::kPrefilling, task->task_id);
    auto prompt = tokenize(task->prompt);
    admissions_.push({std::move(*task), *worker, std::move(prompt)});
  }
}

void Instance::driver() {
  const Deployment& dep = config_.deployment;
  const int stages = static_cast<int>(dep.plan.stages.size());
  engine::Engine engine(dep, config_.hw, microbatch_policy(stages, static_cast<int>(pool_size_)),
                        config_.timing, config_.engine_options);

  std::map<std::int64_t, Admission> live;
  engine.on_prefill_start([&](std::int64_t user, double time) {
    const Admission& a = live.at(user);
    post_.push({PostKind::kStarted, user, a.worker, 0, 0, FinishReason::kNone, time,
                a.prompt.size(), {}});
  });
  engine.on_token([&](std::int64_t user, std::uint64_t index, double time) {
    const Admission& a = live.at(user);
    const int token = generate_stub(user, index, a.task.stop);
    FinishReason finish = FinishReason::kNone;
    if (token == kStopToken) {
      finish = FinishReason::kStop;
    } else if (index + 1 >= a.task.max_new_tokens) {
      finish = FinishReason::kLength;
    }
    post_.push({PostKind::kToken, user, a.worker, index, token, finish, time, 0, {}});
    return finish == FinishReason::kStop;
  });
  engine.on_complete([&](const metrics::SequenceRecord& r) { live.erase(r.id); });

  const auto wall_origin = std::chrono::steady_clock::now();
  const double scale = config_.real_time_scale;
  auto virtual_now = [&] {
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - wall_origin;
    return std::max(engine.now(), wall.count() / scale);
  };

  auto admit = [&](Admission a) {
    const std::int64_t id = a.task.task_id;
    const std::uint64_t prompt_len = a.prompt.size();
    if (prompt_len + a.task.max_new_tokens > config_.context_len) {
      post_.push({PostKind::kRejected, id, a.worker, 0, 0, FinishReason::kError, engine.now(),
                  prompt_len, "prompt plus max_new_tokens exceeds the context length"});
      return;
    }
    const double arrival = scale > 0 ? virtual_now() : engine.now();
    engine::Request req{id, prompt_len, a.task.max_new_tokens, arrival};
    live.emplace(id, std::move(a));
    engine.submit(req);
  };

  for (;;) {
    while (auto a = admissions_.try_pop()) admit(std::move(*a));
    if (auto next = engine.next_event_time()) {
      if (scale > 0) {
        using Clock = std::chrono::steady_clock;
        const auto due = wall_origin + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(*next * scale));
        const auto now = Clock::now();
        if (now < due) {
          const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(
              std::min<Clock::duration>(due - now, 20ms));
          if (auto a = admissions_.pop_for(wait)) admit(std::move(*a));
          continue;
        }
      }
      engine.step();
      continue;
    }
    if (draining_ && admissions_.size() == 0) break;
    if (auto a = admissions_.pop_for(20ms)) admit(std::move(*a));
  }
  trace_ = engine.finish();
  post_.close();
}

void Instance::postprocessor() {
  while (auto m = post_.pop()) {
    if (m->kind == PostKind::kStarted) {
      std::lock_guard lock(state_mu_);
      auto& rec = records_[m->task_id];
      rec.id = m->task_id;
      rec.t_start = m->time;
      rec.n_in = m->n_in;
      continue;
    }
    StreamChunk chunk{m->task_id, {}, m->index, m->finish, m->time, m->error};
    if (m->kind == PostKind::kToken) {
      chunk.text = detokenize({m->token});
      std::lock_guard lock(state_mu_);
      records_[m->task_id].token_times.push_back(m->time);
      if (m->index == 0) records_[m->task_id].t_first = m->time;
    }
    if (m->kind == PostKind::kToken && m->index == 0) {
      set_status(m->worker, WorkerStatus::kDecoding, m->task_id);
    }
    if (auto channel = broker_.channel(m->task_id)) channel->push(chunk);
    if (m->finish == FinishReason::kNone) continue;

    set_status(m->worker, WorkerStatus::kPostprocessing, m->task_id);
    {
      std::lock_guard lock(state_mu_);
      if (m->kind == PostKind::kRejected) {
        records_.erase(m->task_id);
      } else {
        auto& rec = records_[m->task_id];
        rec.t_end = m->time;
        rec.n_out = rec.token_times.size();
      }
    }
    broker_.release_channel(m->task_id);
    set_status(m->worker, WorkerStatus::kIdle, -1);
    permits_.push(m->worker);
    {
      std::lock_guard lock(state_mu_);
      ++completed_;
    }
    done_cv_.notify_all();
  }
}

bool Instance::wait_completed(std::size_t count, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(state_mu_);
  return done_cv_.wait_for(lock, timeout, [&] { return completed_ >= count; });
}

std::size_t Instance::completed() const {
  std::lock_guard lock(state_mu_);
  return completed_;
}

WorkerStats Instance::workers() const {
  std::lock_guard lock(state_mu_);
  WorkerStats s;
  s.pool = workers_.size();
  for (const auto& w : workers_) (w.status == WorkerStatus::kIdle ? s.idle : s.busy)++;
  return s;
}

std::size_t Instance::peak_busy() const {
  std::lock_guard lock(state_mu_);
  return peak_busy_;
}

std::vector<metrics::SequenceRecord> Instance::service_records() const {
  std::lock_guard lock(state_mu_);
  std::vector<metrics::SequenceRecord> out;
  for (const auto& [id, r] : records_) {
    if (r.n_out > 0 && r.token_times.size() == r.n_out) out.push_back(r);
  }
  return out;
}

}  // namespace cardrack::service
