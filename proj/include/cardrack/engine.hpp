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
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <queue>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cardrack/core.hpp"
#include "cardrack/fabric.hpp"
#include "cardrack/metrics.hpp"
#include "cardrack/planner.hpp"

namespace cardrack::engine {

struct TimingModel {
  double decode_stage_seconds = 0;  // per micro-batch per stage
  double prefill_stage_seconds_per_token = 0;
  double intra_node_hop = 2e-6;
  double inter_node_hop = 10e-6;

  // Throws ConfigError for negative or non-finite values.
  void validate() const;
  static TimingModel hops_from(const HardwareSpec& hw);
};

enum class EventKind { kStageStart, kStageEnd, kHop, kTokenEmitted, kPrefillDone, kIdle };

std::string_view to_string(EventKind kind);

struct Event {
  double time = 0;
  EventKind kind = EventKind::kStageStart;
  int stage_index = -1;
  int micro_batch_id = -1;
  std::int64_t user_id = -1;
  double duration = 0;  // hop latency or idle gap
};

// kTokens keeps token and prefill events only; big runs use it to bound memory.
enum class TraceLevel { kFull, kTokens };

struct RunMeta {
  std::uint64_t plan_hash = 0;
  std::string model;
  TimingModel timing;
  std::uint64_t seed = 0;
  MicroBatchPolicy policy;
  int stage_count = 0;
  int circuits = 1;
};

struct Trace {
  RunMeta meta;
  std::vector<Event> events;
  std::vector<metrics::SequenceRecord> sequences;  // ordered by id
  // Mean stage idle share over [max t_first, min t_end]; unset if that
  // window is empty.
  std::optional<double> idle_fraction;
  std::uint64_t stage_executions = 0;
  // Fabric send/hold/deliver/credit log when EngineOptions::protocol_log.
  std::vector<fabric::ProtocolEvent> protocol;
};

struct EngineOptions {
  TraceLevel level = TraceLevel::kFull;
  bool check_invariants = true;
  std::uint64_t seed = 0;
  int moe_circuits = 0;
  bool protocol_log = false;
};

struct Request {
  std::int64_t user_id = 0;
  std::uint64_t prompt_len = 0;
  std::uint64_t max_new_tokens = 1;
  double arrival = 0;
};

// Event-driven pipeline over a credit-controlled fabric. Each micro-batch
// circulates as one tensor: host -> stage 0 -> ... -> stage S-1 -> host, and
// the host emits one token per member before sending the next pass. Requests
// join a micro-batch only at a pass boundary.
class Engine {
 public:
  // Return true to end the sequence at this token.
  using TokenHook =
      std::function<bool(std::int64_t user, std::uint64_t index, double time)>;
  using CompletionHook = std::function<void(const metrics::SequenceRecord&)>;
  // Fired when a sequence's prefill pass starts on stage 0.
  using StartHook = std::function<void(std::int64_t user, double time)>;

  Engine(const Deployment& deployment, const HardwareSpec& hw, MicroBatchPolicy policy,
         TimingModel timing, EngineOptions options = {});

  // Throws ConfigError for a zero token budget or an arrival in the past.
  void submit(const Request& request);
  void on_token(TokenHook hook) { token_hook_ = std::move(hook); }
  void on_complete(CompletionHook hook) { completion_hook_ = std::move(hook); }
  void on_prefill_start(StartHook hook) { start_hook_ = std::move(hook); }

  // Processes one event; false when the queue is empty.
  bool step();
  void run();
  // Processes every event with time <= t, then advances the clock to t.
  void run_until(double t);

  double now() const { return now_; }
  std::optional<double> next_event_time() const;
  std::size_t active_users() const;
  std::size_t pending_users() const { return pending_.size(); }
  std::size_t capacity() const;
  const fabric::Fabric& fabric() const { return fabric_; }

  // Completed sequences so far plus idle accounting. Leaves the engine empty.
  Trace finish();

 private:
  enum class Kind : std::uint8_t { kArrive, kStageDone, kAdmit };

  struct Pending {
    double time;
    std::uint64_t seq;
    Kind kind;
    fabric::Packet packet;
    int stage;
    fabric::TensorId tensor;

    bool operator>(const Pending& o) const {
      return time != o.time ? time > o.time : seq > o.seq;
    }
  };

  struct Member {
    Request request;
    std::uint64_t produced = 0;
    bool prefilled = false;
    metrics::SequenceRecord record;
  };

  struct MicroBatch {
    std::vector<Member> members;
    bool in_flight = false;
  };

  struct Pass {
    int micro_batch = 0;
    fabric::CircuitId circuit = 0;
    double stage_seconds = 0;
    std::vector<std::int64_t> prefill_users;
  };

  struct Stage {
    std::deque<fabric::TensorId> ready;
    std::unordered_map<fabric::TensorId, int> arrived;
    bool busy = false;
    double last_end = 0;
    std::vector<std::pair<double, double>> busy_intervals;
  };

  void schedule(double time, Kind kind, const fabric::Packet& packet = {}, int stage = -1,
                fabric::TensorId tensor = 0);
  void emit(EventKind kind, int stage, int micro_batch, std::int64_t user,
            double duration = 0);
  void handle_arrival(const fabric::Packet& packet);
  void handle_stage_done(int stage, fabric::TensorId tensor);
  void admit();
  void launch(int micro_batch);
  void try_start(int stage);
  void send_from_host(const std::vector<fabric::Packet>& packets);
  void dispatch(int stage, fabric::TensorId tensor, const std::vector<fabric::Packet>& packets);
  void complete_pass(fabric::TensorId tensor);
  double hop_after(int stage) const;  // stage -> stage + 1
  double feedback_hop() const;
  fabric::CircuitId pick_circuit(fabric::TensorId tensor) const;

  Deployment deployment_;
  MicroBatchPolicy policy_;
  TimingModel timing_;
  EngineOptions options_;
  fabric::Fabric fabric_;
  std::vector<int> stage_of_card_;
  std::vector<Stage> stages_;
  std::vector<MicroBatch> batches_;
  std::unordered_map<fabric::TensorId, Pass> passes_;
  std::deque<Request> pending_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  fabric::TensorId next_tensor_ = 0;
  double now_ = 0;
  Trace trace_;
  TokenHook token_hook_;
  CompletionHook completion_hook_;
  StartHook start_hook_;
};

struct Workload {
  std::uint64_t users = 1;
  std::uint64_t context_len = 0;
  std::uint64_t prefill_len = 0;
  std::uint64_t decode_len = 1;

  // Throws ConfigError unless decode_len >= 1 and prefill + decode <= context.
  void validate() const;
};

// Static mini-batch: every user submitted at t = 0. Throws CapacityError when
// users exceed the plan's max_users(context_len), ConfigError when both
// stage times are zero.
Trace simulate(const Deployment& deployment, const HardwareSpec& hw,
               const MicroBatchPolicy& policy, const TimingModel& timing,
               const Workload& workload, EngineOptions options = {});

// Sum of stage -> stage hops, and the host return path to stage 0.
double forward_hop_total(const Deployment& deployment, const TimingModel& hops);
double feedback_hop(const Deployment& deployment, const TimingModel& hops);

// decode_stage_seconds = (target_itl - hops) / stage_count. Throws
// CalibrationError when the hops alone reach the target.
TimingModel calibrate(const Deployment& deployment, double target_itl,
                      const TimingModel& hops);

// Per-token prefill time so a lone prompt of prompt_len reaches its first
// token after target_ttft.
double prefill_calibrate(const Deployment& deployment, double target_ttft,
                         std::uint64_t prompt_len, const TimingModel& hops);

// One single-card stage per pipeline position, laid out like plan_model.
Deployment uniform_deployment(int stages, const HardwareSpec& hw,
                              Bytes kv_budget_bytes = Bytes{1} << 40);

nlohmann::json to_json(const TimingModel& t);
TimingModel timing_from_json(const nlohmann::json& j);

// JSON lines: one meta line, the events, one line per sequence, a summary.
void write_trace(std::ostream& out, const Trace& trace);
// Inverse of write_trace for the meta, sequence and summary lines.
Trace read_trace(std::istream& in);

}  // namespace cardrack::engine
