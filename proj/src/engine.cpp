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

#include "cardrack/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "cardrack/error.hpp"

namespace cardrack::engine {

using fabric::kHost;
using fabric::Packet;
using fabric::PacketKind;
using fabric::TensorId;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double stage_hop(const Deployment& d, const TimingModel& t, int from, int to) {
  return d.node_of_stage(from) == d.node_of_stage(to) ? t.intra_node_hop
                                                      : t.inter_node_hop;
}

}  // namespace

void TimingModel::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"decode_stage_seconds", decode_stage_seconds},
      {"prefill_stage_seconds_per_token", prefill_stage_seconds_per_token},
      {"intra_node_hop", intra_node_hop},
      {"inter_node_hop", inter_node_hop}};
  for (const auto& [name, v] : fields) {
    if (!std::isfinite(v) || v < 0) {
      throw ConfigError(std::string("timing.") + name + " must be finite and >= 0");
    }
  }
}

TimingModel TimingModel::hops_from(const HardwareSpec& hw) {
  TimingModel t;
  t.intra_node_hop = hw.intra_node_hop_latency;
  t.inter_node_hop = hw.inter_node_hop_latency;
  return t;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kStageStart: return "stage_start";
    case EventKind::kStageEnd: return "stage_end";
    case EventKind::kHop: return "hop";
    case EventKind::kTokenEmitted: return "token_emitted";
    case EventKind::kPrefillDone: return "prefill_done";
    case EventKind::kIdle: return "idle";
  }
  return "unknown";
}

Engine::Engine(const Deployment& deployment, const HardwareSpec& hw,
               MicroBatchPolicy policy, TimingModel timing, EngineOptions options)
    : deployment_(deployment),
      policy_(policy),
      timing_(timing),
      options_(options),
      fabric_(fabric::build_circuits(deployment.plan, hw, options.moe_circuits),
              {hw.framebuffer_slots,
               deployment.plan.activation_bytes *
                   static_cast<Bytes>(std::max(policy.micro_batch_size, 1)),
               0}) {
  timing_.validate();
  if (timing_.decode_stage_seconds == 0 && timing_.prefill_stage_seconds_per_token == 0) {
    throw ConfigError("degenerate timing: decode and prefill stage times are both zero");
  }
  if (policy_.micro_batch_size < 1 || policy_.num_micro_batches < 1) {
    throw ConfigError("micro-batch policy needs size >= 1 and count >= 1");
  }
  const Plan& plan = deployment_.plan;
  fabric_.enable_log(options_.protocol_log);
  stage_of_card_.assign(plan.total_cards, -1);
  for (const PipelineStage& s : plan.stages) {
    for (int card : s.card_ids) stage_of_card_.at(card) = s.stage_index;
  }
  stages_.resize(plan.stages.size());
  batches_.resize(policy_.num_micro_batches);

  trace_.meta.plan_hash = plan_hash(deployment_);
  trace_.meta.model = plan.model_name;
  trace_.meta.timing = timing_;
  trace_.meta.seed = options_.seed;
  trace_.meta.policy = policy_;
  trace_.meta.stage_count = static_cast<int>(plan.stages.size());
  trace_.meta.circuits = static_cast<int>(fabric_.circuits().size());
}

std::size_t Engine::capacity() const {
  return static_cast<std::size_t>(policy_.micro_batch_size) *
         static_cast<std::size_t>(policy_.num_micro_batches);
}

std::size_t Engine::active_users() const {
  std::size_t n = 0;
  for (const MicroBatch& mb : batches_) n += mb.members.size();
  return n;
}

std::optional<double> Engine::next_event_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().time;
}

void Engine::submit(const Request& request) {
  if (request.max_new_tokens < 1) {
    throw ConfigError("request " + std::to_string(request.user_id) +
                      ": max_new_tokens must be >= 1");
  }
  if (request.arrival < now_) {
    throw ConfigError("request " + std::to_string(request.user_id) +
                      " arrives before the current simulation time");
  }
  pending_.push_back(request);
  schedule(request.arrival, Kind::kAdmit);
}

void Engine::schedule(double time, Kind kind, const Packet& packet, int stage,
                      TensorId tensor) {
  queue_.push({time, next_seq_++, kind, packet, stage, tensor});
}

void Engine::emit(EventKind kind, int stage, int micro_batch, std::int64_t user,
                  double duration) {
  if (options_.level == TraceLevel::kTokens && kind != EventKind::kTokenEmitted &&
      kind != EventKind::kPrefillDone) {
    return;
  }
  trace_.events.push_back({now_, kind, stage, micro_batch, user, duration});
}

bool Engine::step() {
  if (queue_.empty()) return false;
  const Pending ev = queue_.top();
  queue_.pop();
  now_ = ev.time;
  fabric_.set_time(now_);
  switch (ev.kind) {
    case Kind::kArrive: handle_arrival(ev.packet); break;
    case Kind::kStageDone: handle_stage_done(ev.stage, ev.tensor); break;
    case Kind::kAdmit: admit(); break;
  }
  if (options_.check_invariants) fabric_.check_invariants();
  return true;
}

void Engine::run() {
  while (step()) {
  }
}

void Engine::run_until(double t) {
  while (!queue_.empty() && queue_.top().time <= t) step();
  now_ = std::max(now_, t);
}

double Engine::hop_after(int stage) const {
  return stage_hop(deployment_, timing_, stage, stage + 1);
}

double Engine::feedback_hop() const {
  return engine::feedback_hop(deployment_, timing_);
}

fabric::CircuitId Engine::pick_circuit(TensorId tensor) const {
  const auto count = fabric_.circuits().size();
  if (count == 1) return 0;
  const std::uint64_t h =
      splitmix64(options_.seed ^ splitmix64(static_cast<std::uint64_t>(tensor)));
  return static_cast<fabric::CircuitId>(h % count);
}

void Engine::admit() {
  for (std::size_t i = 0; i < batches_.size(); ++i) {
    MicroBatch& mb = batches_[i];
    if (mb.in_flight) continue;
    auto it = pending_.begin();
    while (it != pending_.end() &&
           mb.members.size() < static_cast<std::size_t>(policy_.micro_batch_size)) {
      if (it->arrival > now_) {
        ++it;
        continue;
      }
      Member m;
      m.request = *it;
      m.record.id = it->user_id;
      m.record.n_in = it->prompt_len;
      mb.members.push_back(std::move(m));
      it = pending_.erase(it);
    }
    if (!mb.members.empty()) launch(static_cast<int>(i));
  }
}

void Engine::launch(int micro_batch) {
  MicroBatch& mb = batches_[micro_batch];
  const TensorId tensor = next_tensor_++;
  Pass pass;
  pass.micro_batch = micro_batch;
  pass.circuit = pick_circuit(tensor);
  bool decoding = false;
  std::uint64_t prompt_tokens = 0;
  for (Member& m : mb.members) {
    if (m.prefilled) {
      decoding = true;
    } else {
      prompt_tokens += m.request.prompt_len;
      pass.prefill_users.push_back(m.request.user_id);
      m.prefilled = true;
    }
  }
  pass.stage_seconds = (decoding ? timing_.decode_stage_seconds : 0.0) +
                       timing_.prefill_stage_seconds_per_token *
                           static_cast<double>(prompt_tokens);
  mb.in_flight = true;
  passes_.emplace(tensor, std::move(pass));

  fabric_.select_circuit(passes_[tensor].circuit);
  const auto sent = fabric_.inject(tensor);
  if (sent.status == fabric::SendStatus::kSent) send_from_host(sent.packets);
}

void Engine::send_from_host(const std::vector<Packet>& packets) {
  const double latency = feedback_hop();
  for (const Packet& p : packets) {
    schedule(now_ + latency, Kind::kArrive, p);
    emit(EventKind::kHop, -1, passes_.at(p.tensor).micro_batch, -1, latency);
  }
}

void Engine::handle_arrival(const Packet& packet) {
  const auto result = fabric_.deliver(packet);
  if (packet.kind == PacketKind::kOutput) {
    if (packet.destination == kHost) {
      complete_pass(packet.tensor);
      return;
    }
    const int s = stage_of_card_.at(packet.destination);
    const Pass& pass = passes_.at(packet.tensor);
    const auto needed = fabric_.circuit(pass.circuit).hops[s].cards.size();
    Stage& stage = stages_[s];
    if (needed > 1) {
      int& count = stage.arrived[packet.tensor];
      if (static_cast<std::size_t>(++count) < needed) return;
      stage.arrived.erase(packet.tensor);
    }
    stage.ready.push_back(packet.tensor);
    try_start(s);
    return;
  }
  for (const fabric::Released& r : result.released) {
    if (r.card == kHost) {
      send_from_host(r.packets);
    } else {
      dispatch(stage_of_card_.at(r.card), r.tensor, r.packets);
    }
  }
}

void Engine::try_start(int s) {
  Stage& stage = stages_[s];
  if (stage.busy || stage.ready.empty()) return;
  const TensorId tensor = stage.ready.front();
  stage.ready.pop_front();
  const Pass& pass = passes_.at(tensor);
  stage.busy = true;
  if (now_ > stage.last_end) emit(EventKind::kIdle, s, -1, -1, now_ - stage.last_end);
  if (s == 0) {
    for (Member& m : batches_[pass.micro_batch].members) {
      if (std::find(pass.prefill_users.begin(), pass.prefill_users.end(),
                    m.request.user_id) != pass.prefill_users.end()) {
        m.record.t_start = now_;
        if (start_hook_) start_hook_(m.request.user_id, now_);
      }
    }
  }
  emit(EventKind::kStageStart, s, pass.micro_batch, -1);
  stage.busy_intervals.emplace_back(now_, now_ + pass.stage_seconds);
  ++trace_.stage_executions;
  schedule(now_ + pass.stage_seconds, Kind::kStageDone, {}, s, tensor);
}

void Engine::handle_stage_done(int s, TensorId tensor) {
  Stage& stage = stages_[s];
  stage.busy = false;
  stage.last_end = now_;
  const Pass& pass = passes_.at(tensor);
  emit(EventKind::kStageEnd, s, pass.micro_batch, -1);
  const auto& hop = fabric_.circuit(pass.circuit).hops[s];
  const auto sent = fabric_.try_send(hop.lead(), pass.circuit, tensor);
  if (sent.status == fabric::SendStatus::kSent) dispatch(s, tensor, sent.packets);
  try_start(s);
}

void Engine::dispatch(int s, TensorId tensor, const std::vector<Packet>& packets) {
  const Pass& pass = passes_.at(tensor);
  const int last = static_cast<int>(stages_.size()) - 1;
  const double out_latency = s == last ? 0.0 : hop_after(s);
  for (const Packet& p : packets) {
    schedule(now_ + out_latency, Kind::kArrive, p);
    emit(EventKind::kHop, s, pass.micro_batch, -1, out_latency);
  }
  const double credit_latency = s == 0 ? feedback_hop() : hop_after(s - 1);
  for (fabric::CardId card : fabric_.circuit(pass.circuit).hops[s].cards) {
    schedule(now_ + credit_latency, Kind::kArrive, fabric_.consume_and_credit(card, tensor));
  }
}

void Engine::complete_pass(TensorId tensor) {
  auto node = passes_.extract(tensor);
  const int id = node.mapped().micro_batch;
  MicroBatch& mb = batches_[id];
  mb.in_flight = false;

  std::vector<Member> staying;
  for (Member& m : mb.members) {
    const std::uint64_t index = m.produced++;
    m.record.token_times.push_back(now_);
    if (index == 0) {
      m.record.t_first = now_;
      emit(EventKind::kPrefillDone, -1, id, m.request.user_id);
    }
    emit(EventKind::kTokenEmitted, -1, id, m.request.user_id);
    bool done = m.produced >= m.request.max_new_tokens;
    if (token_hook_ && token_hook_(m.request.user_id, index, now_)) done = true;
    if (!done) {
      staying.push_back(std::move(m));
      continue;
    }
    m.record.t_end = now_;
    m.record.n_out = m.produced;
    if (completion_hook_) completion_hook_(m.record);
    trace_.sequences.push_back(std::move(m.record));
  }
  mb.members = std::move(staying);

  for (auto it = pending_.begin();
       it != pending_.end() &&
       mb.members.size() < static_cast<std::size_t>(policy_.micro_batch_size);) {
    if (it->arrival > now_) {
      ++it;
      continue;
    }
    Member m;
    m.request = *it;
    m.record.id = it->user_id;
    m.record.n_in = it->prompt_len;
    mb.members.push_back(std::move(m));
    it = pending_.erase(it);
  }
  if (!mb.members.empty()) launch(id);
}

Trace Engine::finish() {
  Trace out = std::move(trace_);
  out.protocol = fabric_.log();
  std::sort(out.sequences.begin(), out.sequences.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  if (!out.sequences.empty()) {
    double lo = out.sequences.front().t_first;
    double hi = out.sequences.front().t_end;
    for (const auto& s : out.sequences) {
      lo = std::max(lo, s.t_first);
      hi = std::min(hi, s.t_end);
    }
    if (hi > lo) {
      double busy = 0;
      for (const Stage& stage : stages_) {
        for (const auto& [a, b] : stage.busy_intervals) {
          busy += std::max(0.0, std::min(b, hi) - std::max(a, lo));
        }
      }
      out.idle_fraction = 1.0 - busy / (static_cast<double>(stages_.size()) * (hi - lo));
    }
  }
  trace_ = Trace{};
  trace_.meta = out.meta;
  return out;
}

void Workload::validate() const {
  if (users < 1) throw ConfigError("workload.users must be >= 1");
  if (decode_len < 1) throw ConfigError("workload.decode_len must be >= 1");
  if (prefill_len + decode_len > context_len) {
    throw ConfigError("workload: prefill_len + decode_len exceeds context_len");
  }
}

Trace simulate(const Deployment& deployment, const HardwareSpec& hw,
               const MicroBatchPolicy& policy, const TimingModel& timing,
               const Workload& workload, EngineOptions options) {
  workload.validate();
  const std::uint64_t limit = deployment.plan.max_users(workload.context_len);
  if (workload.users > limit) {
    throw CapacityError(std::to_string(workload.users) + " users exceed max_users(" +
                        std::to_string(workload.context_len) + ") = " +
                        std::to_string(limit));
  }
  Engine engine(deployment, hw, policy, timing, options);
  if (workload.users > engine.capacity()) {
    throw ConfigError("micro-batch policy holds " + std::to_string(engine.capacity()) +
                      " users, workload has " + std::to_string(workload.users));
  }
  for (std::uint64_t u = 0; u < workload.users; ++u) {
    engine.submit({static_cast<std::int64_t>(u), workload.prefill_len, workload.decode_len, 0});
  }
  engine.run();
  return engine.finish();
}

double forward_hop_total(const Deployment& deployment, const TimingModel& hops) {
  double total = 0;
  const int n = static_cast<int>(deployment.plan.stages.size());
  for (int s = 0; s + 1 < n; ++s) total += stage_hop(deployment, hops, s, s + 1);
  return total;
}

double feedback_hop(const Deployment& deployment, const TimingModel& hops) {
  const int n = static_cast<int>(deployment.plan.stages.size());
  if (n == 0) throw ConfigError("deployment has no stages");
  return stage_hop(deployment, hops, n - 1, 0);
}

TimingModel calibrate(const Deployment& deployment, double target_itl,
                      const TimingModel& hops) {
  const double overhead = forward_hop_total(deployment, hops) + feedback_hop(deployment, hops);
  if (!(target_itl > overhead)) {
    throw CalibrationError("target ITL " + std::to_string(target_itl) +
                           " s does not exceed the pipeline hop total " +
                           std::to_string(overhead) + " s");
  }
  TimingModel t = hops;
  t.decode_stage_seconds =
      (target_itl - overhead) / static_cast<double>(deployment.plan.stages.size());
  return t;
}

double prefill_calibrate(const Deployment& deployment, double target_ttft,
                         std::uint64_t prompt_len, const TimingModel& hops) {
  if (prompt_len == 0) throw CalibrationError("prefill calibration needs prompt_len >= 1");
  const double overhead = forward_hop_total(deployment, hops);
  if (!(target_ttft > overhead)) {
    throw CalibrationError("target TTFT " + std::to_string(target_ttft) +
                           " s does not exceed the forward hop total " +
                           std::to_string(overhead) + " s");
  }
  return (target_ttft - overhead) /
         (static_cast<double>(deployment.plan.stages.size()) *
          static_cast<double>(prompt_len));
}

Deployment uniform_deployment(int stages, const HardwareSpec& hw, Bytes kv_budget_bytes) {
  if (stages < 1) throw ConfigError("uniform_deployment: stages must be >= 1");
  Plan plan;
  plan.model_name = "uniform-" + std::to_string(stages);
  plan.kv_budget_bytes = kv_budget_bytes;
  plan.kv_bytes_per_token = 1;
  plan.activation_bytes = 1;
  for (int s = 0; s < stages; ++s) {
    PipelineStage stage;
    stage.stage_index = s;
    stage.kind = BlockKind::kLayer;
    stage.layer_index = s;
    stage.card_ids = {s};
    plan.stages.push_back(stage);
  }
  plan.total_cards = stages;
  plan.stage_count = stages;
  return pack(plan, hw);
}

nlohmann::json to_json(const TimingModel& t) {
  return {{"decode_stage_seconds", t.decode_stage_seconds},
          {"prefill_stage_seconds_per_token", t.prefill_stage_seconds_per_token},
          {"intra_node_hop", t.intra_node_hop},
          {"inter_node_hop", t.inter_node_hop}};
}

TimingModel timing_from_json(const nlohmann::json& j) {
  TimingModel t;
  t.decode_stage_seconds = j.at("decode_stage_seconds").get<double>();
  t.prefill_stage_seconds_per_token = j.at("prefill_stage_seconds_per_token").get<double>();
  t.intra_node_hop = j.at("intra_node_hop").get<double>();
  t.inter_node_hop = j.at("inter_node_hop").get<double>();
  return t;
}

void write_trace(std::ostream& out, const Trace& trace) {
  const RunMeta& m = trace.meta;
  out << nlohmann::json{{"type", "meta"},
                        {"model", m.model},
                        {"plan_hash", m.plan_hash},
                        {"seed", m.seed},
                        {"timing", to_json(m.timing)},
                        {"micro_batch_size", m.policy.micro_batch_size},
                        {"num_micro_batches", m.policy.num_micro_batches},
                        {"stage_count", m.stage_count},
                        {"circuits", m.circuits}}
             .dump()
      << '\n';
  for (const Event& e : trace.events) {
    out << nlohmann::json{{"type", "event"},
                          {"t", e.time},
                          {"kind", to_string(e.kind)},
                          {"stage", e.stage_index},
                          {"mb", e.micro_batch_id},
                          {"user", e.user_id},
                          {"dur", e.duration}}
               .dump()
        << '\n';
  }
  for (const auto& s : trace.sequences) {
    nlohmann::json line = metrics::to_json(s);
    line["type"] = "sequence";
    out << line.dump() << '\n';
  }
  out << nlohmann::json{{"type", "summary"},
                        {"idle_fraction", trace.idle_fraction
                                              ? nlohmann::json(*trace.idle_fraction)
                                              : nlohmann::json(nullptr)},
                        {"stage_executions", trace.stage_executions},
                        {"sequences", trace.sequences.size()}}
             .dump()
      << '\n';
}

Trace read_trace(std::istream& in) {
  Trace t;
  std::string line;
  std::size_t number = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "meta") {
        have_meta = true;
        t.meta.model = j.at("model").get<std::string>();
        t.meta.plan_hash = j.at("plan_hash").get<std::uint64_t>();
        t.meta.seed = j.at("seed").get<std::uint64_t>();
        t.meta.timing = timing_from_json(j.at("timing"));
        t.meta.policy.micro_batch_size = j.at("micro_batch_size").get<int>();
        t.meta.policy.num_micro_batches = j.at("num_micro_batches").get<int>();
        t.meta.stage_count = j.at("stage_count").get<int>();
        t.meta.circuits = j.at("circuits").get<int>();
      } else if (type == "sequence") {
        t.sequences.push_back(metrics::sequence_from_json(j));
      } else if (type == "summary") {
        if (!j.at("idle_fraction").is_null()) {
          t.idle_fraction = j.at("idle_fraction").get<double>();
        }
        t.stage_executions = j.at("stage_executions").get<std::uint64_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("trace line " + std::to_string(number) + ": " + e.what());
    }
  }
  if (!have_meta) throw ConfigError("trace has no meta line");
  return t;
}

}  // namespace cardrack::engine
