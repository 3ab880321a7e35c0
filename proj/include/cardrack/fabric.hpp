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
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cardrack/core.hpp"
#include "cardrack/planner.hpp"

namespace cardrack::fabric {

using CardId = int;
using CircuitId = int;
using TensorId = std::int64_t;

// Host memory: source of entry tensors and sink of final outputs.
inline constexpr CardId kHost = -1;

enum class PacketKind { kOutput, kInput, kCredit };

std::string_view to_string(PacketKind kind);

struct Packet {
  PacketKind kind = PacketKind::kOutput;
  CircuitId circuit = 0;
  TensorId tensor = 0;
  CardId source = kHost;
  CardId destination = kHost;
  Bytes size_bytes = 0;
  // Position in the per-edge stream of this packet class.
  std::uint64_t sequence = 0;
};

struct TransferDescriptor {
  int source_slot_class = 0;
  CardId destination = kHost;
  int destination_slot_class = 0;
  PacketKind kind = PacketKind::kOutput;
};

// Precomputed before a run and never modified while tensors flow.
struct DescriptorChain {
  std::vector<TransferDescriptor> descriptors;
};

struct CircuitHop {
  int stage_index = 0;
  std::vector<CardId> cards;

  CardId lead() const { return cards.front(); }
};

// A routed path of card groups. The lead (first) card of each hop scatters
// its output to every card of the next hop; the last hop returns to host.
struct VirtualCircuit {
  CircuitId id = 0;
  std::vector<CircuitHop> hops;
  // Installed per participating card; kHost holds the entry chain.
  std::map<CardId, DescriptorChain> chains;

  const std::vector<CardId>& entry_cards() const { return hops.front().cards; }
  const std::vector<CardId>& output_cards() const { return hops.back().cards; }
  std::vector<CardId> cards() const;
};

// Fills `circuit.chains` from its hops: host entry chain, lead-card scatter
// to the next hop, credit descriptors back to each card's upstream lead.
void install_chains(VirtualCircuit& circuit);

// One circuit for dense plans. MoE plans get `moe_circuits` circuits (0 picks
// min(widest expert stage, framebuffer slots)); circuit c routes each expert
// stage through the cards whose index is congruent to c. Throws ConfigError
// for an empty plan.
std::vector<VirtualCircuit> build_circuits(const Plan& plan, const HardwareSpec& hw,
                                           int moe_circuits = 0);

enum class SendStatus { kSent, kHeld };

struct SendResult {
  SendStatus status = SendStatus::kHeld;
  std::vector<Packet> packets;
};

// A previously held output that left its card when credits arrived.
struct Released {
  CardId card = kHost;
  TensorId tensor = 0;
  CircuitId circuit = 0;
  std::vector<Packet> packets;
};

struct DeliverResult {
  Packet packet;  // data packets come back converted to kInput
  std::vector<Released> released;
};

struct EdgeCounters {
  CardId source = kHost;
  CardId destination = kHost;
  bool to_host = false;
  int capacity = 0;
  int credits = 0;
  int occupied = 0;
  int data_in_flight = 0;
  int credits_in_flight = 0;
};

enum class ProtocolEventKind { kSend, kHold, kDeliver, kCredit };

struct ProtocolEvent {
  double time = 0;
  ProtocolEventKind kind = ProtocolEventKind::kSend;
  CardId source = kHost;
  CardId destination = kHost;
  TensorId tensor = 0;
  int credits = 0;
  int occupied = 0;
  int in_flight = 0;
};

struct FabricOptions {
  int framebuffer_slots = 8;
  Bytes tensor_bytes = 0;
  // Test hook: program every credit counter with this value instead of the
  // destination's share of slots. Zero leaves counters correct.
  int credit_limit_override = 0;
};

// Untimed credit-flow-control state for a set of installed circuits. Callers
// own packet transport: every packet returned here must eventually be passed
// back to deliver(), per edge in the order it was produced.
class Fabric {
 public:
  Fabric(std::vector<VirtualCircuit> circuits, FabricOptions options);

  const std::vector<VirtualCircuit>& circuits() const;
  const VirtualCircuit& circuit(CircuitId id) const;
  int card_count() const;
  int slots_per_card() const;

  void select_circuit(CircuitId id);
  CircuitId active_circuit() const { return active_; }

  // Host entry on the active circuit.
  SendResult inject(TensorId tensor) { return try_send(kHost, active_, tensor); }

  // Forwards the output of `tensor` from `card`. Sent when every downstream
  // edge has a credit and nothing is queued ahead at the card; Held otherwise.
  SendResult try_send(CardId card, CircuitId circuit, TensorId tensor);

  // Output packets land in a free slot as input; credit packets restore one
  // credit and may release held outputs at the credited card in FIFO order.
  DeliverResult deliver(const Packet& packet);

  // Frees the slot holding `tensor` and returns the credit packet for its
  // upstream sender.
  Packet consume_and_credit(CardId card, TensorId tensor);

  int occupied(CardId card) const;
  bool holds(CardId card, TensorId tensor) const;
  // Oldest input on `card` whose output has not been sent or held.
  std::optional<TensorId> next_resident(CardId card) const;
  std::size_t held_count(CardId card) const;
  std::uint64_t sink_received() const { return sink_received_; }

  std::vector<EdgeCounters> edges() const;
  EdgeCounters edge(CardId source, CardId destination) const;

  // Throws ProtocolFault when credit conservation or a bound is broken.
  void check_invariants() const;

  // Canonical byte encoding of the mutable state.
  void encode(std::string& out) const;

  void set_time(double time) { time_ = time; }
  void enable_log(bool on) { logging_ = on; }
  const std::vector<ProtocolEvent>& log() const { return log_; }

 private:
  enum class SlotState : std::uint8_t { kFree, kResident, kHeld, kSent };

  struct Slot {
    TensorId tensor = -1;
    int edge = -1;
    CircuitId circuit = 0;
    SlotState state = SlotState::kFree;
    std::uint64_t arrival = 0;
  };

  struct HeldSend {
    CircuitId circuit = 0;
    TensorId tensor = 0;
  };

  struct EdgeState {
    int credits = 0;
    int data_in_flight = 0;
    int credits_in_flight = 0;
    std::uint64_t next_data_seq = 0;
    std::uint64_t expected_data_seq = 0;
    std::uint64_t next_credit_seq = 0;
    std::uint64_t expected_credit_seq = 0;
  };

  struct EdgeInfo {
    CardId source = kHost;
    CardId destination = kHost;
    bool to_host = false;
    int capacity = 0;
  };

  struct Topology;

  int index_of(CardId card) const;
  int find_edge(CardId source, CardId destination) const;
  const DescriptorChain& chain(CardId card, CircuitId circuit) const;
  bool credits_available(CardId card, const DescriptorChain& chain) const;
  std::vector<Packet> send_now(CardId card, CircuitId circuit, TensorId tensor,
                               const DescriptorChain& chain);
  Slot* find_slot(CardId card, TensorId tensor);
  const Slot* find_slot(CardId card, TensorId tensor) const;
  int occupied_by_edge(int edge) const;
  void record(ProtocolEventKind kind, int edge, TensorId tensor);

  std::shared_ptr<const Topology> topo_;
  std::vector<Slot> slots_;  // card-major, slots_per_card entries per card
  std::vector<std::deque<HeldSend>> held_;  // index_of(card)
  std::vector<std::uint64_t> arrivals_;
  std::vector<EdgeState> edge_state_;
  std::uint64_t sink_received_ = 0;
  CircuitId active_ = 0;
  double time_ = 0;
  bool logging_ = false;
  std::vector<ProtocolEvent> log_;
};

void write_protocol_log(std::ostream& out, const std::vector<ProtocolEvent>& log);

}  // namespace cardrack::fabric
