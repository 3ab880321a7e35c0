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

#include "cardrack/fabric.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "cardrack/error.hpp"

namespace cardrack::fabric {

std::string_view to_string(PacketKind kind) {
  switch (kind) {
    case PacketKind::kOutput: return "output";
    case PacketKind::kInput: return "input";
    case PacketKind::kCredit: return "credit";
  }
  return "unknown";
}

std::vector<CardId> VirtualCircuit::cards() const {
  std::set<CardId> unique;
  for (const CircuitHop& hop : hops) unique.insert(hop.cards.begin(), hop.cards.end());
  return {unique.begin(), unique.end()};
}

namespace {

std::string card_name(CardId card) {
  return card == kHost ? std::string("host") : "card " + std::to_string(card);
}

std::vector<CardId> expert_subset(const std::vector<int>& cards, int circuit,
                                  int circuits) {
  std::vector<CardId> subset;
  for (std::size_t j = 0; j < cards.size(); ++j) {
    if (static_cast<int>(j % circuits) == circuit) subset.push_back(cards[j]);
  }
  if (subset.empty()) subset.push_back(cards[circuit % cards.size()]);
  return subset;
}

}  // namespace

void install_chains(VirtualCircuit& circuit) {
  if (circuit.hops.empty()) throw ConfigError("install_chains: circuit has no hops");
  circuit.chains.clear();
  const auto& hops = circuit.hops;
  DescriptorChain& entry = circuit.chains[kHost];
  for (CardId card : hops.front().cards) {
    entry.descriptors.push_back({0, card, 0, PacketKind::kOutput});
  }
  for (std::size_t i = 0; i < hops.size(); ++i) {
    const CardId upstream = i == 0 ? kHost : hops[i - 1].lead();
    for (CardId card : hops[i].cards) {
      DescriptorChain& chain = circuit.chains[card];
      if (card == hops[i].lead()) {
        if (i + 1 < hops.size()) {
          for (CardId next : hops[i + 1].cards) {
            chain.descriptors.push_back({0, next, 0, PacketKind::kOutput});
          }
        } else {
          chain.descriptors.push_back({0, kHost, 0, PacketKind::kOutput});
        }
      }
      chain.descriptors.push_back({0, upstream, 0, PacketKind::kCredit});
    }
  }
}

std::vector<VirtualCircuit> build_circuits(const Plan& plan, const HardwareSpec& hw,
                                           int moe_circuits) {
  if (plan.stages.empty()) throw ConfigError("build_circuits: plan has no stages");

  std::size_t widest_expert = 0;
  for (const PipelineStage& s : plan.stages) {
    if (s.kind == BlockKind::kExpertGroup) {
      widest_expert = std::max(widest_expert, s.card_ids.size());
    }
  }

  int count = 1;
  if (widest_expert > 0) {
    count = moe_circuits > 0
                ? moe_circuits
                : static_cast<int>(std::min<std::size_t>(widest_expert, hw.framebuffer_slots));
    if (count > hw.framebuffer_slots) {
      throw ConfigError("build_circuits: " + std::to_string(count) +
                        " expert circuits exceed " +
                        std::to_string(hw.framebuffer_slots) + " framebuffer slots");
    }
  }

  std::vector<VirtualCircuit> circuits;
  for (int c = 0; c < count; ++c) {
    VirtualCircuit circuit;
    circuit.id = c;
    for (const PipelineStage& s : plan.stages) {
      CircuitHop hop;
      hop.stage_index = s.stage_index;
      hop.cards = s.kind == BlockKind::kExpertGroup
                      ? expert_subset(s.card_ids, c, count)
                      : std::vector<CardId>(s.card_ids.begin(), s.card_ids.end());
      circuit.hops.push_back(std::move(hop));
    }
    install_chains(circuit);
    circuits.push_back(std::move(circuit));
  }
  return circuits;
}

struct Fabric::Topology {
  std::vector<VirtualCircuit> circuits;
  int card_count = 0;
  int slots = 0;
  Bytes tensor_bytes = 0;
  // Indexed by index_of(card).
  std::vector<std::map<CircuitId, DescriptorChain>> descriptors;
  std::vector<std::vector<std::pair<CardId, int>>> out_edges;
  std::vector<EdgeInfo> edges;
};

Fabric::Fabric(std::vector<VirtualCircuit> circuits, FabricOptions options) {
  if (circuits.empty()) throw ConfigError("fabric: no circuits installed");
  if (options.framebuffer_slots < 1) {
    throw ConfigError("fabric: framebuffer_slots must be >= 1");
  }
  auto topo = std::make_shared<Topology>();
  topo->slots = options.framebuffer_slots;
  topo->tensor_bytes = options.tensor_bytes;

  CardId max_card = -1;
  for (std::size_t i = 0; i < circuits.size(); ++i) {
    if (circuits[i].id != static_cast<CircuitId>(i)) {
      throw ConfigError("fabric: circuit ids must be 0..n-1 in order");
    }
    if (circuits[i].hops.empty()) throw ConfigError("fabric: circuit with no hops");
    for (const CircuitHop& hop : circuits[i].hops) {
      if (hop.cards.empty()) throw ConfigError("fabric: hop with no cards");
      for (CardId c : hop.cards) max_card = std::max(max_card, c);
    }
  }
  topo->card_count = max_card + 1;
  topo->descriptors.resize(topo->card_count + 1);
  topo->out_edges.resize(topo->card_count + 1);

  auto slot_index = [&](CardId card) {
    return card == kHost ? topo->card_count : card;
  };

  std::map<std::pair<CardId, CardId>, int> edge_ids;
  for (const VirtualCircuit& circuit : circuits) {
    for (const auto& [card, chain] : circuit.chains) {
      if (card != kHost && (card < 0 || card >= topo->card_count)) {
        throw ConfigError("fabric: descriptor chain on unknown " + card_name(card));
      }
      topo->descriptors[slot_index(card)][circuit.id] = chain;
      for (const TransferDescriptor& d : chain.descriptors) {
        if (d.destination != kHost &&
            (d.destination < 0 || d.destination >= topo->card_count)) {
          throw ConfigError("fabric: descriptor targets unknown " +
                            card_name(d.destination));
        }
        if (d.kind != PacketKind::kOutput) continue;
        auto key = std::make_pair(card, d.destination);
        if (edge_ids.count(key) == 0) {
          edge_ids[key] = static_cast<int>(topo->edges.size());
          topo->edges.push_back({card, d.destination, d.destination == kHost, 0});
          topo->out_edges[slot_index(card)].push_back(
              {d.destination, edge_ids[key]});
        }
      }
    }
  }

  // Each destination's slots are shared evenly among its distinct sources.
  std::map<CardId, int> sources;
  for (const EdgeInfo& e : topo->edges) {
    if (!e.to_host) ++sources[e.destination];
  }
  for (EdgeInfo& e : topo->edges) {
    if (e.to_host) continue;
    e.capacity = options.credit_limit_override > 0
                     ? options.credit_limit_override
                     : topo->slots / sources[e.destination];
    if (e.capacity < 1) {
      throw ConfigError("fabric: " + card_name(e.destination) + " has " +
                        std::to_string(sources[e.destination]) +
                        " upstream sources but only " +
                        std::to_string(topo->slots) + " framebuffer slots");
    }
  }

  topo->circuits = std::move(circuits);
  slots_.resize(static_cast<std::size_t>(topo->card_count) * topo->slots);
  held_.resize(topo->card_count + 1);
  arrivals_.assign(topo->card_count, 0);
  edge_state_.resize(topo->edges.size());
  for (std::size_t i = 0; i < topo->edges.size(); ++i) {
    edge_state_[i].credits = topo->edges[i].capacity;
  }
  topo_ = std::move(topo);
}

const std::vector<VirtualCircuit>& Fabric::circuits() const { return topo_->circuits; }

const VirtualCircuit& Fabric::circuit(CircuitId id) const {
  if (id < 0 || id >= static_cast<CircuitId>(topo_->circuits.size())) {
    throw ConfigError("fabric: unknown circuit " + std::to_string(id));
  }
  return topo_->circuits[id];
}

int Fabric::card_count() const { return topo_->card_count; }
int Fabric::slots_per_card() const { return topo_->slots; }

void Fabric::select_circuit(CircuitId id) {
  circuit(id);
  active_ = id;
}

int Fabric::index_of(CardId card) const {
  if (card == kHost) return topo_->card_count;
  if (card < 0 || card >= topo_->card_count) {
    throw ConfigError("fabric: unknown " + card_name(card));
  }
  return card;
}

int Fabric::find_edge(CardId source, CardId destination) const {
  for (const auto& [dst, id] : topo_->out_edges[index_of(source)]) {
    if (dst == destination) return id;
  }
  throw ProtocolFault("fabric: no edge " + card_name(source) + " -> " +
                      card_name(destination));
}

const DescriptorChain& Fabric::chain(CardId card, CircuitId circuit_id) const {
  circuit(circuit_id);
  const auto& store = topo_->descriptors[index_of(card)];
  auto it = store.find(circuit_id);
  if (it == store.end()) {
    throw ConfigError("fabric: " + card_name(card) +
                      " has no descriptor chain for circuit " +
                      std::to_string(circuit_id));
  }
  return it->second;
}

bool Fabric::credits_available(CardId card, const DescriptorChain& chain) const {
  bool any_output = false;
  for (const TransferDescriptor& d : chain.descriptors) {
    if (d.kind != PacketKind::kOutput) continue;
    any_output = true;
    const int e = find_edge(card, d.destination);
    if (!topo_->edges[e].to_host && edge_state_[e].credits == 0) return false;
  }
  if (!any_output) {
    throw ConfigError("fabric: " + card_name(card) + " has no output descriptors");
  }
  return true;
}

std::vector<Packet> Fabric::send_now(CardId card, CircuitId circuit_id,
                                     TensorId tensor, const DescriptorChain& chain) {
  std::vector<Packet> packets;
  for (const TransferDescriptor& d : chain.descriptors) {
    if (d.kind != PacketKind::kOutput) continue;
    const int e = find_edge(card, d.destination);
    EdgeState& st = edge_state_[e];
    if (!topo_->edges[e].to_host) --st.credits;
    ++st.data_in_flight;
    packets.push_back({PacketKind::kOutput, circuit_id, tensor, card, d.destination,
                       topo_->tensor_bytes, st.next_data_seq++});
    record(ProtocolEventKind::kSend, e, tensor);
  }
  return packets;
}

Fabric::Slot* Fabric::find_slot(CardId card, TensorId tensor) {
  const int base = index_of(card) * topo_->slots;
  for (int i = 0; i < topo_->slots; ++i) {
    Slot& s = slots_[base + i];
    if (s.state != SlotState::kFree && s.tensor == tensor) return &s;
  }
  return nullptr;
}

const Fabric::Slot* Fabric::find_slot(CardId card, TensorId tensor) const {
  return const_cast<Fabric*>(this)->find_slot(card, tensor);
}

SendResult Fabric::try_send(CardId card, CircuitId circuit_id, TensorId tensor) {
  const DescriptorChain& c = chain(card, circuit_id);
  Slot* slot = nullptr;
  if (card != kHost) {
    slot = find_slot(card, tensor);
    if (slot == nullptr) {
      throw ProtocolFault("fabric: tensor " + std::to_string(tensor) +
                          " is not resident on " + card_name(card));
    }
    if (slot->state != SlotState::kResident) {
      throw ProtocolFault("fabric: tensor " + std::to_string(tensor) + " on " +
                          card_name(card) + " was already forwarded");
    }
  }
  auto& queue = held_[index_of(card)];
  SendResult result;
  if (!queue.empty() || !credits_available(card, c)) {
    queue.push_back({circuit_id, tensor});
    if (slot) slot->state = SlotState::kHeld;
    result.status = SendStatus::kHeld;
    for (const TransferDescriptor& d : c.descriptors) {
      if (d.kind == PacketKind::kOutput) {
        record(ProtocolEventKind::kHold, find_edge(card, d.destination), tensor);
        break;
      }
    }
    return result;
  }
  result.status = SendStatus::kSent;
  result.packets = send_now(card, circuit_id, tensor, c);
  if (slot) slot->state = SlotState::kSent;
  return result;
}

DeliverResult Fabric::deliver(const Packet& packet) {
  DeliverResult result;
  result.packet = packet;
  if (packet.kind == PacketKind::kOutput) {
    const int e = find_edge(packet.source, packet.destination);
    EdgeState& st = edge_state_[e];
    if (packet.sequence != st.expected_data_seq || st.data_in_flight == 0) {
      throw ProtocolFault("fabric: out-of-order delivery on " +
                          card_name(packet.source) + " -> " +
                          card_name(packet.destination));
    }
    ++st.expected_data_seq;
    --st.data_in_flight;
    result.packet.kind = PacketKind::kInput;
    if (packet.destination == kHost) {
      ++sink_received_;
      record(ProtocolEventKind::kDeliver, e, packet.tensor);
      return result;
    }
    const int base = packet.destination * topo_->slots;
    Slot* free_slot = nullptr;
    for (int i = 0; i < topo_->slots; ++i) {
      if (slots_[base + i].state == SlotState::kFree) {
        free_slot = &slots_[base + i];
        break;
      }
    }
    if (free_slot == nullptr) {
      throw ProtocolFault("fabric: framebuffer overflow on " +
                          card_name(packet.destination) + " (tensor " +
                          std::to_string(packet.tensor) + ")");
    }
    *free_slot = {packet.tensor, e, packet.circuit, SlotState::kResident,
                  arrivals_[packet.destination]++};
    record(ProtocolEventKind::kDeliver, e, packet.tensor);
    return result;
  }

  if (packet.kind == PacketKind::kCredit) {
    // Credits travel against the data edge: source = consumer.
    const int e = find_edge(packet.destination, packet.source);
    EdgeState& st = edge_state_[e];
    if (packet.sequence != st.expected_credit_seq || st.credits_in_flight == 0) {
      throw ProtocolFault("fabric: unexpected credit on " +
                          card_name(packet.destination) + " -> " +
                          card_name(packet.source));
    }
    if (st.credits >= topo_->edges[e].capacity) {
      throw ProtocolFault("fabric: credit counter " + card_name(packet.destination) +
                          " -> " + card_name(packet.source) +
                          " would exceed its capacity");
    }
    ++st.expected_credit_seq;
    --st.credits_in_flight;
    ++st.credits;
    record(ProtocolEventKind::kCredit, e, packet.tensor);

    const CardId upstream = packet.destination;
    auto& queue = held_[index_of(upstream)];
    while (!queue.empty()) {
      const HeldSend head = queue.front();
      const DescriptorChain& c = chain(upstream, head.circuit);
      if (!credits_available(upstream, c)) break;
      queue.pop_front();
      Released r{upstream, head.tensor, head.circuit,
                 send_now(upstream, head.circuit, head.tensor, c)};
      if (upstream != kHost) find_slot(upstream, head.tensor)->state = SlotState::kSent;
      result.released.push_back(std::move(r));
    }
    return result;
  }

  throw ProtocolFault("fabric: input packets are produced by delivery, not routed");
}

Packet Fabric::consume_and_credit(CardId card, TensorId tensor) {
  if (card == kHost) throw ProtocolFault("fabric: host has no framebuffer to free");
  Slot* slot = find_slot(card, tensor);
  if (slot == nullptr) {
    throw ProtocolFault("fabric: credit for tensor " + std::to_string(tensor) +
                        " which does not occupy a slot on " + card_name(card));
  }
  if (slot->state == SlotState::kHeld) {
    throw ProtocolFault("fabric: tensor " + std::to_string(tensor) + " on " +
                        card_name(card) + " still has a held output");
  }
  const int e = slot->edge;
  const CircuitId circuit_id = slot->circuit;
  *slot = Slot{};
  EdgeState& st = edge_state_[e];
  ++st.credits_in_flight;
  return {PacketKind::kCredit, circuit_id, tensor, card, topo_->edges[e].source, 0,
          st.next_credit_seq++};
}

int Fabric::occupied(CardId card) const {
  if (card == kHost) return 0;
  const int base = index_of(card) * topo_->slots;
  int n = 0;
  for (int i = 0; i < topo_->slots; ++i) {
    if (slots_[base + i].state != SlotState::kFree) ++n;
  }
  return n;
}

bool Fabric::holds(CardId card, TensorId tensor) const {
  return card != kHost && find_slot(card, tensor) != nullptr;
}

std::optional<TensorId> Fabric::next_resident(CardId card) const {
  const int base = index_of(card) * topo_->slots;
  const Slot* best = nullptr;
  for (int i = 0; i < topo_->slots; ++i) {
    const Slot& s = slots_[base + i];
    if (s.state == SlotState::kResident && (!best || s.arrival < best->arrival)) {
      best = &s;
    }
  }
  if (!best) return std::nullopt;
  return best->tensor;
}

std::size_t Fabric::held_count(CardId card) const {
  return held_[index_of(card)].size();
}

int Fabric::occupied_by_edge(int edge) const {
  const EdgeInfo& info = topo_->edges[edge];
  if (info.to_host) return 0;
  const int base = info.destination * topo_->slots;
  int n = 0;
  for (int i = 0; i < topo_->slots; ++i) {
    const Slot& s = slots_[base + i];
    if (s.state != SlotState::kFree && s.edge == edge) ++n;
  }
  return n;
}

std::vector<EdgeCounters> Fabric::edges() const {
  std::vector<EdgeCounters> out;
  for (std::size_t e = 0; e < topo_->edges.size(); ++e) {
    const EdgeInfo& info = topo_->edges[e];
    const EdgeState& st = edge_state_[e];
    out.push_back({info.source, info.destination, info.to_host, info.capacity,
                   st.credits, occupied_by_edge(static_cast<int>(e)),
                   st.data_in_flight, st.credits_in_flight});
  }
  return out;
}

EdgeCounters Fabric::edge(CardId source, CardId destination) const {
  return edges()[find_edge(source, destination)];
}

void Fabric::check_invariants() const {
  for (std::size_t e = 0; e < topo_->edges.size(); ++e) {
    const EdgeInfo& info = topo_->edges[e];
    if (info.to_host) continue;
    const EdgeState& st = edge_state_[e];
    const int occupied = occupied_by_edge(static_cast<int>(e));
    if (st.credits < 0 || st.credits > info.capacity) {
      throw ProtocolFault("fabric: credit counter out of range on " +
                          card_name(info.source) + " -> " +
                          card_name(info.destination));
    }
    if (st.credits + occupied + st.data_in_flight + st.credits_in_flight !=
        info.capacity) {
      throw ProtocolFault("fabric: credit conservation broken on " +
                          card_name(info.source) + " -> " +
                          card_name(info.destination));
    }
  }
}

void Fabric::encode(std::string& out) const {
  auto put = [&out](std::int64_t wide) {
    const auto v = static_cast<std::int32_t>(wide);
    out.append(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put(active_);
  put(static_cast<std::int64_t>(sink_received_));
  for (int card = 0; card < topo_->card_count; ++card) {
    std::vector<const Slot*> used;
    for (int i = 0; i < topo_->slots; ++i) {
      const Slot& s = slots_[card * topo_->slots + i];
      if (s.state != SlotState::kFree) used.push_back(&s);
    }
    std::sort(used.begin(), used.end(),
              [](const Slot* a, const Slot* b) { return a->arrival < b->arrival; });
    put(static_cast<std::int64_t>(used.size()));
    for (const Slot* s : used) {
      put(s->tensor);
      put(s->edge);
      put(s->circuit);
      put(static_cast<std::int64_t>(s->state));
    }
  }
  for (const auto& queue : held_) {
    put(static_cast<std::int64_t>(queue.size()));
    for (const HeldSend& h : queue) {
      put(h.circuit);
      put(h.tensor);
    }
  }
  for (const EdgeState& st : edge_state_) {
    put(st.credits);
    put(st.data_in_flight);
    put(st.credits_in_flight);
    put(static_cast<std::int64_t>(st.next_data_seq));
    put(static_cast<std::int64_t>(st.next_credit_seq));
  }
}

void Fabric::record(ProtocolEventKind kind, int edge, TensorId tensor) {
  if (!logging_) return;
  const EdgeInfo& info = topo_->edges[edge];
  const EdgeState& st = edge_state_[edge];
  log_.push_back({time_, kind, info.source, info.destination, tensor, st.credits,
                  occupied_by_edge(edge), st.data_in_flight + st.credits_in_flight});
}

void write_protocol_log(std::ostream& out, const std::vector<ProtocolEvent>& log) {
  static constexpr const char* kNames[] = {"send", "hold", "deliver", "credit"};
  auto name = [](CardId c) {
    return c == kHost ? std::string("host") : std::to_string(c);
  };
  for (const ProtocolEvent& ev : log) {
    nlohmann::json line = {
        {"time", ev.time},
        {"event", kNames[static_cast<int>(ev.kind)]},
        {"edge", name(ev.source) + "->" + name(ev.destination)},
        {"tensor_id", ev.tensor},
        {"counters",
         {{"credits", ev.credits}, {"occupied", ev.occupied}, {"in_flight", ev.in_flight}}}};
    out << line.dump() << '\n';
  }
}

}  // namespace cardrack::fabric
