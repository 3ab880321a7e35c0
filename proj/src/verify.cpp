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

#include "cardrack/verify.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cardrack/error.hpp"

namespace cardrack::verify {

using fabric::Fabric;
using fabric::kHost;
using fabric::Packet;
using fabric::PacketKind;
using fabric::TensorId;

std::string CheckResult::summary() const {
  std::ostringstream out;
  if (ok()) {
    out << "verified: " << states << " states, no overflow, no deadlock";
  } else {
    out << "FAILED after " << states << " states: " << failure;
  }
  return out.str();
}

Fabric make_chain_fabric(int cards, int slots, int credit_limit_override) {
  if (cards < 1) throw ConfigError("chain model needs at least one card");
  fabric::VirtualCircuit circuit;
  for (int c = 0; c < cards; ++c) circuit.hops.push_back({c, {c}});
  fabric::install_chains(circuit);
  fabric::FabricOptions options;
  options.framebuffer_slots = slots;
  options.credit_limit_override = credit_limit_override;
  return Fabric({std::move(circuit)}, options);
}

namespace {

enum class ActionKind : std::uint8_t { kInject, kDeliverData, kCompute, kDeliverCredit };

struct Action {
  ActionKind kind;
  int index;  // channel or card
};

std::string describe(const Action& a, int cards) {
  auto name = [cards](int i) {
    return i == cards ? std::string("host") : "card" + std::to_string(i);
  };
  switch (a.kind) {
    case ActionKind::kInject: return "inject";
    case ActionKind::kDeliverData: return "deliver data to " + name(a.index);
    case ActionKind::kCompute: return "compute on card" + std::to_string(a.index);
    case ActionKind::kDeliverCredit:
      return "deliver credit from card" + std::to_string(a.index);
  }
  return "?";
}

// data[i]: packets heading to card i (i == cards: to host).
// credit[i]: credits card i returns upstream.
struct State {
  Fabric fab;
  std::vector<std::deque<Packet>> data;
  std::vector<std::deque<Packet>> credit;
  TensorId next_inject = 0;
  TensorId next_sink = 0;

  State(Fabric f, int cards)
      : fab(std::move(f)), data(cards + 1), credit(cards) {}

  int cards() const { return static_cast<int>(credit.size()); }

  void route(const std::vector<Packet>& packets) {
    for (const Packet& p : packets) {
      data[p.destination == kHost ? cards() : p.destination].push_back(p);
    }
  }

  // Forwards the tensor's output and frees its slot once it has left.
  void forward_and_credit(int card, TensorId tensor, std::vector<Packet> sent) {
    route(sent);
    const Packet c = fab.consume_and_credit(card, tensor);
    credit[card].push_back(c);
  }

  std::vector<Action> enabled(TensorId limit, bool host_gate) const {
    std::vector<Action> out;
    if (next_inject < limit && (!host_gate || fab.held_count(kHost) == 0)) {
      out.push_back({ActionKind::kInject, 0});
    }
    for (int i = 0; i <= cards(); ++i) {
      if (!data[i].empty()) out.push_back({ActionKind::kDeliverData, i});
    }
    for (int i = 0; i < cards(); ++i) {
      if (fab.next_resident(i)) out.push_back({ActionKind::kCompute, i});
    }
    for (int i = 0; i < cards(); ++i) {
      if (!credit[i].empty()) out.push_back({ActionKind::kDeliverCredit, i});
    }
    return out;
  }

  // Returns false on an out-of-order arrival at the host.
  bool apply(const Action& a) {
    switch (a.kind) {
      case ActionKind::kInject: {
        auto r = fab.inject(next_inject++);
        route(r.packets);
        return true;
      }
      case ActionKind::kDeliverData: {
        const Packet p = data[a.index].front();
        data[a.index].pop_front();
        fab.deliver(p);
        if (p.destination == kHost) {
          if (p.tensor != next_sink) return false;
          ++next_sink;
        }
        return true;
      }
      case ActionKind::kCompute: {
        const TensorId t = *fab.next_resident(a.index);
        auto r = fab.try_send(a.index, 0, t);
        if (r.status == fabric::SendStatus::kSent) {
          forward_and_credit(a.index, t, std::move(r.packets));
        }
        return true;
      }
      case ActionKind::kDeliverCredit: {
        const Packet p = credit[a.index].front();
        credit[a.index].pop_front();
        auto r = fab.deliver(p);
        for (auto& rel : r.released) {
          if (rel.card == kHost) {
            route(rel.packets);
          } else {
            forward_and_credit(rel.card, rel.tensor, std::move(rel.packets));
          }
        }
        return true;
      }
    }
    return true;
  }

  std::string key() const {
    std::string out;
    fab.encode(out);
    auto put = [&out](std::int64_t wide) {
      const auto v = static_cast<std::int32_t>(wide);
      out.append(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    put(next_inject);
    put(next_sink);
    for (const auto* group : {&data, &credit}) {
      for (const auto& q : *group) {
        put(static_cast<std::int64_t>(q.size()));
        for (const Packet& p : q) put(p.tensor);
      }
    }
    return out;
  }

  int outstanding_first_edge() const {
    if (cards() < 2) return 0;
    const auto e = fab.edge(0, 1);
    return e.occupied + e.data_in_flight;
  }
};

struct Node {
  std::int64_t parent;
  std::string action;
};

struct Successor {
  std::string key;
  std::string action;
  std::optional<State> state;
  std::string fault;
  bool order_violation = false;
  bool overflow = false;
};

struct Expansion {
  std::vector<Successor> successors;
  bool deadlock = false;
};

Expansion expand(const State& s, const ChainModel& m) {
  Expansion out;
  const auto actions = s.enabled(m.tensors, false);
  if (actions.empty()) {
    out.deadlock = s.next_sink < m.tensors;
    return out;
  }
  for (const Action& a : actions) {
    Successor succ;
    succ.action = describe(a, s.cards());
    State next = s;
    try {
      if (!next.apply(a)) {
        succ.order_violation = true;
        succ.fault = "tensor arrived at host out of order";
      } else {
        next.fab.check_invariants();
      }
    } catch (const ProtocolFault& e) {
      succ.overflow = true;
      succ.fault = e.what();
    }
    if (succ.fault.empty()) {
      succ.key = next.key();
      succ.state = std::move(next);
    }
    out.successors.push_back(std::move(succ));
  }
  return out;
}

std::vector<std::string> trace_back(const std::vector<Node>& nodes, std::int64_t at) {
  std::vector<std::string> path;
  for (; at > 0; at = nodes[at].parent) path.push_back(nodes[at].action);
  return {path.rbegin(), path.rend()};
}

CheckResult search(const ChainModel& m, bool parallel) {
  if (m.cards < 1 || m.slots < 1 || m.tensors < 0) {
    throw ConfigError("check: cards and slots must be >= 1, tensors >= 0");
  }
  CheckResult result;
  State init(make_chain_fabric(m.cards, m.slots, m.credit_limit_override), m.cards);

  std::vector<Node> nodes{{-1, ""}};
  std::unordered_map<std::string, std::int64_t> seen{{init.key(), 0}};
  std::vector<std::pair<std::int64_t, State>> frontier;
  frontier.emplace_back(0, std::move(init));

  while (!frontier.empty()) {
    std::vector<Expansion> expanded(frontier.size());
    const auto n = static_cast<std::int64_t>(frontier.size());
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 16)
      for (std::int64_t i = 0; i < n; ++i) expanded[i] = expand(frontier[i].second, m);
    } else {
      for (std::int64_t i = 0; i < n; ++i) expanded[i] = expand(frontier[i].second, m);
    }

    std::vector<std::pair<std::int64_t, State>> next;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t id = frontier[i].first;
      result.max_outstanding_first_edge = std::max(
          result.max_outstanding_first_edge, frontier[i].second.outstanding_first_edge());
      if (expanded[i].deadlock) {
        result.deadlock = true;
        result.failure = "deadlock: no action enabled with tensors outstanding";
        result.counterexample = trace_back(nodes, id);
        result.states = nodes.size();
        return result;
      }
      for (Successor& s : expanded[i].successors) {
        ++result.transitions;
        if (!s.fault.empty()) {
          result.overflow = s.overflow;
          result.order_violation = s.order_violation;
          result.failure = s.fault;
          result.counterexample = trace_back(nodes, id);
          result.counterexample.push_back(s.action);
          result.states = nodes.size();
          return result;
        }
        auto [it, inserted] = seen.emplace(std::move(s.key), nodes.size());
        if (!inserted) continue;
        nodes.push_back({id, std::move(s.action)});
        next.emplace_back(it->second, std::move(*s.state));
      }
    }
    frontier = std::move(next);
  }
  result.states = nodes.size();
  return result;
}

}  // namespace

CheckResult check_exhaustive(const ChainModel& model) { return search(model, false); }

CheckResult check_exhaustive_parallel(const ChainModel& model) {
  return search(model, true);
}

RandomRunResult random_run(std::uint64_t seed, std::uint64_t events) {
  RandomRunResult r;
  r.seed = seed;
  r.cards = 2 + static_cast<int>(seed % 7);
  r.slots = 1 + static_cast<int>((seed / 7) % 4);
  std::mt19937_64 rng(seed);
  State s(make_chain_fabric(r.cards, r.slots), r.cards);
  r.digest = 1469598103934665603ull;
  const TensorId unbounded = std::numeric_limits<TensorId>::max();
  try {
    for (; r.events < events; ++r.events) {
      const auto actions = s.enabled(unbounded, true);
      if (actions.empty()) {
        r.conserved = false;
        r.failure = "no action enabled";
        break;
      }
      std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
      const std::size_t choice = pick(rng);
      r.digest = (r.digest ^ choice) * 1099511628211ull;
      if (!s.apply(actions[choice])) {
        r.conserved = false;
        r.failure = "tensor arrived at host out of order";
        break;
      }
      s.fab.check_invariants();
      ++r.invariant_checks;
    }
  } catch (const ProtocolFault& e) {
    r.conserved = false;
    r.failure = e.what();
  }
  r.delivered = s.fab.sink_received();
  return r;
}

std::vector<RandomRunResult> random_runs(std::uint64_t first_seed, int count,
                                         std::uint64_t events) {
  std::vector<RandomRunResult> out;
  for (int i = 0; i < count; ++i) out.push_back(random_run(first_seed + i, events));
  return out;
}

std::vector<RandomRunResult> random_runs_parallel(std::uint64_t first_seed, int count,
                                                  std::uint64_t events) {
  std::vector<RandomRunResult> out(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < count; ++i) out[i] = random_run(first_seed + i, events);
  return out;
}

}  // namespace cardrack::verify
