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


#include <gtest/gtest.h>
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <random>
#include <set>
#include <thread>

#include "cardrack/error.hpp"
#include "cardrack/scenario.hpp"
#include "cardrack/service/bounded_queue.hpp"
#include "cardrack/service/broker.hpp"
#include "cardrack/service/endpoint.hpp"
#include "cardrack/service/instance.hpp"
#include "cardrack/service/ring.hpp"
#include "cardrack/service/tokenizer.hpp"

namespace cardrack::service {
namespace {

using namespace std::chrono_literals;

const std::filesystem::path kData = CARDRACK_DATA_DIR;

std::vector<StreamChunk> drain(ResponseChannel& ch) {
  std::vector<StreamChunk> out;
  while (auto c = ch.pop_for(10s)) {
    out.push_back(*c);
    if (c->finish != FinishReason::kNone) break;
  }
  return out;
}

InstanceConfig small_instance(std::size_t pool) {
  InstanceConfig c;
  c.model = "toy";
  c.deployment = engine::uniform_deployment(4, c.hw);
  c.timing.decode_stage_seconds = 1e-3;
  c.timing.prefill_stage_seconds_per_token = 1e-6;
  c.context_len = 512;
  c.pool_size = pool;
  return c;
}

InferenceTask task(const std::string& model, int priority, std::uint64_t tokens = 4) {
  InferenceTask t;
  t.model = model;
  t.priority = priority;
  t.prompt = "hello";
  t.max_new_tokens = tokens;
  return t;
}

// -- BoundedQueue

TEST(BoundedQueueTest, CapacityAndClose) {
  BoundedQueue<int> q(2);
  EXPECT_TRUE(q.try_push(1));
  EXPECT_TRUE(q.try_push(2));
  EXPECT_FALSE(q.try_push(3));
  EXPECT_EQ(q.size(), 2u);
  q.close();
  EXPECT_FALSE(q.push(4));
  EXPECT_EQ(q.pop(), 1);
  EXPECT_EQ(q.pop(), 2);
  EXPECT_FALSE(q.pop().has_value());
}

TEST(BoundedQueueTest, ZeroCapacityHoldsOne) {
  BoundedQueue<int> q(0);
  EXPECT_EQ(q.capacity(), 1u);
  EXPECT_FALSE(q.pop_for(1ms).has_value());
}

TEST(BoundedQueueTest, ProducersAndConsumersConserveItems) {
  BoundedQueue<int> q(4);
  constexpr int kProducers = 4;
  constexpr int kPerProducer = 2000;
  std::atomic<long long> sum{0};
  std::atomic<int> count{0};
  std::vector<std::thread> consumers;
  for (int c = 0; c < 3; ++c) {
    consumers.emplace_back([&] {
      while (auto v = q.pop()) {
        sum += *v;
        ++count;
      }
    });
  }
  std::vector<std::thread> producers;
  for (int p = 0; p < kProducers; ++p) {
    producers.emplace_back([&, p] {
      for (int i = 0; i < kPerProducer; ++i) q.push(p * kPerProducer + i);
    });
  }
  for (auto& t : producers) t.join();
  q.close();
  for (auto& t : consumers) t.join();
  const long long n = kProducers * kPerProducer;
  EXPECT_EQ(count.load(), n);
  EXPECT_EQ(sum.load(), n * (n - 1) / 2);
}

// -- Broker

TEST(BrokerTest, MoreUrgentLevelFirst) {
  Broker b(3);
  b.register_instance("m", {1024});
  const auto low = b.submit(task("m", 2));
  const auto high = b.submit(task("m", 0));
  EXPECT_EQ(b.queued("m"), 2u);
  EXPECT_EQ(b.try_dequeue("m")->task_id, high.task_id);
  EXPECT_EQ(b.try_dequeue("m")->task_id, low.task_id);
  EXPECT_FALSE(b.try_dequeue("m").has_value());
  EXPECT_EQ(b.inversions(), 0u);
}

TEST(BrokerTest, FifoWithinLevel) {
  Broker b(3);
  b.register_instance("m", {1024});
  std::vector<std::int64_t> ids;
  for (int i = 0; i < 100; ++i) {
    const auto r = b.submit(task("m", 1));
    EXPECT_EQ(r.position, static_cast<std::size_t>(i));
    ids.push_back(r.task_id);
  }
  for (std::int64_t id : ids) EXPECT_EQ(b.try_dequeue("m")->task_id, id);
}

TEST(BrokerTest, RandomTrafficNeverInverts) {
  Broker b(4);
  b.register_instance("a", {1024});
  b.register_instance("b", {1024});
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const std::string model = (rng() & 1) ? "a" : "b";
    if (rng() % 3 == 0) {
      b.try_dequeue(model);
    } else {
      b.submit(task(model, static_cast<int>(rng() % 4)));
    }
  }
  while (b.try_dequeue("a")) {
  }
  while (b.try_dequeue("b")) {
  }
  EXPECT_EQ(b.inversions(), 0u);
  for (const auto& r : b.dequeue_log()) EXPECT_FALSE(r.inversion);
}

TEST(BrokerTest, SubmitErrors) {
  Broker b(3);
  b.register_instance("m", {16});
  EXPECT_THROW(b.submit(task("nope", 0)), RoutingError);
  EXPECT_THROW(b.submit(task("m", 3)), ConfigError);
  EXPECT_THROW(b.submit(task("m", -1)), ConfigError);
  EXPECT_THROW(b.submit(task("m", 0, 0)), ConfigError);
  EXPECT_THROW(b.submit(task("m", 0, 12)), CapacityError);  // 5 prompt bytes + 12
  EXPECT_NO_THROW(b.submit(task("m", 0, 11)));
}

TEST(BrokerTest, ChannelsAndClose) {
  Broker b(2);
  b.register_instance("m", {64});
  const auto r = b.submit(task("m", 0));
  EXPECT_EQ(b.channel(r.task_id), r.channel);
  b.release_channel(r.task_id);
  EXPECT_EQ(b.channel(r.task_id), nullptr);
  EXPECT_EQ(b.models(), std::vector<std::string>{"m"});
  ASSERT_TRUE(b.limits("m").has_value());
  EXPECT_EQ(b.limits("m")->context_len, 64u);
  std::thread waiter([&] { b.dequeue("other", 10s); });
  b.close();
  waiter.join();
  EXPECT_FALSE(b.dequeue("m", 1ms).has_value());
}

// -- Tokenizer

TEST(TokenizerTest, ByteValues) {
  EXPECT_EQ(tokenize("Hi"), (std::vector<int>{72, 105}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(detokenize({}), "");
}

TEST(TokenizerTest, RoundTripsArbitraryUtf8) {
  std::mt19937 rng(5);
  const std::vector<std::string> pieces{"a", "Z", " ", "\xc3\xa9", "\xe2\x82\xac",
                                        "\xf0\x9f\x98\x80", "\n", "\xe4\xb8\xad"};
  for (int i = 0; i < 200; ++i) {
    std::string s;
    const int n = static_cast<int>(rng() % 40);
    for (int k = 0; k < n; ++k) s += pieces[rng() % pieces.size()];
    EXPECT_EQ(detokenize(tokenize(s)), s);
  }
}

TEST(TokenizerTest, StubIsDeterministic) {
  for (std::uint64_t step = 0; step < 50; ++step) {
    const int a = generate_stub(42, step);
    EXPECT_EQ(a, generate_stub(42, step));
    EXPECT_GE(a, 'a');
    EXPECT_LE(a, 'z');
  }
  StopCondition stop;
  stop.stop_at_step = 3;
  EXPECT_EQ(generate_stub(1, 3, stop), kStopToken);
  EXPECT_NE(generate_stub(1, 2, stop), kStopToken);
}

// -- Ring

TEST(RingTest, SingleNode) {
  const auto r = ring_ready({{"node 0", 2.0}}, {1e-3, 30});
  EXPECT_GE(r.ready_time, 2.0);
  EXPECT_LE(r.ready_time, 2.0 + 2 * 2e-3 + 1e-12);
}

TEST(RingTest, SixNodesConfiguringInParallel) {
  std::vector<RingNode> nodes;
  for (int i = 0; i < 6; ++i) nodes.push_back({"node " + std::to_string(i), i + 1.0});
  const RingOptions o{1e-3, 30};
  const auto r = ring_ready(nodes, o);
  const double pass = 7 * o.hop_seconds;
  EXPECT_GE(r.ready_time, 6.0);
  EXPECT_LE(r.ready_time, 6.0 + 2 * pass + 1e-12);
  for (std::size_t p = 1; p < r.flags_per_pass.size(); ++p) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (r.flags_per_pass[p - 1][i]) EXPECT_TRUE(r.flags_per_pass[p][i]);
    }
  }
  EXPECT_EQ(r.passes, static_cast<int>(r.flags_per_pass.size()));
}

TEST(RingTest, SilentNodeIsNamed) {
  std::vector<RingNode> nodes{{"node 0", 1.0}, {"node 1", 1.0}, {"node 2", 1.0},
                              {"node 3", std::nullopt}, {"node 4", 1.0}};
  try {
    ring_ready(nodes, {1e-3, 30});
    FAIL() << "expected StartupError";
  } catch (const StartupError& e) {
    EXPECT_NE(std::string(e.what()).find("node 3 never reported ready"), std::string::npos);
  }
  EXPECT_THROW(ring_ready({}), ConfigError);
}

// -- Instance

TEST(InstanceTest, IdleInstanceProducesNothing) {
  Broker b(3);
  Instance inst(b, small_instance(2));
  inst.start();
  std::this_thread::sleep_for(20ms);
  inst.stop();
  EXPECT_EQ(inst.completed(), 0u);
  EXPECT_TRUE(inst.trace().events.empty());
  EXPECT_TRUE(inst.service_records().empty());
}

TEST(InstanceTest, StreamsOneTerminalChunk) {
  Broker b(3);
  Instance inst(b, small_instance(2));
  inst.start();
  auto r = b.submit(task("toy", 0, 5));
  const auto chunks = drain(*r.channel);
  ASSERT_EQ(chunks.size(), 5u);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    EXPECT_EQ(chunks[i].index, i);
    EXPECT_EQ(chunks[i].task_id, r.task_id);
    EXPECT_EQ(chunks[i].finish,
              i + 1 == chunks.size() ? FinishReason::kLength : FinishReason::kNone);
  }
  InferenceTask stopping = task("toy", 0, 10);
  stopping.stop.stop_at_step = 3;
  r = b.submit(stopping);
  const auto stopped = drain(*r.channel);
  ASSERT_EQ(stopped.size(), 4u);
  EXPECT_EQ(stopped.back().finish, FinishReason::kStop);
  EXPECT_TRUE(stopped.back().text.empty());
  inst.stop();
}

TEST(InstanceTest, ThirdTaskWaitsForAFreeWorker) {
  Broker b(3);
  // Queue before start so all three compete for the pool at once.
  std::vector<SubmitReceipt> rs;
  b.register_instance("toy", {512});
  for (int i = 0; i < 3; ++i) rs.push_back(b.submit(task("toy", 1, 6)));
  Instance inst(b, small_instance(2));
  inst.start();
  ASSERT_TRUE(inst.wait_completed(3, 10s));
  inst.stop();
  EXPECT_EQ(inst.pool_size(), 2u);
  EXPECT_EQ(inst.peak_busy(), 2u);
  const auto rec = inst.service_records();
  ASSERT_EQ(rec.size(), 3u);
  EXPECT_GE(rec[2].t_start, std::min(rec[0].t_end, rec[1].t_end));
  EXPECT_LT(rec[1].t_start, rec[0].t_end);
}

TEST(InstanceTest, WorkersAreConserved) {
  Broker b(3);
  Instance inst(b, small_instance(3));
  inst.start();
  for (int i = 0; i < 12; ++i) b.submit(task("toy", i % 3, 8));
  while (inst.completed() < 12) {
    const auto w = inst.workers();
    EXPECT_EQ(w.idle + w.busy, w.pool);
    EXPECT_LE(w.busy, 3u);
    std::this_thread::sleep_for(1ms);
  }
  inst.stop();
}

TEST(InstanceTest, CalibratedBatchStreamsAtTargetItl) {
  const Scenario s = load_scenario(kData / "scenarios" / "serve-granite-8b.yaml");
  InstanceConfig c;
  c.model = s.model.name;
  c.deployment = deploy(s);
  c.hw = s.hardware;
  c.timing = resolve_timing(s, c.deployment);
  c.context_len = s.workload.context_len;
  Broker b(3);
  b.register_instance(c.model, {c.context_len});
  for (int i = 0; i < 28; ++i) b.submit(task(c.model, 0, 48));
  Instance inst(b, c);
  EXPECT_EQ(inst.pool_size(), 28u);
  inst.start();
  ASSERT_TRUE(inst.wait_completed(28, 60s));
  inst.stop();
  EXPECT_EQ(inst.peak_busy(), 28u);
  const auto rec = inst.service_records();
  ASSERT_EQ(rec.size(), 28u);
  for (const auto& r : rec) {
    // Tokens after the first decode pass run at the steady cadence.
    const double steady = (r.token_times.back() - r.token_times[2]) /
                          static_cast<double>(r.token_times.size() - 3);
    EXPECT_NEAR(steady / 2.8e-3, 1.0, 0.05);
  }
  // Service and engine agree to the bit in virtual time.
  const auto& engine_rec = inst.trace().sequences;
  ASSERT_EQ(engine_rec.size(), rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    EXPECT_EQ(rec[i].id, engine_rec[i].id);
    EXPECT_EQ(rec[i].t_start, engine_rec[i].t_start);
    EXPECT_EQ(rec[i].t_first, engine_rec[i].t_first);
    EXPECT_EQ(rec[i].t_end, engine_rec[i].t_end);
  }
}

// -- Endpoint

class EndpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    instance_ = std::make_unique<Instance>(broker_, small_instance(4));
    instance_->start();
    EndpointConfig cfg;
    cfg.port = 0;
    cfg.threads = 16;
    cfg.default_model = "toy";
    endpoint_ = std::make_unique<Endpoint>(broker_, cfg);
    port_ = endpoint_->start();
  }
  void TearDown() override {
    endpoint_->stop();
    instance_->stop();
  }

  Broker broker_{3};
  std::unique_ptr<Instance> instance_;
  std::unique_ptr<Endpoint> endpoint_;
  int port_ = 0;
};

TEST_F(EndpointTest, Streaming) {
  const auto r = post_chat("127.0.0.1", port_, chat_request("toy", "hi", 5, 0, true));
  EXPECT_EQ(r.status, 200);
  EXPECT_TRUE(r.done_marker);
  ASSERT_EQ(r.chunks.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.chunks[i].index, i);
  EXPECT_EQ(r.chunks.back().finish, FinishReason::kLength);
}

TEST_F(EndpointTest, NonStreaming) {
  const auto r = post_chat("127.0.0.1", port_, chat_request("toy", "hi", 7, 1, false));
  ASSERT_EQ(r.status, 200);
  const auto body = nlohmann::json::parse(r.body);
  EXPECT_EQ(body["choices"][0]["message"]["content"].get<std::string>().size(), 7u);
  EXPECT_EQ(body["choices"][0]["finish_reason"], "length");
  EXPECT_EQ(body["usage"]["completion_tokens"], 7);
}

TEST_F(EndpointTest, Errors) {
  EXPECT_EQ(post_chat("127.0.0.1", port_, chat_request("ghost", "hi", 3, 0, true)).status, 404);
  EXPECT_EQ(post_chat("127.0.0.1", port_, chat_request("toy", "hi", 3, 9, false)).status, 400);
  EXPECT_EQ(post_chat("127.0.0.1", port_, chat_request("toy", "hi", 5000, 0, false)).status,
            400);
  nlohmann::json no_messages = {{"model", "toy"}, {"messages", nlohmann::json::array()}};
  EXPECT_EQ(post_chat("127.0.0.1", port_, no_messages).status, 400);
}

TEST_F(EndpointTest, DefaultModelAndHealth) {
  nlohmann::json req = chat_request("toy", "hi", 2, 0, false);
  req.erase("model");
  EXPECT_EQ(post_chat("127.0.0.1", port_, req).status, 200);
  httplib::Client cli("127.0.0.1", port_);
  const auto res = cli.Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body)["status"], "ok");
}

TEST_F(EndpointTest, ConcurrentClients) {
  constexpr int kClients = 12;
  std::vector<StreamResult> results(kClients);
  std::vector<std::thread> threads;
  for (int i = 0; i < kClients; ++i) {
    threads.emplace_back([&, i] {
      results[i] = post_chat("127.0.0.1", port_, chat_request("toy", "q", 6, i % 3, true));
    });
  }
  for (auto& t : threads) t.join();
  std::set<std::int64_t> ids;
  for (const auto& r : results) {
    EXPECT_EQ(r.status, 200);
    ASSERT_EQ(r.chunks.size(), 6u);
    EXPECT_TRUE(r.done_marker);
    ids.insert(r.chunks.front().task_id);
  }
  EXPECT_EQ(ids.size(), static_cast<std::size_t>(kClients));
  EXPECT_EQ(broker_.inversions(), 0u);
}

}  // namespace
}  // namespace cardrack::service
