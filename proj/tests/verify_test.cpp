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

#include "cardrack/error.hpp"
#include "cardrack/verify.hpp"

namespace cardrack::verify {
namespace {

TEST(ExhaustiveTest, ThreeCardTwoSlotChain) {
  const auto r = check_exhaustive({3, 2, 5, 0});
  EXPECT_TRUE(r.ok()) << r.summary();
  EXPECT_EQ(r.states, 10683u);
  EXPECT_EQ(r.max_outstanding_first_edge, 2);
  EXPECT_EQ(r.summary(), "verified: 10683 states, no overflow, no deadlock");
}

TEST(ExhaustiveTest, AllSmallChainsAreSafeAndLive) {
  for (int cards = 1; cards <= 3; ++cards) {
    for (int slots = 1; slots <= 3; ++slots) {
      for (int tensors = 0; tensors <= 4; ++tensors) {
        const auto r = check_exhaustive({cards, slots, tensors, 0});
        EXPECT_TRUE(r.ok()) << cards << "/" << slots << "/" << tensors << ": " << r.summary();
        EXPECT_LE(r.max_outstanding_first_edge, slots);
      }
    }
  }
}

TEST(ExhaustiveTest, MiscountedCreditsAreCaught) {
  const auto r = check_exhaustive({3, 2, 5, 3});
  EXPECT_TRUE(r.overflow);
  EXPECT_FALSE(r.ok());
  ASSERT_FALSE(r.counterexample.empty());
  EXPECT_EQ(r.counterexample.front(), "inject");
  EXPECT_NE(r.summary().find("FAILED"), std::string::npos);
}

TEST(ExhaustiveTest, ParallelMatchesSerial) {
  for (const ChainModel m : {ChainModel{3, 2, 5, 0}, ChainModel{2, 3, 6, 0},
                             ChainModel{3, 2, 5, 3}}) {
    const auto a = check_exhaustive(m);
    const auto b = check_exhaustive_parallel(m);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.transitions, b.transitions);
    EXPECT_EQ(a.ok(), b.ok());
    EXPECT_EQ(a.counterexample, b.counterexample);
  }
}

TEST(ExhaustiveTest, BadModel) {
  EXPECT_THROW(check_exhaustive({0, 2, 5, 0}), ConfigError);
  EXPECT_THROW(check_exhaustive({2, 0, 5, 0}), ConfigError);
}

TEST(RandomRunTest, ConservedAndReproducible) {
  const auto a = random_run(3, 30000);
  const auto b = random_run(3, 30000);
  EXPECT_TRUE(a.conserved) << a.failure;
  EXPECT_EQ(a.digest, b.digest);
  EXPECT_EQ(a.invariant_checks, 30000u);
  EXPECT_NE(a.digest, random_run(4, 30000).digest);
}

TEST(RandomRunTest, ParallelMatchesSerial) {
  const auto s = random_runs(10, 5, 10000);
  const auto p = random_runs_parallel(10, 5, 10000);
  ASSERT_EQ(s.size(), p.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s[i].seed, p[i].seed);
    EXPECT_EQ(s[i].digest, p[i].digest);
    EXPECT_EQ(s[i].delivered, p[i].delivered);
    EXPECT_TRUE(p[i].conserved);
  }
}

}  // namespace
}  // namespace cardrack::verify
