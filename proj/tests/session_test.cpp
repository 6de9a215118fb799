// Copyright 2026 The Sigma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "support.hpp"

namespace sigma {
namespace {

TEST(Session, ParseArgument) {
  EXPECT_EQ(parse_argument("12"), Value(12.0));
  EXPECT_EQ(parse_argument("-1.5"), Value(-1.5));
  EXPECT_EQ(parse_argument("+3"), Value(3.0));
  EXPECT_EQ(parse_argument("nil"), Value());
  EXPECT_EQ(parse_argument("true"), Value(true));
  EXPECT_EQ(parse_argument("12ab"), Value("12ab"));
  EXPECT_EQ(parse_argument(""), Value(""));
}

TEST(Session, RunCountPrintsFiveLines) {
  auto out = run_program(testing::bundled("count"), Value());
  EXPECT_EQ(out.output, (std::vector<std::string>{"Number 1", "Number 2", "Number 3", "Number 4",
                                                  "Number 5"}));
  EXPECT_EQ(out.result, Value());
}

// One activation record per pending multiplication.
TEST(Session, FactorialFrameCountFollowsDepth) {
  auto unit = testing::bundled("factorial");
  std::size_t base = checkpoint(unit, Value(0.0), 1).frame_count;
  for (double n : {1.0, 5.0, 10.0, 20.0}) {
    Session s(unit, Value(n));
    auto cap = checkpoint(s, 1);
    EXPECT_EQ(cap.frame_count, frame_depth(s.state(), s.program()));
    EXPECT_EQ(cap.frame_count, base + static_cast<std::size_t>(n)) << n;
  }
}

TEST(Session, NeverYielded) {
  EXPECT_THROW(checkpoint(testing::bundled("inc"), Value(1.0), 1), NeverYielded);
  EXPECT_THROW(checkpoint(testing::bundled("count"), Value(), 6), NeverYielded);
}

TEST(Session, PayloadGrowsWithDepth) {
  auto unit = testing::bundled("factorial");
  auto small = pickle::serialize(checkpoint(unit, Value(10.0), 1).doc).size();
  auto large = pickle::serialize(checkpoint(unit, Value(20.0), 1).doc).size();
  EXPECT_GT(large, small);
}

TEST(Session, RestoreTwiceIsIdentical) {
  auto cap = checkpoint(testing::bundled("count"), Value(), 3);
  std::string text = pickle::serialize(cap.doc);
  auto first = restore(pickle::deserialize(text));
  auto second = restore(pickle::deserialize(text));
  EXPECT_EQ(first.finish(), second.finish());
  EXPECT_EQ(first.output(), second.output());
  EXPECT_EQ(first.output(), (std::vector<std::string>{"Number 4", "Number 5"}));
}

TEST(Session, RestoreFactorialTwelve) {
  auto cap = checkpoint(testing::bundled("factorial"), Value(12.0), 1);
  auto s = restore(pickle::deserialize(pickle::serialize(cap.doc)));
  EXPECT_EQ(s.finish(), Value(479001600.0));
}

TEST(Session, YieldValuePassedOnResume) {
  auto unit = lang::compile_program("(+ 1 (yield 5))");
  auto cap = checkpoint(unit, Value(), 1);
  EXPECT_EQ(cap.yielded, Value(5.0));
  EXPECT_EQ(restore(cap.doc, ".", Value(41.0)).finish(), Value(42.0));
}

TEST(Session, FuelLimit) {
  Session s(lang::compile_program("(while true 1)"), Value(), ".", 5000);
  try {
    s.finish();
    FAIL();
  } catch (const MachineError& e) {
    EXPECT_EQ(e.fault(), Fault::FuelExhausted);
  }
}

TEST(Session, CheckpointAtEveryYieldOfEveryProgram) {
  for (const auto& [name, arg] : std::vector<std::pair<std::string, Value>>{
           {"count", Value()}, {"factorial", Value(7.0)}, {"fibonacci", Value(10.0)},
           {"myprint", Value(3.0)}, {"knn_lite", Value()}}) {
    SCOPED_TRACE(name);
    auto unit = testing::bundled(name);
    auto whole = run_program(unit, arg, testing::scratch_dir("whole_" + name));
    Session probe(unit, arg, testing::scratch_dir("probe_" + name));
    std::size_t yields = 0;
    while (probe.next_yield()) ++yields;
    ASSERT_GT(yields, 0u);
    for (std::size_t k = 1; k <= yields; ++k) {
      auto src = testing::scratch_dir("src_" + name);
      auto cap = checkpoint(unit, arg, k, src);
      auto dst = testing::scratch_dir("dst_" + name);
      for (const auto& f : cap.doc.files)
        std::filesystem::copy_file(src / f.path, dst / f.path);
      auto s = restore(pickle::deserialize(pickle::serialize(cap.doc)), dst);
      Value v = s.finish();
      auto combined = cap.output;
      combined.insert(combined.end(), s.output().begin(), s.output().end());
      EXPECT_EQ(v, whole.result) << k;
      EXPECT_EQ(combined, whole.output) << k;
    }
  }
}

}  // namespace
}  // namespace sigma
