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

// Capture at a yield, serialize, restore elsewhere, finish: the combined
// output and final value equal an uninterrupted run.

#include <gtest/gtest.h>

#include "support.hpp"

namespace sigma {
namespace {

constexpr int kPrograms = 200;

std::vector<std::string> joined(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST(TransparencyProperty, GeneratedProgramsAtEveryYield) {
  testing::Rng rng(31337);
  std::size_t checked = 0;
  for (int i = 0; i < kPrograms; ++i) {
    std::string text = testing::coroutine_program(rng);
    auto unit = lang::compile_program(text);
    Outcome whole = run_program(unit, Value());
    Session probe(unit, Value());
    std::size_t yields = 0;
    while (probe.next_yield()) ++yields;
    for (std::size_t k = 1; k <= yields; ++k) {
      auto cap = checkpoint(unit, Value(), k);
      auto s = restore(pickle::deserialize(pickle::serialize(cap.doc)));
      Value v = s.finish();
      EXPECT_EQ(v, whole.result) << k << "\n" << text;
      EXPECT_EQ(joined(cap.output, s.output()), whole.output) << k << "\n" << text;
      ++checked;
    }
  }
  EXPECT_GT(checked, 500u);
}

TEST(TransparencyProperty, BundledProgramsWithFiles) {
  for (const auto& [name, arg] : std::vector<std::pair<std::string, Value>>{
           {"count", Value()}, {"factorial", Value(9.0)}, {"fibonacci", Value(12.0)},
           {"myprint", Value(4.0)}, {"knn_lite", Value()}}) {
    auto unit = testing::bundled(name);
    auto plain = testing::scratch_dir("t_plain");
    Outcome whole = run_program(unit, arg, plain);
    Session probe(unit, arg, testing::scratch_dir("t_probe"));
    std::size_t yields = 0;
    while (probe.next_yield()) ++yields;
    for (std::size_t k = 1; k <= yields; ++k) {
      auto src = testing::scratch_dir("t_src");
      auto dst = testing::scratch_dir("t_dst");
      auto cap = checkpoint(unit, arg, k, src);
      for (const auto& f : cap.doc.files) std::filesystem::copy_file(src / f.path, dst / f.path);
      auto s = restore(pickle::deserialize(pickle::serialize(cap.doc)), dst);
      EXPECT_EQ(s.finish(), whole.result) << name << " " << k;
      EXPECT_EQ(joined(cap.output, s.output()), whole.output) << name << " " << k;
      for (const auto& f : cap.doc.files)
        EXPECT_EQ(read_text_file(dst / f.path), read_text_file(plain / f.path)) << name << " " << k;
    }
  }
}

// Capturing a freshly restored machine reproduces the document byte for byte.
TEST(TransparencyProperty, CanonicalFormIsStable) {
  testing::Rng rng(4242);
  for (int i = 0; i < kPrograms; ++i) {
    auto unit = lang::compile_program(testing::coroutine_program(rng));
    Session probe(unit, Value());
    if (!probe.next_yield()) continue;
    auto cap = checkpoint(unit, Value(), 1);
    std::string text = pickle::serialize(cap.doc);
    MachineState st;
    Loc co = pickle::instantiate(st, pickle::deserialize(text));
    auto again = pickle::deep_capture(st, co);
    for (auto& [id, n] : again.nodes) n.origin.clear();
    auto first = cap.doc;
    for (auto& [id, n] : first.nodes) n.origin.clear();
    EXPECT_EQ(pickle::serialize(again), pickle::serialize(first)) << i;
    EXPECT_EQ(pickle::serialize(pickle::deserialize(text)), text) << i;
  }
}

}  // namespace
}  // namespace sigma
