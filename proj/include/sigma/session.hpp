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
#pragma once

// Harnessed program runs: run to completion, stop at the k-th yield and
// capture, restore a capture and finish it.

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sigma/compiler.hpp"
#include "sigma/machine.hpp"
#include "sigma/pickle.hpp"

namespace sigma {

/// CPU time of this process in milliseconds.
inline double cpu_ms() {
  timespec ts{};
  if (clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts) == 0)
    return static_cast<double>(ts.tv_sec) * 1e3 + static_cast<double>(ts.tv_nsec) / 1e6;
  return static_cast<double>(std::clock()) * 1e3 / CLOCKS_PER_SEC;
}

inline double wall_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

/// Command-line argument to program value: a number when it reads as one.
inline Value parse_argument(std::string_view s) {
  if (s == "nil") return Value();
  if (s == "true") return Value(true);
  if (s == "false") return Value(false);
  double d = 0;
  const char* b = s.data() + (!s.empty() && s[0] == '+' ? 1 : 0);
  auto [ptr, ec] = std::from_chars(b, s.data() + s.size(), d);
  if (!s.empty() && ec == std::errc() && ptr == s.data() + s.size()) return Value(d);
  return Value(std::string(s));
}

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

class NeverYielded : public Error {
 public:
  NeverYielded(std::size_t wanted, std::size_t seen)
      : Error("NeverYielded: program halted after " + std::to_string(seen) + " of " +
              std::to_string(wanted) + " yields") {}
};

/// One harnessed program. Every yield that reaches the harness stops the
/// run; the program is resumed with nil.
class Session {
 public:
  Session(const lang::CompiledUnit& unit, Value arg,
          std::filesystem::path file_root = ".", std::uint64_t fuel = kDefaultFuel)
      : fuel_(fuel) {
    st_.file_root = std::move(file_root);
    program_ = launch(st_, lang::load(st_, unit), std::move(arg));
  }

  /// Takes over a coroutine already present in `st` (a restored capture).
  Session(MachineState st, Loc coro, Value resume_with, std::uint64_t fuel = kDefaultFuel)
      : st_(std::move(st)), fuel_(fuel) {
    program_ = coro;
    attach(st_, coro, std::move(resume_with));
  }

  /// Runs to the next yield and returns its value, or nullopt on halt.
  std::optional<Value> next_yield() {
    if (result_) return std::nullopt;
    if (yields_ > 0) resume_program(st_, Value());
    RunResult r = run(st_, fuel_);
    if (r.halted()) {
      result_ = r.value;
      return std::nullopt;
    }
    ++yields_;
    return r.value;
  }

  /// Runs until the program halts.
  Value finish() {
    while (next_yield()) {
    }
    return *result_;
  }

  MachineState& state() { return st_; }
  const MachineState& state() const { return st_; }
  Loc program() const { return program_; }
  std::size_t yields() const { return yields_; }
  const std::vector<std::string>& output() const { return st_.output; }
  const std::optional<Value>& result() const { return result_; }

 private:
  MachineState st_;
  Loc program_;
  std::uint64_t fuel_;
  std::size_t yields_ = 0;
  std::optional<Value> result_;
};

struct Outcome {
  std::vector<std::string> output;
  Value result;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

inline Outcome run_program(const lang::CompiledUnit& unit, Value arg,
                           const std::filesystem::path& root = ".",
                           std::uint64_t fuel = kDefaultFuel) {
  Session s(unit, std::move(arg), root, fuel);
  Value v = s.finish();
  return {s.output(), v};
}

struct Capture {
  pickle::WireDoc doc;
  std::vector<std::string> output;  // printed before the capture
  Value yielded;
  std::size_t frame_count = 0;
  double capture_ms = 0;
};

/// Runs to the k-th yield (k >= 1) and captures the program coroutine.
inline Capture checkpoint(Session& s, std::size_t k, const pickle::ErrorPolicy& policy = {}) {
  std::optional<Value> y;
  while (s.yields() < k) {
    y = s.next_yield();
    if (!y) throw NeverYielded(k, s.yields());
  }
  Capture c;
  c.output = s.output();
  c.yielded = *y;
  c.frame_count = frame_depth(s.state(), s.program());
  double t0 = cpu_ms();
  c.doc = pickle::deep_capture(s.state(), s.program(), policy);
  c.capture_ms = cpu_ms() - t0;
  return c;
}

inline Capture checkpoint(const lang::CompiledUnit& unit, Value arg, std::size_t k,
                          const std::filesystem::path& root = ".",
                          const pickle::ErrorPolicy& policy = {},
                          std::uint64_t fuel = kDefaultFuel) {
  Session s(unit, std::move(arg), root, fuel);
  return checkpoint(s, k, policy);
}

/// Instantiates a capture in a fresh machine rooted at `root` and returns a
/// session that resumes it with `resume_with`.
inline Session restore(const pickle::WireDoc& doc, const std::filesystem::path& root = ".",
                       Value resume_with = Value(), std::uint64_t fuel = kDefaultFuel) {
  MachineState st;
  st.file_root = root;
  Loc coro = pickle::instantiate(st, doc);
  return Session(std::move(st), coro, std::move(resume_with), fuel);
}

}  // namespace sigma
