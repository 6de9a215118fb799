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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sigma/error.hpp"
#include "sigma/instruction.hpp"
#include "sigma/value.hpp"

namespace sigma {

enum class Status : std::uint8_t { Suspended, Running, Normal, Dead };

inline std::string_view status_name(Status s) {
  switch (s) {
    case Status::Suspended: return "suspended";
    case Status::Running: return "running";
    case Status::Normal: return "normal";
    case Status::Dead: return "dead";
  }
  return "?";
}

inline std::optional<Status> status_by_name(std::string_view s) {
  if (s == "suspended") return Status::Suspended;
  if (s == "running") return Status::Running;
  if (s == "normal") return Status::Normal;
  if (s == "dead") return Status::Dead;
  return std::nullopt;
}

/// A position inside a control list. A frame's C register is a stack of
/// these: `Sel` pushes the chosen branch and an exhausted segment pops.
struct ControlSegment {
  CodePtr code;
  std::size_t pc = 0;

  bool exhausted() const { return pc >= code->size(); }
};

/// The S, E and C registers of one activation record. The D register is the
/// position of the frame in its coroutine's frame vector: frame i dumps to
/// frame i-1.
struct Frame {
  std::vector<Value> stack;
  Loc env;
  std::vector<ControlSegment> control;

  Frame() = default;
  Frame(std::vector<Value> s, Loc e, ControlList c) : stack(std::move(s)), env(e) {
    control.push_back({std::make_shared<const ControlList>(std::move(c)), 0});
  }

  /// Drops exhausted segments; returns the next instruction or null when C is empty.
  const Instruction* next() {
    while (!control.empty() && control.back().exhausted()) control.pop_back();
    if (control.empty()) return nullptr;
    auto& seg = control.back();
    return &(*seg.code)[seg.pc];
  }

  bool control_empty() const {
    for (const auto& seg : control)
      if (!seg.exhausted()) return false;
    return true;
  }

  /// The remaining control as a single list, innermost segment first.
  ControlList remaining_code() const {
    ControlList out;
    for (auto it = control.rbegin(); it != control.rend(); ++it)
      out.insert(out.end(), it->code->begin() + static_cast<std::ptrdiff_t>(it->pc),
                 it->code->end());
    return out;
  }
};

/// Frames of one coroutine, outermost (the dump root) first.
using FrameStack = std::vector<Frame>;

struct Cell {
  Value value;
};

struct Closure {
  Loc proto;
  Loc env;
};

struct Proto {
  std::string param;
  CodePtr code = std::make_shared<const ControlList>();
  std::vector<Value> consts;
  std::vector<Loc> inner;
  std::string label;  // debug name; empty for anonymous lambdas
};

struct Env {
  std::map<std::string, Loc, std::less<>> bindings;  // identifier -> Cell
  std::optional<Loc> parent;
};

struct Table {
  std::map<Value, Value> entries;
};

struct Coroutine {
  FrameStack frames;  // held here only while the coroutine is not active
  Status status = Status::Suspended;
};

struct FileHandle {
  std::string path;  // relative to the machine's file root
  std::string mode;
  std::uint64_t position = 0;
};

using StoredValue =
    std::variant<Cell, Closure, Proto, Env, Table, Coroutine, FileHandle>;

inline std::string_view stored_kind_name(const StoredValue& v) {
  switch (v.index()) {
    case 0: return "cell";
    case 1: return "function";
    case 2: return "proto";
    case 3: return "env";
    case 4: return "table";
    case 5: return "thread";
    default: return "file";
  }
}

/// Locations to stored values. Identifiers are never reused.
class Store {
 public:
  Loc allocate(StoredValue v) {
    Loc l{next_id_++};
    entries_.emplace(l.id, std::move(v));
    return l;
  }

  bool contains(Loc l) const { return entries_.count(l.id) != 0; }

  StoredValue& at(Loc l) {
    auto it = entries_.find(l.id);
    if (it == entries_.end())
      fail(Fault::UnresolvedHandle, "store", "no entry at " + location_name(l));
    return it->second;
  }
  const StoredValue& at(Loc l) const {
    return const_cast<Store*>(this)->at(l);
  }

  template <typename T>
  T* get_if(Loc l) {
    auto it = entries_.find(l.id);
    return it == entries_.end() ? nullptr : std::get_if<T>(&it->second);
  }
  template <typename T>
  const T* get_if(Loc l) const {
    return const_cast<Store*>(this)->get_if<T>(l);
  }

  /// Typed access; a missing or differently-typed entry is a `fault`.
  template <typename T>
  T& expect(Loc l, Fault fault, std::string_view rule) {
    if (T* p = get_if<T>(l)) return *p;
    fail(fault, std::string(rule),
         location_name(l) + (contains(l) ? " is a " + std::string(stored_kind_name(at(l)))
                                         : std::string(" is not allocated")));
  }

  void erase(Loc l) { entries_.erase(l.id); }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t next_id() const { return next_id_; }
  const std::map<std::uint64_t, StoredValue>& entries() const { return entries_; }

 private:
  std::map<std::uint64_t, StoredValue> entries_;
  std::uint64_t next_id_ = 1;
};

/// One entry of the activation stack A.
struct Activation {
  Loc coroutine;
  FrameStack frames;
};

/// The complete, copyable world: ⟨A, Σ⟩ plus the observable print trace.
struct MachineState {
  std::vector<Activation> active;  // back() is the running coroutine
  Store store;
  std::vector<std::string> output;

  /// Harness attachment: the program coroutine the root driver resumes.
  std::optional<Loc> program;

  /// Registered open files and the directory their paths are relative to.
  std::set<Loc> open_files;
  std::filesystem::path file_root = ".";

  Activation& head() { return active.back(); }
  const Activation& head() const { return active.back(); }
  Frame& frame() { return active.back().frames.back(); }

  bool is_active(Loc coro) const {
    for (const auto& a : active)
      if (a.coroutine == coro) return true;
    return false;
  }

  /// A fresh empty environment.
  Loc new_env(std::optional<Loc> parent = std::nullopt) {
    return store.allocate(Env{{}, parent});
  }
};

}  // namespace sigma
