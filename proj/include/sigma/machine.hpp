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

// The one-step transition relation of the SECD machine extended with a store,
// assignment, first-class coroutines and reflection.
//
// A step either commits completely or throws before touching the state:
// every rule validates its operands first and only then advances the control.

#include <cmath>
#include <functional>
#include <set>
#include <type_traits>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sigma/files.hpp"
#include "sigma/reflect.hpp"
#include "sigma/state.hpp"

namespace sigma {

inline constexpr std::uint64_t kDefaultFuel = 200'000'000;

// ---------------------------------------------------------------------------
// Environments

inline std::optional<Loc> lookup_cell(const Store& store, Loc env, std::string_view x) {
  std::optional<Loc> e = env;
  while (e) {
    const Env* node = store.get_if<Env>(*e);
    if (!node) return std::nullopt;
    if (auto it = node->bindings.find(x); it != node->bindings.end()) return it->second;
    e = node->parent;
  }
  return std::nullopt;
}

inline Loc require_cell(const MachineState& st, Loc env, std::string_view x, std::string_view rule) {
  auto cell = lookup_cell(st.store, env, x);
  if (!cell) fail(Fault::UnknownVariable, std::string(rule), std::string(x));
  return *cell;
}

/// Binds `x` to `v` in a fresh environment whose parent is `parent`.
inline Loc extend_env(MachineState& st, Loc parent, const std::string& x, Value v) {
  Loc cell = st.store.allocate(Cell{std::move(v)});
  Env e;
  e.bindings.emplace(x, cell);
  e.parent = parent;
  return st.store.allocate(std::move(e));
}

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

[[noreturn]] inline void prim_type_error(PrimOp op, std::span<const Value> args) {
  std::string msg(prim_info(op).name);
  msg += "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) msg += ", ";
    msg += type_name(args[i]);
  }
  fail(Fault::TypeError, "prim", msg + ")");
}

inline bool concat_operand(const Value& v) { return v.is_text() || v.is_num(); }

inline Loc file_arg(const MachineState& st, PrimOp op, std::span<const Value> args) {
  if (!args[0].is_loc() || !st.store.get_if<FileHandle>(args[0].as_loc()))
    prim_type_error(op, args);
  return args[0].as_loc();
}

}  // namespace detail

/// δ: applies a primitive to its operands b1..bn (bn was on top of S).
inline Value apply_prim(MachineState& st, PrimOp op, std::span<const Value> args) {
  if (args.size() != prim_info(op).arity)
    fail(Fault::TypeError, "prim",
         std::string(prim_info(op).name) + " expects " + std::to_string(prim_info(op).arity) +
             " operands, got " + std::to_string(args.size()));
  auto nums = [&] {
    for (const auto& a : args)
      if (!a.is_num()) detail::prim_type_error(op, args);
  };
  switch (op) {
    case PrimOp::Add: nums(); return Value(args[0].as_num() + args[1].as_num());
    case PrimOp::Sub: nums(); return Value(args[0].as_num() - args[1].as_num());
    case PrimOp::Mul: nums(); return Value(args[0].as_num() * args[1].as_num());
    case PrimOp::Div: nums(); return Value(args[0].as_num() / args[1].as_num());
    case PrimOp::Eq: return Value(args[0] == args[1]);
    case PrimOp::Lt:
      if (args[0].is_num() && args[1].is_num()) return Value(args[0].as_num() < args[1].as_num());
      if (args[0].is_text() && args[1].is_text()) return Value(args[0].as_text() < args[1].as_text());
      detail::prim_type_error(op, args);
    case PrimOp::Print: st.output.push_back(display(args[0])); return Value();
    case PrimOp::Concat:
      if (!detail::concat_operand(args[0]) || !detail::concat_operand(args[1]))
        detail::prim_type_error(op, args);
      return Value(display(args[0]) + display(args[1]));
    case PrimOp::TableNew: return Value(st.store.allocate(Table{}));
    case PrimOp::TableGet: {
      if (!args[0].is_loc() || !st.store.get_if<Table>(args[0].as_loc()))
        detail::prim_type_error(op, args);
      const auto& t = st.store.get_if<Table>(args[0].as_loc())->entries;
      auto it = t.find(args[1]);
      return it == t.end() ? Value() : it->second;
    }
    case PrimOp::TablePut: {
      if (!args[0].is_loc() || !st.store.get_if<Table>(args[0].as_loc()))
        detail::prim_type_error(op, args);
      if (args[1].is_nil() || (args[1].is_num() && std::isnan(args[1].as_num())))
        fail(Fault::TypeError, "prim", "put: nil or NaN key");
      auto& t = st.store.get_if<Table>(args[0].as_loc())->entries;
      if (args[2].is_nil())
        t.erase(args[1]);
      else
        t[args[1]] = args[2];
      return args[2];
    }
    case PrimOp::FileOpen:
      if (!args[0].is_text() || !args[1].is_text()) detail::prim_type_error(op, args);
      return Value(register_open(st, args[0].as_text(), args[1].as_text()));
    case PrimOp::FileWrite: {
      Loc f = detail::file_arg(st, op, args);
      if (!detail::concat_operand(args[1])) detail::prim_type_error(op, args);
      file_write(st, f, display(args[1]));
      return Value();
    }
    case PrimOp::FileRead: {
      Loc f = detail::file_arg(st, op, args);
      if (!args[1].is_num() || args[1].as_num() < 0) detail::prim_type_error(op, args);
      return file_read(st, f, static_cast<std::size_t>(args[1].as_num()));
    }
    case PrimOp::FileClose: file_close(st, detail::file_arg(st, op, args)); return Value();
  }
  return Value();
}

// ---------------------------------------------------------------------------
// Coroutine transitions. Each operates on the running coroutine at the head
// of the activation stack.

/// create: a fresh suspended coroutine whose entry record applies `closure`.
inline Loc create(MachineState& st, Loc closure) {
  st.store.expect<Closure>(closure, Fault::NotAClosure, "create");
  Frame f = entry_frame(st, closure);
  return st.store.allocate(Coroutine{{std::move(f)}, Status::Suspended});
}

/// newthread: a fresh coroutine with no activation records.
inline Loc newthread(MachineState& st) {
  return st.store.allocate(Coroutine{{}, Status::Suspended});
}

inline Coroutine& resumable(MachineState& st, Loc coro) {
  auto* co = st.store.get_if<Coroutine>(coro);
  if (!co) fail(Fault::TypeError, "resume", location_name(coro) + " is not a coroutine");
  if (co->status != Status::Suspended)
    fail(Fault::ResumeNonSuspended, "resume",
         location_name(coro) + " is " + std::string(status_name(co->status)));
  if (co->frames.empty())
    fail(Fault::EmptyCoroutine, "resume", location_name(coro) + " has no activation records");
  return *co;
}

/// resume: moves `coro` from the store to the top of A with `arg` on its stack.
inline void resume(MachineState& st, Loc coro, Value arg) {
  Coroutine& co = resumable(st, coro);
  if (!st.active.empty())
    st.store.get_if<Coroutine>(st.head().coroutine)->status = Status::Normal;
  FrameStack frames = std::move(co.frames);
  co.frames.clear();
  co.status = Status::Running;
  frames.back().stack.push_back(std::move(arg));
  st.active.push_back({coro, std::move(frames)});
}

namespace detail {
inline void hand_back(MachineState& st, Value v) {
  st.store.get_if<Coroutine>(st.head().coroutine)->status = Status::Running;
  st.frame().stack.push_back(std::move(v));
}
}  // namespace detail

/// yield: stores the running coroutine and passes `v` to its activator.
inline void yield(MachineState& st, Value v) {
  if (st.active.size() < 2)
    fail(Fault::YieldFromRoot, "yield", "the root coroutine has no activator");
  Activation a = std::move(st.active.back());
  st.active.pop_back();
  auto& co = *st.store.get_if<Coroutine>(a.coroutine);
  co.frames = std::move(a.frames);
  co.status = Status::Suspended;
  detail::hand_back(st, std::move(v));
}

/// Termination of a coroutine: control and `v` return to its activator.
inline void coroutine_return(MachineState& st, Value v) {
  Activation a = std::move(st.active.back());
  st.active.pop_back();
  auto& co = *st.store.get_if<Coroutine>(a.coroutine);
  co.frames.clear();
  co.status = Status::Dead;
  detail::hand_back(st, std::move(v));
}

/// set: assigns `v` to the cell bound to `x` in the running frame's environment.
inline void set(MachineState& st, std::string_view x, Value v) {
  Loc cell = require_cell(st, st.frame().env, x, "set");
  st.store.get_if<Cell>(cell)->value = std::move(v);
}

// ---------------------------------------------------------------------------
// step

namespace detail {

inline void need(const Frame& f, std::size_t n, Opcode op) {
  if (f.stack.size() < n)
    fail(Fault::StackUnderflow, std::string(opcode_name(op)),
         "needs " + std::to_string(n) + " operands, stack has " + std::to_string(f.stack.size()));
}

inline std::optional<std::int64_t> level_operand(const Value& v, std::string_view rule) {
  if (v.is_nil()) return std::nullopt;
  if (!v.is_num() || v.as_num() != std::floor(v.as_num()))
    fail(Fault::BadLevel, std::string(rule), "level must be an integer or nil");
  return static_cast<std::int64_t>(v.as_num());
}

inline Loc coroutine_operand(const MachineState& st, const Value& v, std::string_view rule) {
  if (!v.is_loc() || !st.store.get_if<Coroutine>(v.as_loc()))
    fail(Fault::TypeError, std::string(rule), type_name(v) + " is not a coroutine");
  return v.as_loc();
}

}  // namespace detail

/// One transition. Returns the result when the root coroutine has nothing
/// left to do (its C and D are empty); the state is then left unchanged.
inline std::optional<Value> step(MachineState& st) {
  if (st.active.empty()) fail(Fault::BadInstruction, "step", "no active coroutine");
  Frame& f = st.frame();
  const Instruction* next = f.next();

  if (!next) {
    Value v = f.stack.empty() ? Value() : f.stack.back();
    if (st.head().frames.size() > 1) {  // return from a call
      st.head().frames.pop_back();
      st.frame().stack.push_back(std::move(v));
    } else if (st.active.size() > 1) {  // coroutine finished
      coroutine_return(st, std::move(v));
    } else {
      return v;
    }
    return std::nullopt;
  }

  // Keep the code alive: a Sel below may pop the segment that owns it.
  CodePtr hold = f.control.back().code;
  const Instruction& ins = *next;
  auto commit = [&f] { ++f.control.back().pc; };
  auto& S = f.stack;

  switch (ins.op) {
    case Opcode::Const:
      commit();
      S.push_back(ins.constant);
      break;

    case Opcode::Var: {
      Loc cell = require_cell(st, f.env, ins.name, "var");
      commit();
      S.push_back(st.store.get_if<Cell>(cell)->value);
      break;
    }

    case Opcode::MakeClosure: {
      st.store.expect<Proto>(ins.proto, Fault::BadInstruction, "closure");
      commit();
      S.push_back(Value(st.store.allocate(Closure{ins.proto, f.env})));
      break;
    }

    case Opcode::Ap: {
      detail::need(f, 2, ins.op);
      const Value& fn = S[S.size() - 2];
      const Closure* c = fn.is_loc() ? st.store.get_if<Closure>(fn.as_loc()) : nullptr;
      if (!c) fail(Fault::TypeError, "ap", type_name(fn) + " is not a function");
      const Proto& p = st.store.expect<Proto>(c->proto, Fault::BadInstruction, "ap");
      CodePtr body = p.code;
      std::string param = p.param;
      Loc closure_env = c->env;
      commit();
      Value arg = std::move(S.back());
      S.pop_back();
      S.pop_back();
      Loc env = extend_env(st, closure_env, param, std::move(arg));
      Frame callee;
      callee.env = env;
      callee.control.push_back({std::move(body), 0});
      st.head().frames.push_back(std::move(callee));  // invalidates f
      break;
    }

    case Opcode::Prim: {
      detail::need(f, ins.arity, ins.op);
      std::vector<Value> args(S.end() - ins.arity, S.end());
      Value r = apply_prim(st, ins.prim, args);
      commit();
      S.resize(S.size() - ins.arity);
      S.push_back(std::move(r));
      break;
    }

    case Opcode::Set: {
      detail::need(f, 1, ins.op);
      Loc cell = require_cell(st, f.env, ins.name, "set");
      commit();
      st.store.get_if<Cell>(cell)->value = S.back();
      break;
    }

    case Opcode::Sel: {
      detail::need(f, 1, ins.op);
      if (!S.back().is_bool())
        fail(Fault::TypeError, "sel", type_name(S.back()) + " is not a boolean");
      bool b = S.back().as_bool();
      commit();
      S.pop_back();
      f.control.push_back({b ? ins.then_branch : ins.else_branch, 0});
      break;
    }

    case Opcode::Join:
      commit();
      break;

    case Opcode::Pop:
      detail::need(f, 1, ins.op);
      commit();
      S.pop_back();
      break;

    case Opcode::Create: {
      detail::need(f, 1, ins.op);
      const Value& c = S.back();
      if (!c.is_loc() || !st.store.get_if<Closure>(c.as_loc()))
        fail(Fault::NotAClosure, "create", type_name(c) + " is not a function");
      Loc coro = create(st, c.as_loc());
      commit();
      S.back() = Value(coro);
      break;
    }

    case Opcode::Resume: {
      detail::need(f, 2, ins.op);
      Loc coro = detail::coroutine_operand(st, S.back(), "resume");
      resumable(st, coro);
      commit();
      S.pop_back();
      Value arg = std::move(S.back());
      S.pop_back();
      resume(st, coro, std::move(arg));  // invalidates f
      break;
    }

    case Opcode::Yield: {
      detail::need(f, 1, ins.op);
      if (st.active.size() < 2)
        fail(Fault::YieldFromRoot, "yield", "the root coroutine has no activator");
      commit();
      Value v = std::move(S.back());
      S.pop_back();
      yield(st, std::move(v));  // invalidates f
      break;
    }

    case Opcode::NewThread:
      commit();
      S.push_back(Value(newthread(st)));
      break;

    case Opcode::Reify: {
      detail::need(f, 2, ins.op);
      auto level = detail::level_operand(S[S.size() - 2], "reify");
      Value rep = reflect::reify(st, S.back(), level);
      commit();
      S.resize(S.size() - 2);
      S.push_back(std::move(rep));
      break;
    }

    case Opcode::Install: {
      detail::need(f, 3, ins.op);
      const Value& rep = S[S.size() - 1];
      const Value& target = S[S.size() - 2];
      auto level = detail::level_operand(S[S.size() - 3], "install");
      reflect::InstallTarget t;
      if (target.is_text()) {
        auto tn = type_name_by_text(target.as_text());
        if (!tn) fail(Fault::UnknownTypeName, "install", "'" + target.as_text() + "'");
        t = *tn;
      } else {
        t = detail::coroutine_operand(st, target, "install");
      }
      Value r = reflect::install(st, rep, t, level);
      commit();
      S.resize(S.size() - 3);
      S.push_back(std::move(r));
      break;
    }

    case Opcode::NameOf: {
      detail::need(f, 1, ins.op);
      std::string n = reflect::name(S.back());
      commit();
      S.back() = Value(std::move(n));
      break;
    }

    case Opcode::FieldsOf: {
      detail::need(f, 1, ins.op);
      if (!S.back().is_text()) fail(Fault::UnknownTypeName, "fields", type_name(S.back()));
      Value schema_table = reflect::fields(st, S.back().as_text());
      commit();
      S.back() = std::move(schema_table);
      break;
    }

    case Opcode::SetStatus: {
      detail::need(f, 2, ins.op);
      Loc coro = detail::coroutine_operand(st, S.back(), "setstatus");
      const Value& s = S[S.size() - 2];
      auto status = s.is_text() ? status_by_name(s.as_text()) : std::nullopt;
      if (!status) fail(Fault::TypeError, "setstatus", "unknown status " + display(s));
      reflect::setstatus(st, coro, *status);
      commit();
      S.resize(S.size() - 2);
      S.push_back(Value());
      break;
    }

    case Opcode::StatusOf: {
      detail::need(f, 1, ins.op);
      Loc coro = detail::coroutine_operand(st, S.back(), "status");
      commit();
      S.back() = Value(std::string(status_name(st.store.get_if<Coroutine>(coro)->status)));
      break;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Running and the harness

/// Starts `closure` as the root coroutine, applied to `arg`. Without a
/// harness a yield from the root is an error.
inline Loc boot(MachineState& st, Loc closure, Value arg) {
  st.store.expect<Closure>(closure, Fault::NotAClosure, "boot");
  Loc root = st.store.allocate(Coroutine{{}, Status::Running});
  Frame f = entry_frame(st, closure);
  f.stack.push_back(std::move(arg));
  st.active.clear();
  st.active.push_back({root, {std::move(f)}});
  st.program.reset();
  return root;
}

/// Installs the harness driver: a root coroutine whose only work is to resume
/// `coro` with `arg`. The driver is not part of the program and is never captured.
inline void attach(MachineState& st, Loc coro, Value arg) {
  resumable(st, coro);
  Loc root = st.store.allocate(Coroutine{{}, Status::Running});
  Frame driver({std::move(arg), Value(coro)}, st.new_env(), {Instruction::make(Opcode::Resume)});
  st.active.clear();
  st.active.push_back({root, {std::move(driver)}});
  st.program = coro;
}

/// Starts `closure` as a harnessed program and returns its coroutine.
inline Loc launch(MachineState& st, Loc closure, Value arg) {
  Loc coro = create(st, closure);
  attach(st, coro, std::move(arg));
  return coro;
}

/// The value the program yielded, if the harness currently holds control
/// because of a root-reaching yield.
inline std::optional<Value> harness_suspension(const MachineState& st) {
  if (!st.program || st.active.size() != 1) return std::nullopt;
  const auto& root = st.head();
  if (root.frames.size() != 1 || !root.frames.back().control_empty()) return std::nullopt;
  const auto* co = st.store.get_if<Coroutine>(*st.program);
  if (!co || co->status != Status::Suspended) return std::nullopt;
  const auto& s = root.frames.back().stack;
  return s.empty() ? Value() : s.back();
}

/// Hands control back to the suspended program, passing `arg` as the result
/// of its yield.
inline void resume_program(MachineState& st, Value arg) {
  if (!st.program) fail(Fault::BadInstruction, "harness", "no program attached");
  if (!harness_suspension(st))
    fail(Fault::ResumeNonSuspended, "harness", "the program has not yielded to the harness");
  resumable(st, *st.program);
  Frame& driver = st.frame();
  driver.stack = {std::move(arg), Value(*st.program)};
  driver.control.clear();
  driver.control.push_back(
      {std::make_shared<const ControlList>(ControlList{Instruction::make(Opcode::Resume)}), 0});
}

struct RunResult {
  enum class Kind { Halted, Suspended } kind;
  Value value;

  bool halted() const { return kind == Kind::Halted; }
  bool suspended() const { return kind == Kind::Suspended; }
};

/// Steps until the machine halts or the harnessed program yields to the root.
inline RunResult run(MachineState& st, std::uint64_t fuel = kDefaultFuel) {
  for (;;) {
    if (auto y = harness_suspension(st)) return {RunResult::Kind::Suspended, *y};
    if (fuel == 0) fail(Fault::FuelExhausted, "run", "step budget exhausted");
    --fuel;
    if (auto v = step(st)) return {RunResult::Kind::Halted, *v};
  }
}

/// Runs a harnessed program to completion, resuming with nil at every yield.
inline Value run_to_completion(MachineState& st, std::uint64_t fuel = kDefaultFuel) {
  for (;;) {
    RunResult r = run(st, fuel);
    if (r.halted()) return r.value;
    resume_program(st, Value());
  }
}

/// Frame depth of a coroutine.
inline std::size_t frame_depth(const MachineState& st, Loc coro) {
  return coroutine_frames(st, coro).size();
}

// ---------------------------------------------------------------------------
// Invariants

/// First violated MachineState invariant, if any: dangling locations, stale
/// allocation counter, status discipline, cell-typed environment bindings.
inline std::optional<std::string> well_formed_violation(const MachineState& st) {
  const Store& store = st.store;
  std::optional<std::string> problem;
  auto check = [&](const Value& v, const std::string& where) {
    if (!problem && v.is_loc() && !store.contains(v.as_loc()))
      problem = where + " refers to unallocated " + location_name(v.as_loc());
  };
  std::function<void(const ControlList&, const std::string&)> code = [&](const ControlList& c,
                                                                          const std::string& w) {
    for (const auto& ins : c) {
      if (ins.op == Opcode::MakeClosure && !store.get_if<Proto>(ins.proto))
        problem = w + " creates a closure over a non-proto";
      if (ins.op == Opcode::Sel) {
        code(*ins.then_branch, w);
        code(*ins.else_branch, w);
      }
    }
  };
  auto frame = [&](const Frame& f, const std::string& w) {
    for (const auto& v : f.stack) check(v, w + " stack");
    if (!store.get_if<Env>(f.env)) problem = w + " has a non-env E register";
    for (const auto& seg : f.control) code(*seg.code, w);
  };

  std::set<Loc> in_a;
  for (std::size_t i = 0; i < st.active.size(); ++i) {
    const auto& a = st.active[i];
    if (!in_a.insert(a.coroutine).second) return "coroutine " + location_name(a.coroutine) + " twice in A";
    const auto* co = store.get_if<Coroutine>(a.coroutine);
    if (!co) return "A entry " + location_name(a.coroutine) + " is not a coroutine";
    Status want = i + 1 == st.active.size() ? Status::Running : Status::Normal;
    if (co->status != want)
      return "coroutine " + location_name(a.coroutine) + " at A[" + std::to_string(i) + "] is " +
             std::string(status_name(co->status));
    if (!co->frames.empty()) return "active coroutine keeps frames in the store";
    for (const auto& f : a.frames) frame(f, "active frame");
  }
  for (const auto& [id, sv] : store.entries()) {
    if (id >= store.next_id()) return "allocation counter behind " + std::to_string(id);
    const std::string w = location_name(Loc{id});
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Cell>) {
            check(x.value, w);
          } else if constexpr (std::is_same_v<T, Closure>) {
            if (!store.get_if<Proto>(x.proto)) problem = w + " closure without proto";
            if (!store.get_if<Env>(x.env)) problem = w + " closure without env";
          } else if constexpr (std::is_same_v<T, Proto>) {
            code(*x.code, w);
            for (const auto& c : x.consts) check(c, w);
            for (const auto& l : x.inner) check(Value(l), w);
          } else if constexpr (std::is_same_v<T, Env>) {
            for (const auto& [name, cell] : x.bindings)
              if (!store.get_if<Cell>(cell)) problem = w + " binds " + name + " to a non-cell";
            if (x.parent && !store.get_if<Env>(*x.parent)) problem = w + " has a non-env parent";
          } else if constexpr (std::is_same_v<T, Table>) {
            for (const auto& [k, v] : x.entries) {
              check(k, w);
              check(v, w);
            }
          } else if constexpr (std::is_same_v<T, Coroutine>) {
            if (!in_a.count(Loc{id})) {
              if (x.status == Status::Running || x.status == Status::Normal)
                problem = w + " is " + std::string(status_name(x.status)) + " outside A";
              if (x.status == Status::Dead && !x.frames.empty()) problem = w + " is dead with frames";
              for (const auto& f : x.frames) frame(f, w);
            }
          }
        },
        sv);
    if (problem) return problem;
  }
  if (st.program && !store.get_if<Coroutine>(*st.program)) return "harness program is not a coroutine";
  return problem;
}

}  // namespace sigma
