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

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sigma/value.hpp"

namespace sigma {

enum class Opcode : std::uint8_t {
  Const,
  Var,
  MakeClosure,
  Ap,
  Prim,
  Set,
  Sel,
  Join,
  Pop,
  Create,
  Resume,
  Yield,
  NewThread,
  Reify,
  Install,
  NameOf,
  FieldsOf,
  SetStatus,
  StatusOf,
};

enum class PrimOp : std::uint8_t {
  Add,
  Sub,
  Mul,
  Div,
  Eq,
  Lt,
  Print,
  Concat,
  TableNew,
  TableGet,
  TablePut,
  FileOpen,
  FileWrite,
  FileRead,
  FileClose,
};

struct PrimInfo {
  PrimOp op;
  std::string_view name;    // record name used in representations
  std::string_view symbol;  // surface syntax
  std::uint8_t arity;
};

inline constexpr std::array<PrimInfo, 15> kPrims = {{
    {PrimOp::Add, "add", "+", 2},
    {PrimOp::Sub, "sub", "-", 2},
    {PrimOp::Mul, "mul", "*", 2},
    {PrimOp::Div, "div", "/", 2},
    {PrimOp::Eq, "eq", "=", 2},
    {PrimOp::Lt, "lt", "<", 2},
    {PrimOp::Print, "print", "print", 1},
    {PrimOp::Concat, "concat", "concat", 2},
    {PrimOp::TableNew, "table", "table", 0},
    {PrimOp::TableGet, "get", "get", 2},
    {PrimOp::TablePut, "put", "put!", 3},
    {PrimOp::FileOpen, "open", "open", 2},
    {PrimOp::FileWrite, "write", "write", 2},
    {PrimOp::FileRead, "read", "read", 2},
    {PrimOp::FileClose, "close", "close", 1},
}};

inline const PrimInfo& prim_info(PrimOp op) {
  return kPrims[static_cast<std::size_t>(op)];
}

inline std::optional<PrimOp> prim_by_name(std::string_view name) {
  for (const auto& p : kPrims)
    if (p.name == name) return p.op;
  return std::nullopt;
}

inline std::optional<PrimOp> prim_by_symbol(std::string_view sym) {
  for (const auto& p : kPrims)
    if (p.symbol == sym) return p.op;
  return std::nullopt;
}

struct Instruction;
using ControlList = std::vector<Instruction>;
using CodePtr = std::shared_ptr<const ControlList>;

/// One machine instruction. Only the operands relevant to `op` are meaningful:
/// `constant` for Const, `name` for Var/Set, `proto` for MakeClosure,
/// `prim`/`arity` for Prim, the two branches for Sel.
struct Instruction {
  Opcode op = Opcode::Join;
  Value constant;
  std::string name;
  Loc proto;
  PrimOp prim = PrimOp::Add;
  std::uint8_t arity = 0;
  CodePtr then_branch;
  CodePtr else_branch;

  static Instruction make(Opcode op) {
    Instruction i;
    i.op = op;
    return i;
  }
  static Instruction konst(Value v) {
    Instruction i = make(Opcode::Const);
    i.constant = std::move(v);
    return i;
  }
  static Instruction var(std::string x) {
    Instruction i = make(Opcode::Var);
    i.name = std::move(x);
    return i;
  }
  static Instruction set(std::string x) {
    Instruction i = make(Opcode::Set);
    i.name = std::move(x);
    return i;
  }
  static Instruction closure(Loc proto) {
    Instruction i = make(Opcode::MakeClosure);
    i.proto = proto;
    return i;
  }
  static Instruction primitive(PrimOp op) {
    Instruction i = make(Opcode::Prim);
    i.prim = op;
    i.arity = prim_info(op).arity;
    return i;
  }
  static Instruction sel(ControlList then_code, ControlList else_code) {
    Instruction i = make(Opcode::Sel);
    i.then_branch = std::make_shared<const ControlList>(std::move(then_code));
    i.else_branch = std::make_shared<const ControlList>(std::move(else_code));
    return i;
  }

  friend bool operator==(const Instruction& a, const Instruction& b) {
    if (a.op != b.op) return false;
    switch (a.op) {
      case Opcode::Const: return a.constant == b.constant;
      case Opcode::Var:
      case Opcode::Set: return a.name == b.name;
      case Opcode::MakeClosure: return a.proto == b.proto;
      case Opcode::Prim: return a.prim == b.prim && a.arity == b.arity;
      case Opcode::Sel: return *a.then_branch == *b.then_branch &&
                               *a.else_branch == *b.else_branch;
      default: return true;
    }
  }
};

struct OpcodeInfo {
  Opcode op;
  std::string_view name;
};

inline constexpr std::array<OpcodeInfo, 19> kOpcodes = {{
    {Opcode::Const, "const"},
    {Opcode::Var, "var"},
    {Opcode::MakeClosure, "closure"},
    {Opcode::Ap, "ap"},
    {Opcode::Prim, "prim"},
    {Opcode::Set, "set"},
    {Opcode::Sel, "sel"},
    {Opcode::Join, "join"},
    {Opcode::Pop, "pop"},
    {Opcode::Create, "create"},
    {Opcode::Resume, "resume"},
    {Opcode::Yield, "yield"},
    {Opcode::NewThread, "newthread"},
    {Opcode::Reify, "reify"},
    {Opcode::Install, "install"},
    {Opcode::NameOf, "name"},
    {Opcode::FieldsOf, "fields"},
    {Opcode::SetStatus, "setstatus"},
    {Opcode::StatusOf, "status"},
}};

inline std::string_view opcode_name(Opcode op) {
  return kOpcodes[static_cast<std::size_t>(op)].name;
}

inline std::optional<Opcode> opcode_by_name(std::string_view name) {
  for (const auto& o : kOpcodes)
    if (o.name == name) return o.op;
  return std::nullopt;
}

/// Calls `fn(loc)` for every proto referenced by closure-creating
/// instructions in `code`, including inside branches.
template <typename Fn>
void for_each_proto_ref(const ControlList& code, Fn&& fn) {
  for (const auto& ins : code) {
    if (ins.op == Opcode::MakeClosure) fn(ins.proto);
    if (ins.op == Opcode::Sel) {
      for_each_proto_ref(*ins.then_branch, fn);
      for_each_proto_ref(*ins.else_branch, fn);
    }
  }
}

}  // namespace sigma
