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

// Representation trees and their field schemas.
//
// A representation describes one entity at its first level. Atoms are kept
// inline; every reference to another structured value is a handle, stored
// as a Loc. The same tree type carries wire payloads, where handles are node
// ids instead of store locations.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sigma/error.hpp"
#include "sigma/instruction.hpp"
#include "sigma/value.hpp"

namespace sigma {

enum class TypeName : std::uint8_t { Function, Proto, Env, Table, Frame, Thread, File };

inline constexpr std::array<std::pair<TypeName, std::string_view>, 7> kTypeNames = {{
    {TypeName::Function, "function"},
    {TypeName::Proto, "proto"},
    {TypeName::Env, "env"},
    {TypeName::Table, "table"},
    {TypeName::Frame, "frame"},
    {TypeName::Thread, "thread"},
    {TypeName::File, "file"},
}};

inline std::string_view type_name_text(TypeName t) {
  return kTypeNames[static_cast<std::size_t>(t)].second;
}

inline std::optional<TypeName> type_name_by_text(std::string_view s) {
  for (const auto& [t, n] : kTypeNames)
    if (n == s) return t;
  return std::nullopt;
}

struct RepValue;
using RepList = std::vector<RepValue>;
using RepRecord = std::map<std::string, RepValue, std::less<>>;

struct RepValue {
  std::variant<Value, RepList, RepRecord> data;

  RepValue() = default;
  RepValue(Value v) : data(std::move(v)) {}
  RepValue(RepList l) : data(std::move(l)) {}
  RepValue(RepRecord r) : data(std::move(r)) {}

  bool is_value() const { return data.index() == 0; }
  bool is_list() const { return data.index() == 1; }
  bool is_record() const { return data.index() == 2; }
  const Value& value() const { return std::get<Value>(data); }
  const RepList& list() const { return std::get<RepList>(data); }
  const RepRecord& record() const { return std::get<RepRecord>(data); }
  Value& value() { return std::get<Value>(data); }
  RepList& list() { return std::get<RepList>(data); }
  RepRecord& record() { return std::get<RepRecord>(data); }

  friend bool operator==(const RepValue& a, const RepValue& b) { return a.data == b.data; }
};

struct Representation {
  TypeName kind = TypeName::Table;
  RepRecord fields;

  friend bool operator==(const Representation&, const Representation&) = default;
};

/// Calls `fn(Loc&)` on every handle inside `v`, in canonical order
/// (record keys sorted, lists in order).
template <typename Fn>
void for_each_handle(RepValue& v, Fn&& fn) {
  if (v.is_value()) {
    if (v.value().is_loc()) {
      Loc l = v.value().as_loc();
      fn(l);
      v.value() = Value(l);
    }
  } else if (v.is_list()) {
    for (auto& e : v.list()) for_each_handle(e, fn);
  } else {
    for (auto& [k, e] : v.record()) for_each_handle(e, fn);
  }
}

template <typename Fn>
void for_each_handle(RepRecord& r, Fn&& fn) {
  for (auto& [k, e] : r) for_each_handle(e, fn);
}

/// Rewrites every handle through `fn(Loc) -> Value` (which may yield nil).
template <typename Fn>
void relocate(RepValue& v, Fn&& fn) {
  if (v.is_value()) {
    if (v.value().is_loc()) v.value() = fn(v.value().as_loc());
  } else if (v.is_list()) {
    for (auto& e : v.list()) relocate(e, fn);
  } else {
    for (auto& [k, e] : v.record()) relocate(e, fn);
  }
}

template <typename Fn>
void relocate(RepRecord& r, Fn&& fn) {
  for (auto& [k, e] : r) relocate(e, fn);
}

// ---------------------------------------------------------------------------
// Schemas

enum class Shape : std::uint8_t {
  Text,
  Number,
  Boolean,
  Atom,        // any atom
  Value,       // atom or handle
  Handle,      // handle of `target` kind
  OptHandle,   // nil or handle of `target` kind
  AtomList,
  ValueList,
  HandleList,  // list of handles of `target` kind
  Code,        // list of instruction records
  VarMap,      // identifier -> value
  Entries,     // list of [key, value] pairs
};

struct FieldSpec {
  std::string_view name;
  Shape shape;
  TypeName target;
  bool required;
};

namespace detail {
using S = Shape;
using T = TypeName;
inline constexpr std::array<FieldSpec, 2> kFunctionFields = {{
    {"env", S::OptHandle, T::Env, false},
    {"p", S::Handle, T::Proto, true},
}};
inline constexpr std::array<FieldSpec, 5> kProtoFields = {{
    {"code", S::Code, T::Proto, true},
    {"consts", S::AtomList, T::Proto, false},
    {"inner", S::HandleList, T::Proto, false},
    {"label", S::Text, T::Proto, false},
    {"param", S::Text, T::Proto, true},
}};
inline constexpr std::array<FieldSpec, 2> kEnvFields = {{
    {"parent", S::OptHandle, T::Env, false},
    {"vars", S::VarMap, T::Env, true},
}};
inline constexpr std::array<FieldSpec, 1> kTableFields = {{
    {"entries", S::Entries, T::Table, true},
}};
inline constexpr std::array<FieldSpec, 4> kFrameFields = {{
    {"code", S::Code, T::Frame, true},
    {"env", S::Handle, T::Env, true},
    {"resumable", S::Boolean, T::Frame, false},
    {"stack", S::ValueList, T::Frame, true},
}};
inline constexpr std::array<FieldSpec, 3> kThreadFields = {{
    {"depth", S::Number, T::Thread, true},
    {"frames", S::HandleList, T::Frame, false},
    {"status", S::Text, T::Thread, true},
}};
inline constexpr std::array<FieldSpec, 3> kFileFields = {{
    {"mode", S::Text, T::File, true},
    {"path", S::Text, T::File, true},
    {"position", S::Number, T::File, true},
}};
}  // namespace detail

/// Field schema of a representation kind.
inline std::span<const FieldSpec> schema(TypeName t) {
  switch (t) {
    case TypeName::Function: return detail::kFunctionFields;
    case TypeName::Proto: return detail::kProtoFields;
    case TypeName::Env: return detail::kEnvFields;
    case TypeName::Table: return detail::kTableFields;
    case TypeName::Frame: return detail::kFrameFields;
    case TypeName::Thread: return detail::kThreadFields;
    case TypeName::File: return detail::kFileFields;
  }
  return {};
}

inline const FieldSpec* find_field(TypeName t, std::string_view name) {
  for (const auto& f : schema(t))
    if (f.name == name) return &f;
  return nullptr;
}

inline std::string shape_text(const FieldSpec& f) {
  switch (f.shape) {
    case Shape::Text: return "text";
    case Shape::Number: return "number";
    case Shape::Boolean: return "boolean";
    case Shape::Atom: return "atom";
    case Shape::Value: return "value";
    case Shape::Handle: return "handle:" + std::string(type_name_text(f.target));
    case Shape::OptHandle: return "handle?:" + std::string(type_name_text(f.target));
    case Shape::AtomList: return "list:atom";
    case Shape::ValueList: return "list:value";
    case Shape::HandleList: return "list:handle:" + std::string(type_name_text(f.target));
    case Shape::Code: return "code";
    case Shape::VarMap: return "vars";
    case Shape::Entries: return "entries";
  }
  return "?";
}

/// A place where a representation does not fit its schema.
struct ShapeProblem {
  Fault fault;  // ShapeMismatch or UnresolvedHandle
  std::string field;
  std::string detail;
};

/// Answers the kind a handle denotes, or nullopt when it does not resolve.
/// `Value` handles (stack slots, table entries) accept any first-class kind.
using KindOf = std::function<std::optional<TypeName>(Loc)>;

namespace detail {

class ShapeChecker {
 public:
  explicit ShapeChecker(const KindOf& kind_of) : kind_of_(kind_of) {}

  std::optional<ShapeProblem> record(TypeName kind, const RepRecord& r) {
    for (const auto& [key, v] : r)
      if (!find_field(kind, key))
        return ShapeProblem{Fault::ShapeMismatch, key,
                            "unexpected field for " + std::string(type_name_text(kind))};
    for (const auto& f : schema(kind)) {
      auto it = r.find(f.name);
      if (it == r.end()) {
        if (f.required)
          return ShapeProblem{Fault::ShapeMismatch, std::string(f.name), "missing"};
        continue;
      }
      if (auto p = field(f, it->second, std::string(f.name))) return p;
    }
    return std::nullopt;
  }

 private:
  std::optional<ShapeProblem> mismatch(const std::string& where, const std::string& what) {
    return ShapeProblem{Fault::ShapeMismatch, where, what};
  }

  std::optional<ShapeProblem> handle(const Value& v, std::optional<TypeName> want,
                                     const std::string& where) {
    if (!v.is_loc()) return mismatch(where, "expected a handle");
    auto k = kind_of_(v.as_loc());
    if (!k)
      return ShapeProblem{Fault::UnresolvedHandle, where,
                          "handle " + location_name(v.as_loc()) + " does not resolve"};
    if (want && *k != *want)
      return mismatch(where, "handle of kind " + std::string(type_name_text(*k)) +
                                 ", expected " + std::string(type_name_text(*want)));
    if (!want && *k == TypeName::Frame) return mismatch(where, "frame is not a value");
    return std::nullopt;
  }

  std::optional<ShapeProblem> value(const RepValue& v, const std::string& where) {
    if (!v.is_value()) return mismatch(where, "expected a value");
    if (v.value().is_loc()) return handle(v.value(), std::nullopt, where);
    return std::nullopt;
  }

  std::optional<ShapeProblem> field(const FieldSpec& f, const RepValue& v,
                                    const std::string& where) {
    switch (f.shape) {
      case Shape::Text:
        if (!v.is_value() || !v.value().is_text()) return mismatch(where, "expected text");
        return std::nullopt;
      case Shape::Number:
        if (!v.is_value() || !v.value().is_num()) return mismatch(where, "expected number");
        return std::nullopt;
      case Shape::Boolean:
        if (!v.is_value() || !v.value().is_bool()) return mismatch(where, "expected boolean");
        return std::nullopt;
      case Shape::Atom:
        if (!v.is_value() || !v.value().is_atom()) return mismatch(where, "expected atom");
        return std::nullopt;
      case Shape::Value: return value(v, where);
      case Shape::Handle:
        if (!v.is_value()) return mismatch(where, "expected a handle");
        return handle(v.value(), f.target, where);
      case Shape::OptHandle:
        if (!v.is_value()) return mismatch(where, "expected a handle or nil");
        if (v.value().is_nil()) return std::nullopt;
        return handle(v.value(), f.target, where);
      case Shape::AtomList:
      case Shape::ValueList:
      case Shape::HandleList: {
        if (!v.is_list()) return mismatch(where, "expected a list");
        std::size_t i = 0;
        for (const auto& e : v.list()) {
          auto w = where + "[" + std::to_string(++i) + "]";
          std::optional<ShapeProblem> p;
          if (f.shape == Shape::AtomList) {
            if (!e.is_value() || !e.value().is_atom()) p = mismatch(w, "expected atom");
          } else if (f.shape == Shape::ValueList) {
            p = value(e, w);
          } else {
            p = e.is_value() ? handle(e.value(), f.target, w) : mismatch(w, "expected a handle");
          }
          if (p) return p;
        }
        return std::nullopt;
      }
      case Shape::Code: return code(v, where);
      case Shape::VarMap: {
        if (!v.is_record()) return mismatch(where, "expected a variable map");
        for (const auto& [name, e] : v.record()) {
          if (name.empty()) return mismatch(where, "empty identifier");
          if (auto p = value(e, where + "." + name)) return p;
        }
        return std::nullopt;
      }
      case Shape::Entries: {
        if (!v.is_list()) return mismatch(where, "expected a list of pairs");
        std::size_t i = 0;
        for (const auto& e : v.list()) {
          auto w = where + "[" + std::to_string(++i) + "]";
          if (!e.is_list() || e.list().size() != 2) return mismatch(w, "expected a [key, value] pair");
          const auto& key = e.list()[0];
          if (auto p = value(key, w)) return p;
          if (key.value().is_nil() || (key.value().is_num() && std::isnan(key.value().as_num())))
            return mismatch(w, "nil or NaN key");
          if (auto p = value(e.list()[1], w)) return p;
        }
        return std::nullopt;
      }
    }
    return std::nullopt;
  }

  std::optional<ShapeProblem> code(const RepValue& v, const std::string& where) {
    if (!v.is_list()) return mismatch(where, "expected an instruction list");
    std::size_t i = 0;
    for (const auto& e : v.list()) {
      auto w = where + "[" + std::to_string(++i) + "]";
      if (auto p = instruction(e, w)) return p;
    }
    return std::nullopt;
  }

  std::optional<ShapeProblem> instruction(const RepValue& v, const std::string& where) {
    if (!v.is_record()) return mismatch(where, "expected an instruction record");
    const auto& r = v.record();
    auto op_it = r.find("op");
    if (op_it == r.end() || !op_it->second.is_value() || !op_it->second.value().is_text())
      return mismatch(where, "instruction without op");
    auto op = opcode_by_name(op_it->second.value().as_text());
    if (!op) return mismatch(where, "unknown op '" + op_it->second.value().as_text() + "'");
    auto expect_keys = [&](std::initializer_list<std::string_view> keys)
        -> std::optional<ShapeProblem> {
      for (const auto& [k, e] : r) {
        if (k == "op") continue;
        bool ok = false;
        for (auto want : keys) ok = ok || want == k;
        if (!ok) return mismatch(where + "." + k, "unexpected operand");
      }
      for (auto want : keys)
        if (!r.count(want)) return mismatch(where + "." + std::string(want), "missing operand");
      return std::nullopt;
    };
    switch (*op) {
      case Opcode::Const: {
        if (auto p = expect_keys({"value"})) return p;
        const auto& c = r.find("value")->second;
        if (!c.is_value() || !c.value().is_atom()) return mismatch(where + ".value", "expected atom");
        return std::nullopt;
      }
      case Opcode::Var:
      case Opcode::Set: {
        if (auto p = expect_keys({"name"})) return p;
        const auto& n = r.find("name")->second;
        if (!n.is_value() || !n.value().is_text()) return mismatch(where + ".name", "expected text");
        return std::nullopt;
      }
      case Opcode::MakeClosure: {
        if (auto p = expect_keys({"proto"})) return p;
        const auto& h = r.find("proto")->second;
        if (!h.is_value()) return mismatch(where + ".proto", "expected a handle");
        return handle(h.value(), TypeName::Proto, where + ".proto");
      }
      case Opcode::Prim: {
        if (auto p = expect_keys({"prim", "arity"})) return p;
        const auto& n = r.find("prim")->second;
        const auto& a = r.find("arity")->second;
        if (!n.is_value() || !n.value().is_text()) return mismatch(where + ".prim", "expected text");
        auto prim = prim_by_name(n.value().as_text());
        if (!prim) return mismatch(where + ".prim", "unknown primitive");
        if (!a.is_value() || !a.value().is_num() ||
            a.value().as_num() != prim_info(*prim).arity)
          return mismatch(where + ".arity", "arity does not match primitive");
        return std::nullopt;
      }
      case Opcode::Sel: {
        if (auto p = expect_keys({"then", "else"})) return p;
        if (auto p = code(r.find("then")->second, where + ".then")) return p;
        return code(r.find("else")->second, where + ".else");
      }
      default: return expect_keys({});
    }
  }

  const KindOf& kind_of_;
};

}  // namespace detail

inline std::optional<ShapeProblem> check_shape(TypeName kind, const RepRecord& r,
                                               const KindOf& kind_of) {
  return detail::ShapeChecker(kind_of).record(kind, r);
}

// ---------------------------------------------------------------------------
// Instruction records

inline RepList encode_code(const ControlList& code);

inline RepValue encode_instruction(const Instruction& ins) {
  RepRecord r;
  r["op"] = Value(std::string(opcode_name(ins.op)));
  switch (ins.op) {
    case Opcode::Const: r["value"] = ins.constant; break;
    case Opcode::Var:
    case Opcode::Set: r["name"] = Value(ins.name); break;
    case Opcode::MakeClosure: r["proto"] = Value(ins.proto); break;
    case Opcode::Prim:
      r["prim"] = Value(std::string(prim_info(ins.prim).name));
      r["arity"] = Value(static_cast<double>(ins.arity));
      break;
    case Opcode::Sel:
      r["then"] = encode_code(*ins.then_branch);
      r["else"] = encode_code(*ins.else_branch);
      break;
    default: break;
  }
  return r;
}

inline RepList encode_code(const ControlList& code) {
  RepList out;
  out.reserve(code.size());
  for (const auto& ins : code) out.push_back(encode_instruction(ins));
  return out;
}

/// Inverse of encode_code; the list must already have passed check_shape.
inline ControlList decode_code(const RepList& list) {
  ControlList out;
  out.reserve(list.size());
  for (const auto& e : list) {
    const auto& r = e.record();
    Opcode op = *opcode_by_name(r.find("op")->second.value().as_text());
    Instruction ins = Instruction::make(op);
    switch (op) {
      case Opcode::Const: ins.constant = r.find("value")->second.value(); break;
      case Opcode::Var:
      case Opcode::Set: ins.name = r.find("name")->second.value().as_text(); break;
      case Opcode::MakeClosure: ins.proto = r.find("proto")->second.value().as_loc(); break;
      case Opcode::Prim:
        ins = Instruction::primitive(*prim_by_name(r.find("prim")->second.value().as_text()));
        break;
      case Opcode::Sel:
        ins = Instruction::sel(decode_code(r.find("then")->second.list()),
                               decode_code(r.find("else")->second.list()));
        break;
      default: break;
    }
    out.push_back(std::move(ins));
  }
  return out;
}

/// Distinct constants of `code`, in order of first appearance.
inline std::vector<Value> collect_consts(const ControlList& code) {
  std::vector<Value> out;
  std::function<void(const ControlList&)> walk = [&](const ControlList& c) {
    for (const auto& ins : c) {
      if (ins.op == Opcode::Const &&
          std::find(out.begin(), out.end(), ins.constant) == out.end())
        out.push_back(ins.constant);
      if (ins.op == Opcode::Sel) {
        walk(*ins.then_branch);
        walk(*ins.else_branch);
      }
    }
  };
  walk(code);
  return out;
}

/// Distinct protos referenced from `code`, in order of first appearance.
inline std::vector<Loc> collect_inner(const ControlList& code) {
  std::vector<Loc> out;
  for_each_proto_ref(code, [&](Loc l) {
    if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
  });
  return out;
}

}  // namespace sigma
