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

// Reification and installation of structured values and activation records.
//
// Two surfaces share one core:
//   describe()/build()/install_frame() work on Representation trees and are
//   what the pickler uses;
//   reify()/install() materialize those trees as ordinary tables in the store
//   (and read them back), which is what programs see.
//
// Levels count activation records from the innermost one: level 1 is the
// frame that was running when the coroutine suspended.

#include <optional>
#include <string>

#include "sigma/representation.hpp"
#include "sigma/state.hpp"

namespace sigma {

/// Kind of the first-class entity at `l`, or nullopt for cells and missing entries.
inline std::optional<TypeName> kind_at(const Store& store, Loc l) {
  if (!store.contains(l)) return std::nullopt;
  switch (store.at(l).index()) {
    case 1: return TypeName::Function;
    case 2: return TypeName::Proto;
    case 3: return TypeName::Env;
    case 4: return TypeName::Table;
    case 5: return TypeName::Thread;
    case 6: return TypeName::File;
    default: return std::nullopt;
  }
}

inline KindOf store_kinds(const MachineState& st) {
  return [&st](Loc l) { return kind_at(st.store, l); };
}

/// The frame that starts a coroutine on `closure`: applying it to the first
/// resume argument.
inline Frame entry_frame(MachineState& st, Loc closure) {
  return Frame({Value(closure)}, st.new_env(), {Instruction::make(Opcode::Ap)});
}

/// Frames of a coroutine wherever they currently live: the store while
/// inactive, the activation stack while running or normal.
inline const FrameStack& coroutine_frames(const MachineState& st, Loc coro) {
  for (const auto& a : st.active)
    if (a.coroutine == coro) return a.frames;
  return st.store.get_if<Coroutine>(coro)->frames;
}

namespace reflect {

inline std::string name(const Value& v) {
  if (!v.is_loc()) fail(Fault::NameOfAtomic, "name", type_name(v) + " has no identity");
  return location_name(v.as_loc());
}

inline Representation describe_frame(const Frame& f, bool resumable) {
  Representation rep{TypeName::Frame, {}};
  RepList stack;
  for (const auto& v : f.stack) stack.emplace_back(v);
  rep.fields["stack"] = std::move(stack);
  rep.fields["env"] = Value(f.env);
  rep.fields["code"] = encode_code(f.remaining_code());
  rep.fields["resumable"] = Value(resumable);
  return rep;
}

/// First-level description of `v`. For coroutines, `level` selects an
/// activation record; nullopt is returned beyond the frame depth.
inline std::optional<Representation> describe(const MachineState& st, const Value& v,
                                              std::optional<std::int64_t> level = std::nullopt) {
  if (!v.is_loc()) fail(Fault::ReifyAtomic, "reify", type_name(v) + " needs no reification");
  Loc l = v.as_loc();
  auto kind = kind_at(st.store, l);
  if (!kind) fail(Fault::BadTarget, "reify", location_name(l) + " is not a first-class value");
  if (level && *kind != TypeName::Thread)
    fail(Fault::BadLevel, "reify", "levels apply to coroutines only");

  Representation rep{*kind, {}};
  const StoredValue& sv = st.store.at(l);
  switch (*kind) {
    case TypeName::Function: {
      const auto& c = std::get<Closure>(sv);
      rep.fields["p"] = Value(c.proto);
      rep.fields["env"] = Value(c.env);
      break;
    }
    case TypeName::Proto: {
      const auto& p = std::get<Proto>(sv);
      rep.fields["param"] = Value(p.param);
      rep.fields["code"] = encode_code(*p.code);
      RepList consts, inner;
      for (const auto& c : p.consts) consts.emplace_back(c);
      for (const auto& i : p.inner) inner.emplace_back(Value(i));
      rep.fields["consts"] = std::move(consts);
      rep.fields["inner"] = std::move(inner);
      if (!p.label.empty()) rep.fields["label"] = Value(p.label);
      break;
    }
    case TypeName::Env: {
      const auto& e = std::get<Env>(sv);
      RepRecord vars;
      for (const auto& [x, cell] : e.bindings)
        vars[x] = st.store.get_if<Cell>(cell)->value;
      rep.fields["vars"] = std::move(vars);
      rep.fields["parent"] = e.parent ? Value(*e.parent) : Value();
      break;
    }
    case TypeName::Table: {
      RepList entries;
      for (const auto& [k, val] : std::get<Table>(sv).entries)
        entries.emplace_back(RepList{RepValue(k), RepValue(val)});
      rep.fields["entries"] = std::move(entries);
      break;
    }
    case TypeName::Thread: {
      const auto& co = std::get<Coroutine>(sv);
      if (!st.active.empty() && st.head().coroutine == l)
        fail(Fault::ReifyRunning, "reify", "coroutine " + location_name(l) + " is running");
      const FrameStack& frames = coroutine_frames(st, l);
      const auto depth = static_cast<std::int64_t>(frames.size());
      if (!level) {
        rep.fields["status"] = Value(std::string(status_name(co.status)));
        rep.fields["depth"] = Value(static_cast<double>(depth));
        break;
      }
      if (*level < 1) fail(Fault::BadLevel, "reify", "level " + std::to_string(*level));
      if (*level > depth) return std::nullopt;
      const Frame& f = frames[static_cast<std::size_t>(depth - *level)];
      return describe_frame(f, *level == 1 && co.status == Status::Suspended);
    }
    case TypeName::File: {
      const auto& fh = std::get<FileHandle>(sv);
      rep.fields["path"] = Value(fh.path);
      rep.fields["mode"] = Value(fh.mode);
      rep.fields["position"] = Value(static_cast<double>(fh.position));
      break;
    }
    case TypeName::Frame: break;
  }
  return rep;
}

inline void require_shape(const MachineState& st, const Representation& rep, std::string_view op) {
  if (auto p = check_shape(rep.kind, rep.fields, store_kinds(st)))
    fail(p->fault, std::string(op), p->field + ": " + p->detail);
}

namespace detail {
inline const RepValue* field(const Representation& rep, std::string_view name) {
  auto it = rep.fields.find(name);
  return it == rep.fields.end() ? nullptr : &it->second;
}
inline std::optional<Loc> opt_handle(const Representation& rep, std::string_view name) {
  const RepValue* v = field(rep, name);
  if (!v || v->value().is_nil()) return std::nullopt;
  return v->value().as_loc();
}
}  // namespace detail

/// Builds a fresh entity from a representation. Handles must already resolve
/// in this machine: installation proceeds from the inside out.
inline Loc build(MachineState& st, const Representation& rep) {
  require_shape(st, rep, "install");
  using detail::field;
  switch (rep.kind) {
    case TypeName::Function: {
      Loc proto = field(rep, "p")->value().as_loc();
      auto env = detail::opt_handle(rep, "env");
      return st.store.allocate(Closure{proto, env ? *env : st.new_env()});
    }
    case TypeName::Proto: {
      Proto p;
      p.param = field(rep, "param")->value().as_text();
      p.code = std::make_shared<const ControlList>(decode_code(field(rep, "code")->list()));
      p.consts = collect_consts(*p.code);
      p.inner = collect_inner(*p.code);
      if (const RepValue* c = field(rep, "consts")) {
        std::vector<Value> given;
        for (const auto& e : c->list()) given.push_back(e.value());
        if (given != p.consts)
          fail(Fault::ShapeMismatch, "install", "consts: do not match the constants in code");
      }
      if (const RepValue* in = field(rep, "inner")) {
        std::vector<Loc> given;
        for (const auto& e : in->list()) given.push_back(e.value().as_loc());
        if (given != p.inner)
          fail(Fault::ShapeMismatch, "install", "inner: does not match the protos in code");
      }
      if (const RepValue* lbl = field(rep, "label")) p.label = lbl->value().as_text();
      return st.store.allocate(std::move(p));
    }
    case TypeName::Env: {
      Env e;
      e.parent = detail::opt_handle(rep, "parent");
      for (const auto& [x, v] : field(rep, "vars")->record())
        e.bindings[x] = st.store.allocate(Cell{v.value()});
      return st.store.allocate(std::move(e));
    }
    case TypeName::Table: {
      Table t;
      for (const auto& pair : field(rep, "entries")->list())
        t.entries[pair.list()[0].value()] = pair.list()[1].value();
      return st.store.allocate(std::move(t));
    }
    case TypeName::Thread: {
      if (field(rep, "depth")->value().as_num() != 0 || field(rep, "frames"))
        fail(Fault::ShapeMismatch, "install",
             "depth: coroutines are rebuilt frame by frame into a new thread");
      auto status = status_by_name(field(rep, "status")->value().as_text());
      if (!status || (*status != Status::Suspended && *status != Status::Dead))
        fail(Fault::ShapeMismatch, "install", "status: must be suspended or dead");
      return st.store.allocate(Coroutine{{}, *status});
    }
    case TypeName::Frame:
      fail(Fault::BadTarget, "install", "frames are installed into a coroutine");
    case TypeName::File:
      fail(Fault::NotInstallable, "install", "files are reopened by the pickler");
  }
  return {};
}

inline Frame frame_from(const Representation& rep) {
  Frame f;
  for (const auto& v : detail::field(rep, "stack")->list()) f.stack.push_back(v.value());
  f.env = detail::field(rep, "env")->value().as_loc();
  f.control.push_back({std::make_shared<const ControlList>(
                           decode_code(detail::field(rep, "code")->list())),
                       0});
  return f;
}

namespace detail {
inline Coroutine& installable_coroutine(MachineState& st, Loc coro) {
  auto& co = st.store.expect<Coroutine>(coro, Fault::BadTarget, "install");
  if (st.is_active(coro))
    fail(Fault::InstallIntoRunning, "install", "coroutine " + location_name(coro) + " is active");
  return co;
}

inline void place_frame(Coroutine& co, Frame f, std::int64_t level) {
  const auto depth = static_cast<std::int64_t>(co.frames.size());
  if (level == 0) {
    co.frames.push_back(std::move(f));
  } else if (level >= 1 && level <= depth) {
    co.frames[static_cast<std::size_t>(depth - level)] = std::move(f);
  } else {
    fail(Fault::BadLevel, "install",
         "level " + std::to_string(level) + " with depth " + std::to_string(depth));
  }
}
}  // namespace detail

/// Copies a frame representation into level `level` of `coro`; level 0
/// pushes it as the new innermost record.
inline Loc install_frame(MachineState& st, Loc coro, const Representation& rep,
                         std::int64_t level) {
  auto& co = detail::installable_coroutine(st, coro);
  if (rep.kind != TypeName::Frame)
    fail(Fault::ShapeMismatch, "install", "expected a frame representation");
  require_shape(st, rep, "install");
  detail::place_frame(co, frame_from(rep), level);
  return coro;
}

/// Installs a closure as the entry record of `coro` (how create starts a
/// coroutine, decomposed).
inline Loc install_closure(MachineState& st, Loc coro, Loc closure, std::int64_t level) {
  auto& co = detail::installable_coroutine(st, coro);
  st.store.expect<Closure>(closure, Fault::NotAClosure, "install");
  detail::place_frame(co, entry_frame(st, closure), level);
  return coro;
}

inline void setstatus(MachineState& st, Loc coro, Status status) {
  auto& co = st.store.expect<Coroutine>(coro, Fault::BadTarget, "setstatus");
  if (st.is_active(coro))
    fail(Fault::SetStatusRunning, "setstatus", "coroutine " + location_name(coro) + " is active");
  if (status == Status::Running || status == Status::Normal)
    fail(Fault::SetStatusRunning, "setstatus", "running and normal follow the activation stack");
  if (status == Status::Suspended && co.frames.empty())
    fail(Fault::SuspendedWithoutFrames, "setstatus", "nothing to resume");
  if (status == Status::Dead) co.frames.clear();
  co.status = status;
}

// ---------------------------------------------------------------------------
// Representations as store tables

namespace detail {

inline Value materialize(MachineState& st, const RepValue& v) {
  if (v.is_value()) return v.value();
  Table t;
  if (v.is_list()) {
    double i = 0;
    for (const auto& e : v.list()) t.entries[Value(++i)] = materialize(st, e);
  } else {
    for (const auto& [k, e] : v.record()) t.entries[Value(k)] = materialize(st, e);
  }
  return Value(st.store.allocate(std::move(t)));
}

[[noreturn]] inline void bad_rep(const std::string& where, const std::string& what) {
  fail(Fault::ShapeMismatch, "install", where + ": " + what);
}

inline const Table& table_at(const MachineState& st, const Value& v, const std::string& where) {
  if (v.is_loc())
    if (const Table* t = st.store.get_if<Table>(v.as_loc())) return *t;
  bad_rep(where, "expected a table");
}

inline RepList read_list(const MachineState& st, const Value& v, const std::string& where,
                         const std::function<RepValue(const Value&, const std::string&)>& elem) {
  const Table& t = table_at(st, v, where);
  RepList out;
  for (double i = 1;; ++i) {
    auto it = t.entries.find(Value(i));
    if (it == t.entries.end()) break;
    out.push_back(elem(it->second, where + "[" + format_number(i) + "]"));
  }
  if (out.size() != t.entries.size()) bad_rep(where, "expected a sequence 1..n");
  return out;
}

inline RepValue read_code(const MachineState& st, const Value& v, const std::string& where);

inline RepValue read_instruction(const MachineState& st, const Value& v, const std::string& where) {
  const Table& t = table_at(st, v, where);
  RepRecord r;
  for (const auto& [k, e] : t.entries) {
    if (!k.is_text()) bad_rep(where, "instruction keys are text");
    if (k.as_text() == "then" || k.as_text() == "else")
      r[k.as_text()] = read_code(st, e, where + "." + k.as_text());
    else
      r[k.as_text()] = e;
  }
  return r;
}

inline RepValue read_code(const MachineState& st, const Value& v, const std::string& where) {
  return read_list(st, v, where, [&](const Value& e, const std::string& w) {
    return read_instruction(st, e, w);
  });
}

inline RepValue read_field(const MachineState& st, const FieldSpec& f, const Value& v) {
  const std::string where(f.name);
  auto plain = [](const Value& e, const std::string&) { return RepValue(e); };
  switch (f.shape) {
    case Shape::AtomList:
    case Shape::ValueList:
    case Shape::HandleList: return read_list(st, v, where, plain);
    case Shape::Code: return read_code(st, v, where);
    case Shape::VarMap: {
      RepRecord r;
      for (const auto& [k, e] : table_at(st, v, where).entries) {
        if (!k.is_text()) bad_rep(where, "variable names are text");
        r[k.as_text()] = e;
      }
      return r;
    }
    case Shape::Entries:
      return read_list(st, v, where, [&](const Value& e, const std::string& w) {
        return RepValue(read_list(st, e, w, plain));
      });
    default: return v;
  }
}

}  // namespace detail

/// Store-table form of a representation (always a fresh copy).
inline Value materialize(MachineState& st, const Representation& rep) {
  return detail::materialize(st, RepValue(rep.fields));
}

/// Reads a representation table back as `kind`.
inline Representation read_representation(const MachineState& st, TypeName kind, const Value& v) {
  const Table& t = detail::table_at(st, v, "representation");
  Representation rep{kind, {}};
  for (const auto& [k, e] : t.entries) {
    if (!k.is_text()) detail::bad_rep("representation", "field names are text");
    const FieldSpec* f = find_field(kind, k.as_text());
    if (!f)
      detail::bad_rep(k.as_text(), "not a field of " + std::string(type_name_text(kind)));
    rep.fields[k.as_text()] = detail::read_field(st, *f, e);
  }
  return rep;
}

/// reify(value, [level]): a fresh table describing `v`, or nil past the
/// innermost frame.
inline Value reify(MachineState& st, const Value& v,
                   std::optional<std::int64_t> level = std::nullopt) {
  auto rep = describe(st, v, level);
  if (!rep) return Value();
  return materialize(st, *rep);
}

/// Target of an installation: a type name, or a coroutine to install into.
using InstallTarget = std::variant<TypeName, Loc>;

/// install(rep, type | coroutine, [level]).
inline Value install(MachineState& st, const Value& rep, const InstallTarget& target,
                     std::optional<std::int64_t> level = std::nullopt) {
  if (const TypeName* t = std::get_if<TypeName>(&target)) {
    if (level) fail(Fault::BadLevel, "install", "levels apply to coroutines only");
    if (*t == TypeName::Frame)
      fail(Fault::BadTarget, "install", "frames are installed into a coroutine");
    if (*t == TypeName::File)
      fail(Fault::NotInstallable, "install", "files are reopened by the pickler");
    return Value(build(st, read_representation(st, *t, rep)));
  }
  Loc coro = std::get<Loc>(target);
  const std::int64_t lvl = level.value_or(0);
  if (rep.is_loc() && st.store.get_if<Closure>(rep.as_loc()))
    return Value(install_closure(st, coro, rep.as_loc(), lvl));
  detail::installable_coroutine(st, coro);
  return Value(install_frame(st, coro, read_representation(st, TypeName::Frame, rep), lvl));
}

/// fields(type): the schema as a table of field name -> shape text.
inline Value fields(MachineState& st, std::string_view type) {
  auto t = type_name_by_text(type);
  if (!t) fail(Fault::UnknownTypeName, "fields", "'" + std::string(type) + "'");
  Table out;
  for (const auto& f : schema(*t))
    out.entries[Value(std::string(f.name))] = Value(shape_text(f));
  return Value(st.store.allocate(std::move(out)));
}

}  // namespace reflect
}  // namespace sigma
