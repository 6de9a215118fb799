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

// Deep capture of value graphs and coroutines into a WireDoc, its canonical
// JSON text form, and reconstruction with promises for back references.
//
// Inside a WireDoc every handle is a node id (a Loc whose id is the node key).
// Frames are nodes of kind `frame` referenced only from their thread's
// `frames` list, innermost first.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sigma/files.hpp"
#include "sigma/reflect.hpp"
#include "sigma/representation.hpp"
#include "sigma/state.hpp"

namespace sigma::pickle {

inline constexpr std::string_view kVersion = "sigma-dump/1";

class PickleError : public Error {
 public:
  enum class Kind { ParseError, DanglingRef, SchemaViolation, NonSerializable, MissingFile };

  PickleError(Kind kind, const std::string& msg, std::size_t offset = 0)
      : Error(std::string(kind_name(kind)) + ": " + msg), kind_(kind), offset_(offset) {}

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

  static std::string_view kind_name(Kind k) {
    switch (k) {
      case Kind::ParseError: return "ParseError";
      case Kind::DanglingRef: return "DanglingRef";
      case Kind::SchemaViolation: return "SchemaViolation";
      case Kind::NonSerializable: return "NonSerializable";
      case Kind::MissingFile: return "MissingFile";
    }
    return "?";
  }

 private:
  Kind kind_;
  std::size_t offset_;
};

struct NodeRecord {
  TypeName kind = TypeName::Table;
  std::string origin;  // name() on the capturing machine; empty for frames
  RepRecord payload;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

struct FileRecord {
  std::uint64_t node = 0;
  std::string path;
  std::string mode;
  std::uint64_t position = 0;

  friend bool operator==(const FileRecord&, const FileRecord&) = default;
};

struct WireDoc {
  std::string version{kVersion};
  std::uint64_t root = 0;
  std::map<std::uint64_t, NodeRecord> nodes;
  std::vector<FileRecord> files;

  friend bool operator==(const WireDoc&, const WireDoc&) = default;

  std::size_t count(TypeName kind) const {
    return static_cast<std::size_t>(std::count_if(
        nodes.begin(), nodes.end(), [&](const auto& n) { return n.second.kind == kind; }));
  }
};

/// What to do with a value that cannot leave the machine: a closed or
/// unregistered file, or an active coroutine.
struct ErrorPolicy {
  enum class Kind { Fail, ReplaceWithNil, Hook } kind = Kind::Fail;
  /// For Hook: a substitute record (without handles), or nullopt to fail.
  std::function<std::optional<NodeRecord>(const Representation&)> hook;

  static ErrorPolicy fail() { return {}; }
  static ErrorPolicy replace_with_nil() { return {Kind::ReplaceWithNil, {}}; }
  static ErrorPolicy with_hook(std::function<std::optional<NodeRecord>(const Representation&)> h) {
    return {Kind::Hook, std::move(h)};
  }
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline Loc ref(std::uint64_t id) { return Loc{id}; }

[[noreturn]] inline void schema_violation(std::uint64_t id, const std::string& field,
                                          const std::string& what) {
  throw PickleError(PickleError::Kind::SchemaViolation,
                    "node " + std::to_string(id) + " field " + field + ": " + what);
}

}  // namespace detail

/// Checks every WireDoc invariant: refs resolve, payloads fit their schema,
/// frames belong to exactly one thread, files match file nodes.
inline void validate(const WireDoc& doc) {
  if (doc.version != kVersion)
    throw PickleError(PickleError::Kind::ParseError, "unsupported version '" + doc.version + "'");
  if (!doc.nodes.count(doc.root))
    throw PickleError(PickleError::Kind::DanglingRef, "root " + std::to_string(doc.root));
  KindOf kinds = [&doc](Loc l) -> std::optional<TypeName> {
    auto it = doc.nodes.find(l.id);
    if (it == doc.nodes.end()) return std::nullopt;
    return it->second.kind;
  };
  std::map<std::uint64_t, int> frame_owners;
  for (const auto& [id, n] : doc.nodes) {
    if (auto p = check_shape(n.kind, n.payload, kinds)) {
      if (p->fault == Fault::UnresolvedHandle)
        throw PickleError(PickleError::Kind::DanglingRef,
                          "node " + std::to_string(id) + " field " + p->field);
      detail::schema_violation(id, p->field, p->detail);
    }
    if (n.kind == TypeName::Thread) {
      const auto& depth = n.payload.find("depth")->second.value();
      auto frames = n.payload.find("frames");
      std::size_t count = frames == n.payload.end() ? 0 : frames->second.list().size();
      if (depth.as_num() != static_cast<double>(count))
        detail::schema_violation(id, "depth", "does not match the frame list");
      if (count)
        for (const auto& f : frames->second.list()) ++frame_owners[f.value().as_loc().id];
    }
  }
  for (const auto& [id, n] : doc.nodes) {
    if (n.kind != TypeName::Frame) continue;
    if (frame_owners[id] != 1) detail::schema_violation(id, "frames", "frame must have one owner");
    if (doc.root == id) detail::schema_violation(id, "root", "a frame cannot be the root");
  }
  // A frame may only appear in `frames`; the schema lets a Value slot hold any
  // handle kind except frame, so counting owners above is sufficient.
  std::set<std::uint64_t> file_nodes;
  for (const auto& f : doc.files) {
    auto it = doc.nodes.find(f.node);
    if (it == doc.nodes.end())
      throw PickleError(PickleError::Kind::DanglingRef, "file node " + std::to_string(f.node));
    if (it->second.kind != TypeName::File)
      detail::schema_violation(f.node, "files", "not a file node");
    if (!valid_file_mode(f.mode)) detail::schema_violation(f.node, "mode", "bad mode");
    if (!file_nodes.insert(f.node).second)
      detail::schema_violation(f.node, "files", "listed twice");
  }
  for (const auto& [id, n] : doc.nodes)
    if (n.kind == TypeName::File && !file_nodes.count(id))
      detail::schema_violation(id, "files", "file node without a file record");
}

// ---------------------------------------------------------------------------
// Capture

namespace detail {

class Capturer {
 public:
  Capturer(const MachineState& st, const ErrorPolicy& policy) : st_(st), policy_(policy) {}

  WireDoc run(Loc root) {
    if (auto why = unserializable(root))
      throw PickleError(PickleError::Kind::NonSerializable,
                        location_name(root) + " (" + *why + ") is the capture root");
    doc_.root = enqueue(root);
    while (!queue_.empty()) {
      auto [id, loc] = queue_.front();
      queue_.pop_front();
      emit(id, loc);
    }
    return std::move(doc_);
  }

 private:
  std::optional<std::string> unserializable(Loc l) const {
    auto kind = kind_at(st_.store, l);
    if (!kind)
      throw PickleError(PickleError::Kind::DanglingRef, location_name(l) + " is not a value");
    if (*kind == TypeName::File && !st_.open_files.count(l)) return "closed file";
    if (*kind == TypeName::Thread && st_.is_active(l)) return "active coroutine";
    return std::nullopt;
  }

  std::uint64_t enqueue(Loc l) {
    std::uint64_t id = next_++;
    seen_.emplace(l.id, id);
    queue_.emplace_back(id, l);
    return id;
  }

  Value handle(Loc l) {
    if (auto it = seen_.find(l.id); it != seen_.end())
      return it->second ? Value(ref(*it->second)) : Value();
    auto why = unserializable(l);
    if (!why) return Value(ref(enqueue(l)));
    std::string what = location_name(l) + " (" + *why + ")";
    switch (policy_.kind) {
      case ErrorPolicy::Kind::Fail: break;
      case ErrorPolicy::Kind::ReplaceWithNil: seen_.emplace(l.id, std::nullopt); return Value();
      case ErrorPolicy::Kind::Hook: {
        auto sub = policy_.hook(*reflect::describe(st_, Value(l)));
        if (!sub) break;
        KindOf no_handles = [](Loc) -> std::optional<TypeName> { return std::nullopt; };
        if (auto p = check_shape(sub->kind, sub->payload, no_handles))
          throw PickleError(PickleError::Kind::SchemaViolation,
                            "hook substitute for " + what + ": " + p->field + ": " + p->detail);
        if (sub->kind == TypeName::Thread || sub->kind == TypeName::Frame)
          throw PickleError(PickleError::Kind::SchemaViolation,
                            "hook substitute for " + what + " must be a plain value");
        std::uint64_t id = next_++;
        seen_.emplace(l.id, id);
        if (sub->kind == TypeName::File) add_file(id, sub->payload);
        sub->origin = location_name(l);
        doc_.nodes.emplace(id, std::move(*sub));
        return Value(ref(id));
      }
    }
    throw PickleError(PickleError::Kind::NonSerializable, what);
  }

  RepRecord relocated(RepRecord r) {
    relocate(r, [this](Loc l) { return handle(l); });
    return r;
  }

  void add_file(std::uint64_t id, const RepRecord& p) {
    doc_.files.push_back({id, p.find("path")->second.value().as_text(),
                          p.find("mode")->second.value().as_text(),
                          static_cast<std::uint64_t>(p.find("position")->second.value().as_num())});
  }

  void emit(std::uint64_t id, Loc l) {
    Representation rep = *reflect::describe(st_, Value(l));
    NodeRecord node{rep.kind, location_name(l), relocated(std::move(rep.fields))};
    if (rep.kind == TypeName::Thread) {
      const auto depth = static_cast<std::int64_t>(node.payload["depth"].value().as_num());
      RepList frames;
      for (std::int64_t level = 1; level <= depth; ++level) {
        Representation fr = *reflect::describe(st_, Value(l), level);
        std::uint64_t fid = next_++;
        doc_.nodes.emplace(fid, NodeRecord{TypeName::Frame, "", relocated(std::move(fr.fields))});
        frames.emplace_back(Value(ref(fid)));
      }
      if (!frames.empty()) node.payload["frames"] = std::move(frames);
    }
    if (node.kind == TypeName::File) add_file(id, node.payload);
    doc_.nodes.emplace(id, std::move(node));
  }

  const MachineState& st_;
  const ErrorPolicy& policy_;
  WireDoc doc_;
  std::uint64_t next_ = 1;
  std::unordered_map<std::uint64_t, std::optional<std::uint64_t>> seen_;
  std::deque<std::pair<std::uint64_t, Loc>> queue_;
};

}  // namespace detail

/// Captures the graph reachable from a structured value; each distinct
/// structured value becomes exactly one node.
inline WireDoc capture_value(const MachineState& st, const Value& v,
                             const ErrorPolicy& policy = {}) {
  if (!v.is_loc())
    throw PickleError(PickleError::Kind::NonSerializable, type_name(v) + " is atomic");
  return detail::Capturer(st, policy).run(v.as_loc());
}

/// Captures a suspended or dead coroutine with all its activation records.
inline WireDoc deep_capture(const MachineState& st, Loc coro, const ErrorPolicy& policy = {}) {
  if (!st.store.get_if<Coroutine>(coro))
    throw PickleError(PickleError::Kind::NonSerializable, location_name(coro) + " is not a coroutine");
  return detail::Capturer(st, policy).run(coro);
}

// ---------------------------------------------------------------------------
// Canonical form

/// Renumbers nodes 1..n in breadth-first order from the root, following
/// handles in canonical payload order. Unreachable nodes are dropped.
inline WireDoc normalize(const WireDoc& doc) {
  std::map<std::uint64_t, std::uint64_t> renum;
  std::deque<std::uint64_t> queue;
  auto visit = [&](std::uint64_t old) {
    if (renum.count(old)) return;
    renum.emplace(old, renum.size() + 1);
    queue.push_back(old);
  };
  visit(doc.root);
  WireDoc out;
  out.version = doc.version;
  out.root = 1;
  while (!queue.empty()) {
    std::uint64_t old = queue.front();
    queue.pop_front();
    auto it = doc.nodes.find(old);
    if (it == doc.nodes.end())
      throw PickleError(PickleError::Kind::DanglingRef, "node " + std::to_string(old));
    NodeRecord n = it->second;
    for_each_handle(n.payload, [&](Loc& l) {
      visit(l.id);
      l = Loc{renum.at(l.id)};
    });
    out.nodes.emplace(renum.at(old), std::move(n));
  }
  for (const auto& f : doc.files) {
    auto it = renum.find(f.node);
    if (it == renum.end()) continue;
    FileRecord r = f;
    r.node = it->second;
    out.files.push_back(std::move(r));
  }
  std::sort(out.files.begin(), out.files.end(),
            [](const FileRecord& a, const FileRecord& b) { return a.node < b.node; });
  return out;
}

// ---------------------------------------------------------------------------
// JSON text

namespace detail {

using nlohmann::json;

inline constexpr double kExactIntegers = 9007199254740992.0;  // 2^53

inline json number_json(double d) {
  if (std::isnan(d)) return json{{"$num", "nan"}};
  if (std::isinf(d)) return json{{"$num", d > 0 ? "inf" : "-inf"}};
  if (d == std::floor(d) && std::fabs(d) < kExactIntegers && !(d == 0 && std::signbit(d)))
    return json(static_cast<std::int64_t>(d));
  return json(d);
}

inline json to_json(const RepValue& v) {
  if (v.is_list()) {
    json a = json::array();
    for (const auto& e : v.list()) a.push_back(to_json(e));
    return a;
  }
  if (v.is_record()) {
    json o = json::object();
    for (const auto& [k, e] : v.record()) o[k] = to_json(e);
    return o;
  }
  const Value& x = v.value();
  if (x.is_nil()) return nullptr;
  if (x.is_bool()) return x.as_bool();
  if (x.is_num()) return number_json(x.as_num());
  if (x.is_text()) return x.as_text();
  return json{{"$ref", std::to_string(x.as_loc().id)}};
}

[[noreturn]] inline void malformed(const std::string& what) {
  throw PickleError(PickleError::Kind::ParseError, what);
}

inline std::uint64_t parse_id(const json& j, const std::string& where) {
  if (!j.is_string()) malformed(where + ": node id must be a decimal string");
  const auto& s = j.get_ref<const std::string&>();
  if (s.empty() || s.size() > 19 || !std::all_of(s.begin(), s.end(), ::isdigit))
    malformed(where + ": bad node id '" + s + "'");
  return std::stoull(s);
}

inline RepValue from_json(const json& j, const std::string& where) {
  switch (j.type()) {
    case json::value_t::null: return Value();
    case json::value_t::boolean: return Value(j.get<bool>());
    case json::value_t::number_integer: return Value(static_cast<double>(j.get<std::int64_t>()));
    case json::value_t::number_unsigned: return Value(static_cast<double>(j.get<std::uint64_t>()));
    case json::value_t::number_float: return Value(j.get<double>());
    case json::value_t::string: return Value(j.get<std::string>());
    case json::value_t::array: {
      RepList l;
      for (const auto& e : j) l.push_back(from_json(e, where));
      return l;
    }
    case json::value_t::object: {
      if (j.size() == 1 && j.contains("$ref")) return Value(Loc{parse_id(j["$ref"], where)});
      if (j.size() == 1 && j.contains("$num")) {
        const json& n = j["$num"];
        if (n == "nan") return Value(std::nan(""));
        if (n == "inf") return Value(HUGE_VAL);
        if (n == "-inf") return Value(-HUGE_VAL);
        malformed(where + ": bad $num");
      }
      RepRecord r;
      for (const auto& [k, e] : j.items()) r[k] = from_json(e, where + "." + k);
      return r;
    }
    default: malformed(where + ": unsupported JSON value");
  }
}

inline const json& member(const json& o, const char* key, const std::string& where) {
  if (!o.is_object() || !o.contains(key)) malformed(where + ": missing '" + key + "'");
  return o[key];
}

}  // namespace detail

/// Canonical UTF-8 JSON text of the normalized document.
inline std::string serialize(const WireDoc& raw) {
  using detail::json;
  WireDoc doc = normalize(raw);
  json nodes = json::object();
  for (const auto& [id, n] : doc.nodes) {
    json node = json::object();
    node["kind"] = std::string(type_name_text(n.kind));
    node["origin"] = n.origin;
    node["payload"] = detail::to_json(RepValue(n.payload));
    nodes[std::to_string(id)] = std::move(node);
  }
  json files = json::array();
  for (const auto& f : doc.files)
    files.push_back(json{{"node", std::to_string(f.node)},
                         {"path", f.path},
                         {"mode", f.mode},
                         {"position", f.position}});
  json top = json::object();
  top["version"] = doc.version;
  top["root"] = std::to_string(doc.root);
  top["nodes"] = std::move(nodes);
  top["files"] = std::move(files);
  return top.dump();
}

/// Parses and validates a document.
inline WireDoc deserialize(std::string_view text) {
  using detail::json;
  json top;
  try {
    top = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw PickleError(PickleError::Kind::ParseError, e.what(), e.byte);
  }
  WireDoc doc;
  const json& version = detail::member(top, "version", "document");
  if (!version.is_string()) detail::malformed("version must be text");
  doc.version = version.get<std::string>();
  if (doc.version != kVersion)
    throw PickleError(PickleError::Kind::ParseError, "unsupported version '" + doc.version + "'");
  doc.root = detail::parse_id(detail::member(top, "root", "document"), "root");
  const json& nodes = detail::member(top, "nodes", "document");
  if (!nodes.is_object()) detail::malformed("nodes must be an object");
  for (const auto& [key, n] : nodes.items()) {
    std::uint64_t id = detail::parse_id(json(key), "nodes");
    const std::string where = "node " + key;
    const json& kind = detail::member(n, "kind", where);
    auto k = kind.is_string() ? type_name_by_text(kind.get<std::string>()) : std::nullopt;
    if (!k) detail::schema_violation(id, "kind", "unknown kind");
    NodeRecord rec{*k, "", {}};
    if (n.contains("origin") && n["origin"].is_string()) rec.origin = n["origin"].get<std::string>();
    RepValue payload = detail::from_json(detail::member(n, "payload", where), where);
    if (!payload.is_record()) detail::schema_violation(id, "payload", "must be an object");
    rec.payload = std::move(payload.record());
    doc.nodes.emplace(id, std::move(rec));
  }
  const json& files = detail::member(top, "files", "document");
  if (!files.is_array()) detail::malformed("files must be an array");
  for (const auto& f : files) {
    FileRecord r;
    r.node = detail::parse_id(detail::member(f, "node", "file"), "file");
    const json& path = detail::member(f, "path", "file");
    const json& mode = detail::member(f, "mode", "file");
    const json& pos = detail::member(f, "position", "file");
    if (!path.is_string() || !mode.is_string() || !pos.is_number_unsigned())
      detail::schema_violation(r.node, "files", "bad file record");
    r.path = path.get<std::string>();
    r.mode = mode.get<std::string>();
    r.position = pos.get<std::uint64_t>();
    doc.files.push_back(std::move(r));
  }
  validate(doc);
  return doc;
}

// ---------------------------------------------------------------------------
// Files

inline std::string_view restored_mode(std::string_view mode) {
  if (mode == "w") return "r+";
  if (mode == "wb") return "rb+";
  return mode;
}

/// Reopens a captured file under the machine's file root at its recorded
/// position. Truncating modes are remapped so the content survives.
inline Loc restore_file(MachineState& st, const FileRecord& rec) {
  if (!valid_file_mode(rec.mode))
    fail(Fault::HostOpenFailure, "restore", "bad mode '" + rec.mode + "'");
  auto full = resolve_under(st.file_root, rec.path);
  std::string mode(restored_mode(rec.mode));
  std::string host_mode = mode.find('b') == std::string::npos ? mode + "b" : mode;
  auto f = sigma::detail::open_host(full, host_mode.c_str());
  if (!f) fail(Fault::HostOpenFailure, "restore", "cannot open '" + rec.path + "' in mode " + mode);
  std::fseek(f.get(), 0, SEEK_END);
  auto size = static_cast<std::uint64_t>(std::ftell(f.get()));
  if (rec.position > size)
    fail(Fault::SeekBeyondEnd, "restore",
         rec.path + ": position " + std::to_string(rec.position) + " beyond size " +
             std::to_string(size));
  Loc l = st.store.allocate(FileHandle{rec.path, mode, rec.position});
  st.open_files.insert(l);
  return l;
}

// ---------------------------------------------------------------------------
// Instantiation

namespace detail {

class Instantiator {
 public:
  Instantiator(MachineState& st, const WireDoc& doc, std::optional<Loc> into)
      : st_(st), doc_(doc), into_(into) {}

  Loc run() {
    for (const auto& f : doc_.files) {
      if (!std::filesystem::exists(resolve_under(st_.file_root, f.path)))
        throw PickleError(PickleError::Kind::MissingFile, f.path);
      built_[f.node] = restore_file(st_, f);
    }
    if (into_) built_[doc_.root] = *into_;  // back references go straight to the target
    build_from(doc_.root);
    if (!promises_.empty())
      throw std::logic_error("instantiate: " + std::to_string(promises_.size()) +
                             " promises left unfulfilled");
    return built_.at(doc_.root);
  }

 private:
  enum class Mark { Open, Done };

  const NodeRecord& node(std::uint64_t id) const { return doc_.nodes.at(id); }

  /// Handles a node depends on; a thread depends on what its frames refer to.
  std::vector<std::uint64_t> deps(std::uint64_t id) const {
    std::vector<std::uint64_t> out;
    auto collect = [&](const RepRecord& r) {
      RepRecord copy = r;
      for_each_handle(copy, [&](Loc& l) {
        if (node(l.id).kind != TypeName::Frame) out.push_back(l.id);
      });
    };
    const NodeRecord& n = node(id);
    collect(n.payload);
    if (n.kind == TypeName::Thread)
      if (auto it = n.payload.find("frames"); it != n.payload.end())
        for (const auto& f : it->second.list()) collect(node(f.value().as_loc().id).payload);
    return out;
  }

  Loc placeholder(TypeName kind) {
    switch (kind) {
      case TypeName::Function: {
        Loc p = st_.store.allocate(Proto{});
        return st_.store.allocate(Closure{p, st_.new_env()});
      }
      case TypeName::Proto: return st_.store.allocate(Proto{});
      case TypeName::Env: return st_.store.allocate(Env{});
      case TypeName::Table: return st_.store.allocate(Table{});
      case TypeName::Thread: return st_.store.allocate(Coroutine{{}, Status::Dead});
      default: throw std::logic_error("instantiate: no placeholder for this kind");
    }
  }

  RepRecord resolved(RepRecord r) const {
    relocate(r, [this](Loc l) { return Value(built_.at(l.id)); });
    return r;
  }

  Loc make(std::uint64_t id) {
    const NodeRecord& n = node(id);
    if (n.kind != TypeName::Thread)
      return reflect::build(st_, Representation{n.kind, resolved(n.payload)});
    Loc coro = (id == doc_.root && into_) ? *into_ : newthread_loc();
    auto it = n.payload.find("frames");
    if (it != n.payload.end()) {
      const auto& frames = it->second.list();
      for (auto f = frames.rbegin(); f != frames.rend(); ++f) {
        const NodeRecord& fr = node(f->value().as_loc().id);
        reflect::install_frame(st_, coro, Representation{TypeName::Frame, resolved(fr.payload)}, 0);
      }
    }
    auto status = status_by_name(n.payload.find("status")->second.value().as_text());
    if (!status || (*status != Status::Suspended && *status != Status::Dead))
      schema_violation(id, "status", "only suspended or dead coroutines can be restored");
    reflect::setstatus(st_, coro, *status);
    return coro;
  }

  Loc newthread_loc() { return st_.store.allocate(Coroutine{{}, Status::Suspended}); }

  void finish(std::uint64_t id) {
    Loc fresh = make(id);
    if (auto p = promises_.find(id); p != promises_.end()) {
      Loc ph = p->second;
      st_.store.at(ph) = std::move(st_.store.at(fresh));
      st_.store.erase(fresh);
      promises_.erase(p);
    } else {
      built_[id] = fresh;
    }
    marks_[id] = Mark::Done;
  }

  void build_from(std::uint64_t root) {
    struct Item {
      std::uint64_t id;
      std::vector<std::uint64_t> deps;
      std::size_t next = 0;
    };
    std::vector<Item> stack;
    marks_[root] = Mark::Open;
    stack.push_back({root, deps(root)});
    while (!stack.empty()) {
      Item& top = stack.back();
      if (top.next == top.deps.size()) {
        std::uint64_t id = top.id;
        stack.pop_back();
        finish(id);
        continue;
      }
      std::uint64_t d = top.deps[top.next++];
      if (built_.count(d)) continue;
      auto m = marks_.find(d);
      if (m == marks_.end()) {
        marks_[d] = Mark::Open;
        stack.push_back({d, deps(d)});
      } else if (m->second == Mark::Open) {
        Loc ph = placeholder(node(d).kind);
        built_[d] = ph;
        promises_[d] = ph;
      }
    }
  }

  MachineState& st_;
  const WireDoc& doc_;
  std::optional<Loc> into_;
  std::map<std::uint64_t, Loc> built_;
  std::map<std::uint64_t, Mark> marks_;
  std::map<std::uint64_t, Loc> promises_;
};

}  // namespace detail

/// Rebuilds the captured coroutine. With `into`, its frames are pushed on top
/// of that (inactive) coroutine instead of a fresh one.
inline Loc instantiate(MachineState& st, const WireDoc& doc, std::optional<Loc> into = std::nullopt) {
  validate(doc);
  if (doc.nodes.at(doc.root).kind != TypeName::Thread)
    throw PickleError(PickleError::Kind::SchemaViolation, "root is not a coroutine");
  if (into && st.is_active(*into))
    fail(Fault::InstallIntoRunning, "instantiate", "coroutine " + location_name(*into) + " is active");
  return detail::Instantiator(st, doc, into).run();
}

/// Rebuilds the value graph of any document.
inline Value instantiate_value(MachineState& st, const WireDoc& doc) {
  validate(doc);
  return Value(detail::Instantiator(st, doc, std::nullopt).run());
}

// ---------------------------------------------------------------------------
// Editing

/// Frame node at `level` of the root coroutine.
inline std::optional<std::uint64_t> frame_node(const WireDoc& doc, std::int64_t level) {
  const NodeRecord& root = doc.nodes.at(doc.root);
  auto it = root.payload.find("frames");
  if (root.kind != TypeName::Thread || it == root.payload.end() || level < 1 ||
      level > static_cast<std::int64_t>(it->second.list().size()))
    return std::nullopt;
  return it->second.list()[static_cast<std::size_t>(level - 1)].value().as_loc().id;
}

/// Sets variable `x`, as seen from the frame at `level`, to `v` in the
/// captured environment chain. Returns false when `x` is not bound there.
inline bool rebind(WireDoc& doc, std::int64_t level, std::string_view x, const Value& v) {
  auto f = frame_node(doc, level);
  if (!f) return false;
  std::optional<std::uint64_t> env = doc.nodes.at(*f).payload.find("env")->second.value().as_loc().id;
  while (env) {
    NodeRecord& e = doc.nodes.at(*env);
    auto& vars = e.payload.find("vars")->second.record();
    if (auto it = vars.find(x); it != vars.end()) {
      it->second = v;
      return true;
    }
    auto parent = e.payload.find("parent");
    env = parent != e.payload.end() && parent->second.value().is_loc()
              ? std::optional(parent->second.value().as_loc().id)
              : std::nullopt;
  }
  return false;
}

}  // namespace sigma::pickle
