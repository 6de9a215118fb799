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

#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <variant>

namespace sigma {

/// Identity of a structured entity in the store.
struct Loc {
  std::uint64_t id = 0;
  friend auto operator<=>(const Loc&, const Loc&) = default;
};

struct Nil {
  friend auto operator<=>(const Nil&, const Nil&) = default;
};

/// A machine value: an atom carried inline, or a location in the store.
class Value {
 public:
  using Storage = std::variant<Nil, bool, double, std::string, Loc>;

  Value() = default;
  Value(Nil) {}
  Value(bool b) : v_(b) {}
  Value(double d) : v_(d) {}
  Value(int i) : v_(static_cast<double>(i)) {}
  Value(std::string s) : v_(std::move(s)) {}
  Value(const char* s) : v_(std::string(s)) {}
  Value(Loc l) : v_(l) {}

  bool is_nil() const { return std::holds_alternative<Nil>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }
  bool is_num() const { return std::holds_alternative<double>(v_); }
  bool is_text() const { return std::holds_alternative<std::string>(v_); }
  bool is_loc() const { return std::holds_alternative<Loc>(v_); }
  bool is_atom() const { return !is_loc(); }

  bool as_bool() const { return std::get<bool>(v_); }
  double as_num() const { return std::get<double>(v_); }
  const std::string& as_text() const { return std::get<std::string>(v_); }
  Loc as_loc() const { return std::get<Loc>(v_); }

  const Storage& storage() const { return v_; }

  /// Lua truthiness: only nil and false are false.
  bool truthy() const { return !is_nil() && !(is_bool() && !as_bool()); }

  friend bool operator==(const Value& a, const Value& b) { return a.v_ == b.v_; }

  /// Total order used for table keys: by variant alternative, then payload.
  /// NaN is never admitted as a key, so `<` on doubles is a strict weak order here.
  friend bool operator<(const Value& a, const Value& b) { return a.v_ < b.v_; }

 private:
  Storage v_;
};

/// Lua-style rendering of numbers ("%.14g").
inline std::string format_number(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.14g", d);
  return buf;
}

inline std::string location_name(Loc l) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(l.id));
  return buf;
}

/// Text shown by `print`.
inline std::string display(const Value& v) {
  struct Visitor {
    std::string operator()(Nil) const { return "nil"; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(double d) const { return format_number(d); }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(Loc l) const { return "<" + location_name(l) + ">"; }
  };
  return std::visit(Visitor{}, v.storage());
}

inline std::string type_name(const Value& v) {
  switch (v.storage().index()) {
    case 0: return "nil";
    case 1: return "boolean";
    case 2: return "number";
    case 3: return "string";
    default: return "location";
  }
}

}  // namespace sigma
