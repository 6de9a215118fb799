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

#include <charconv>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sigma/error.hpp"
#include "sigma/value.hpp"

namespace sigma::lang {

/// Byte range [begin, end) in the source, with the 1-based position of begin.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t line = 1;
  std::size_t column = 1;

  std::string where() const { return std::to_string(line) + ":" + std::to_string(column); }
};

struct SourceExpr {
  enum class Kind { Number, Boolean, Nil, String, Symbol, List };

  Kind kind = Kind::Nil;
  double number = 0;
  bool boolean = false;
  std::string text;  // string contents or symbol name
  std::vector<SourceExpr> items;
  Span span;

  bool is_list() const { return kind == Kind::List; }
  bool is_symbol() const { return kind == Kind::Symbol; }
  bool is_symbol(std::string_view s) const { return kind == Kind::Symbol && text == s; }
  bool is_atom() const { return kind != Kind::List && kind != Kind::Symbol; }

  /// Head symbol of a list form, or empty.
  std::string_view head() const {
    return is_list() && !items.empty() && items[0].is_symbol() ? std::string_view(items[0].text)
                                                               : std::string_view();
  }

  Value atom() const {
    switch (kind) {
      case Kind::Number: return Value(number);
      case Kind::Boolean: return Value(boolean);
      case Kind::String: return Value(text);
      default: return Value();
    }
  }

  static SourceExpr symbol(std::string name, Span s = {}) {
    SourceExpr e;
    e.kind = Kind::Symbol;
    e.text = std::move(name);
    e.span = s;
    return e;
  }
  static SourceExpr list(std::vector<SourceExpr> items, Span s = {}) {
    SourceExpr e;
    e.kind = Kind::List;
    e.items = std::move(items);
    e.span = s;
    return e;
  }
  static SourceExpr constant(const Value& v, Span s = {}) {
    SourceExpr e;
    e.span = s;
    if (v.is_num()) {
      e.kind = Kind::Number;
      e.number = v.as_num();
    } else if (v.is_bool()) {
      e.kind = Kind::Boolean;
      e.boolean = v.as_bool();
    } else if (v.is_text()) {
      e.kind = Kind::String;
      e.text = v.as_text();
    }
    return e;
  }
};

class SyntaxError : public Error {
 public:
  SyntaxError(Span span, const std::string& expected)
      : Error("syntax error at " + span.where() + ": expected " + expected),
        span_(span),
        expected_(expected) {}

  const Span& span() const { return span_; }
  const std::string& expected() const { return expected_; }

 private:
  Span span_;
  std::string expected_;
};

/// Characters allowed in symbols besides letters and digits. `$` and `#` are
/// reserved: the dump format and compiler-generated names use them.
inline bool symbol_char(char c) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')) return true;
  return std::string_view("+-*/<>=!?_.%&^~:").find(c) != std::string_view::npos;
}

namespace detail {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::vector<SourceExpr> read_all() {
    std::vector<SourceExpr> out;
    for (skip(); pos_ < text_.size(); skip()) out.push_back(read());
    return out;
  }

 private:
  Span here() const { return {pos_, pos_, line_, col_}; }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        advance();
      } else {
        break;
      }
    }
  }

  SourceExpr read() {
    Span start = here();
    char c = text_[pos_];
    if (c == '(') {
      advance();
      std::vector<SourceExpr> items;
      for (skip(); pos_ < text_.size() && text_[pos_] != ')'; skip()) items.push_back(read());
      if (pos_ >= text_.size()) throw SyntaxError(start, "')' to close this list");
      advance();
      start.end = pos_;
      return SourceExpr::list(std::move(items), start);
    }
    if (c == ')') throw SyntaxError(start, "an expression, not ')'");
    if (c == '"') return read_string(start);
    if (!symbol_char(c)) throw SyntaxError(start, "an expression, found '" + std::string(1, c) + "'");
    while (pos_ < text_.size() && symbol_char(text_[pos_])) advance();
    if (pos_ < text_.size() && text_[pos_] != ')' && text_[pos_] != '(' && text_[pos_] != ';' &&
        text_[pos_] != ' ' && text_[pos_] != '\t' && text_[pos_] != '\n' && text_[pos_] != '\r')
      throw SyntaxError(here(), "a delimiter after '" +
                                    std::string(text_.substr(start.begin, pos_ - start.begin)) + "'");
    start.end = pos_;
    return token(std::string(text_.substr(start.begin, pos_ - start.begin)), start);
  }

  SourceExpr read_string(Span start) {
    advance();
    std::string s;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_];
      if (c == '\\') {
        advance();
        if (pos_ >= text_.size()) break;
        switch (text_[pos_]) {
          case 'n': s += '\n'; break;
          case 't': s += '\t'; break;
          case '\\': s += '\\'; break;
          case '"': s += '"'; break;
          default: throw SyntaxError(here(), "an escape (\\n \\t \\\\ \\\")");
        }
      } else {
        s += c;
      }
      advance();
    }
    if (pos_ >= text_.size()) throw SyntaxError(start, "'\"' to close this string");
    advance();
    start.end = pos_;
    SourceExpr e = SourceExpr::constant(Value(std::move(s)), start);
    return e;
  }

  static SourceExpr token(std::string tok, Span span) {
    if (tok == "true" || tok == "false") {
      SourceExpr e = SourceExpr::constant(Value(tok == "true"), span);
      return e;
    }
    if (tok == "nil") {
      SourceExpr e;
      e.span = span;
      return e;
    }
    char c = tok[0];
    bool numeric = (c >= '0' && c <= '9') ||
                   ((c == '-' || c == '+' || c == '.') && tok.size() > 1 &&
                    ((tok[1] >= '0' && tok[1] <= '9') || tok[1] == '.'));
    if (numeric) {
      double d = 0;
      const char* first = tok.data() + (c == '+' ? 1 : 0);
      auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), d);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw SyntaxError(span, "a number, found '" + tok + "'");
      return SourceExpr::constant(Value(d), span);
    }
    return SourceExpr::symbol(std::move(tok), span);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

}  // namespace detail

/// All top-level expressions of `text`.
inline std::vector<SourceExpr> parse_all(std::string_view text) {
  return detail::Reader(text).read_all();
}

/// Exactly one expression.
inline SourceExpr parse(std::string_view text) {
  auto all = parse_all(text);
  if (all.empty()) throw SyntaxError({text.size(), text.size(), 1, 1}, "an expression");
  if (all.size() > 1) throw SyntaxError(all[1].span, "end of input");
  return std::move(all[0]);
}

/// A program: its top-level forms wrapped in `begin`.
inline SourceExpr parse_program(std::string_view text) {
  auto all = parse_all(text);
  if (all.empty()) throw SyntaxError({0, text.size(), 1, 1}, "at least one top-level form");
  Span whole{0, text.size(), 1, 1};
  std::vector<SourceExpr> items;
  items.push_back(SourceExpr::symbol("begin", whole));
  for (auto& e : all) items.push_back(std::move(e));
  return SourceExpr::list(std::move(items), whole);
}

/// Source text that parses back to an equal tree (spans aside).
inline std::string to_text(const SourceExpr& e) {
  switch (e.kind) {
    case SourceExpr::Kind::Number: return format_number(e.number);
    case SourceExpr::Kind::Boolean: return e.boolean ? "true" : "false";
    case SourceExpr::Kind::Nil: return "nil";
    case SourceExpr::Kind::Symbol: return e.text;
    case SourceExpr::Kind::String: {
      std::string s = "\"";
      for (char c : e.text) {
        if (c == '"' || c == '\\') s += '\\';
        if (c == '\n') {
          s += "\\n";
          continue;
        }
        if (c == '\t') {
          s += "\\t";
          continue;
        }
        s += c;
      }
      return s + "\"";
    }
    case SourceExpr::Kind::List: {
      std::string s = "(";
      for (std::size_t i = 0; i < e.items.size(); ++i) {
        if (i) s += ' ';
        s += to_text(e.items[i]);
      }
      return s + ")";
    }
  }
  return {};
}

}  // namespace sigma::lang
