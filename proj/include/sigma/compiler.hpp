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

// Compiler from S-expressions to machine code.
//
//   (lambda (x y) e...)   curried: one proto per parameter; () binds `_`
//   (define x e)          ((lambda (x) (begin (set! x e) rest...)) nil)
//   (set! x e) (if c t [e]) (begin e...) (while c e...) (and a b) (or a b)
//   (list e...)           nested prelude `cons`
//   (create f) (resume co [v]) (yield [v]) (newthread) (status co)
//   (reify v [n]) (install rep target [n]) (name v) (fields t) (setstatus co s)
//   (+ a b) ...           primitives by symbol, exact arity
//   (f a b)               f a ap b ap
//
// A program's top-level forms form the body of `(lambda (arg) ...)`.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sigma/instruction.hpp"
#include "sigma/representation.hpp"
#include "sigma/sexp.hpp"
#include "sigma/state.hpp"

namespace sigma::lang {

class CompileError : public Error {
 public:
  enum class Kind { UnknownForm, ArityError, BadForm };

  CompileError(Kind kind, Span span, const std::string& msg)
      : Error(std::string(kind_name(kind)) + " at " + span.where() + ": " + msg),
        kind_(kind),
        span_(span) {}

  Kind kind() const { return kind_; }
  const Span& span() const { return span_; }

  static std::string_view kind_name(Kind k) {
    switch (k) {
      case Kind::UnknownForm: return "UnknownForm";
      case Kind::ArityError: return "ArityError";
      case Kind::BadForm: return "BadForm";
    }
    return "?";
  }

 private:
  Kind kind_;
  Span span_;
};

/// A proto before loading. MakeClosure operands are indices into the unit.
struct UnitProto {
  std::string param;
  ControlList code;
  std::string label;

  friend bool operator==(const UnitProto&, const UnitProto&) = default;
};

struct CompiledUnit {
  std::vector<UnitProto> protos;  // protos[0] is the program

  friend bool operator==(const CompiledUnit&, const CompiledUnit&) = default;
};

inline constexpr std::string_view kPrelude = R"(
(define not (lambda (b) (if b false true)))
(define > (lambda (a b) (< b a)))
(define <= (lambda (a b) (not (< b a))))
(define >= (lambda (a b) (not (< a b))))
(define abs (lambda (x) (if (< x 0) (- 0 x) x)))
(define cons
  (lambda (a d)
    (define cell (table))
    (put! cell "car" a)
    (put! cell "cdr" d)
    cell))
(define car (lambda (c) (get c "car")))
(define cdr (lambda (c) (get c "cdr")))
(define null? (lambda (x) (= x nil)))
(define length (lambda (l) (if (null? l) 0 (+ 1 (length (cdr l))))))
(define nth (lambda (l i) (if (= i 0) (car l) (nth (cdr l) (- i 1)))))
(define sqrt
  (lambda (x)
    (if (< x 1e-300)
        0
        (begin
          (define g (if (< x 1) 1 x))
          (define k 0)
          (while (< k 60)
            (set! g (/ (+ g (/ x g)) 2))
            (set! k (+ k 1)))
          g))))
)";

namespace detail {

inline const std::set<std::string, std::less<>>& reserved_forms() {
  static const std::set<std::string, std::less<>> forms = {"quote", "let", "let*", "letrec",
                                                           "cond", "case", "do", "else"};
  return forms;
}

class Compiler {
 public:
  CompiledUnit unit;

  void program(const SourceExpr& body) {
    unit.protos.push_back({"arg", {}, "main"});
    ControlList code;
    if (body.head() == "begin")
      this->body(body, 1, code);
    else
      expr(body, code);
    unit.protos[0].code = std::move(code);
  }

 private:
  [[noreturn]] static void error(CompileError::Kind k, const SourceExpr& at, const std::string& m) {
    throw CompileError(k, at.span, m);
  }

  static void arity(const SourceExpr& e, std::size_t min, std::size_t max, std::string_view form) {
    std::size_t n = e.items.size() - 1;
    if (n < min || n > max) {
      std::string want = min == max ? std::to_string(min)
                                    : std::to_string(min) + (max == SIZE_MAX ? " or more"
                                                                             : " to " + std::to_string(max));
      error(CompileError::Kind::ArityError, e,
            std::string(form) + " takes " + want + " operands, got " + std::to_string(n));
    }
  }

  static const std::string& symbol_at(const SourceExpr& e, std::size_t i, std::string_view form) {
    if (!e.items[i].is_symbol())
      error(CompileError::Kind::BadForm, e.items[i], std::string(form) + " needs a variable name");
    return e.items[i].text;
  }

  std::size_t new_proto(std::string param, std::string label) {
    unit.protos.push_back({std::move(param), {}, std::move(label)});
    return unit.protos.size() - 1;
  }

  void emit_closure(std::size_t proto, ControlList code, ControlList& out) {
    unit.protos[proto].code = std::move(code);
    out.push_back(Instruction::closure(Loc{proto}));
  }

  /// Items [from, end) of a begin-like list, with `define` scoping the rest.
  void body(const SourceExpr& list, std::size_t from, ControlList& out) {
    if (from >= list.items.size()) {
      out.push_back(Instruction::konst(Value()));
      return;
    }
    for (std::size_t i = from; i < list.items.size(); ++i) {
      const SourceExpr& e = list.items[i];
      if (i > from) out.push_back(Instruction::make(Opcode::Pop));
      if (e.head() == "define") {
        arity(e, 2, 2, "define");
        const std::string& x = symbol_at(e, 1, "define");
        std::size_t scope = new_proto(x, "");
        ControlList inner;
        assign(x, e.items[2], inner);
        if (i + 1 < list.items.size()) {
          inner.push_back(Instruction::make(Opcode::Pop));
          body(list, i + 1, inner);
        }
        emit_closure(scope, std::move(inner), out);
        out.push_back(Instruction::konst(Value()));
        out.push_back(Instruction::make(Opcode::Ap));
        return;
      }
      expr(e, out);
    }
  }

  void assign(const std::string& x, const SourceExpr& value, ControlList& out) {
    if (value.head() == "lambda")
      lambda(value, x, out);
    else
      expr(value, out);
    out.push_back(Instruction::set(x));
  }

  void lambda(const SourceExpr& e, const std::string& label, ControlList& out) {
    arity(e, 2, SIZE_MAX, "lambda");
    const SourceExpr& params = e.items[1];
    if (!params.is_list())
      error(CompileError::Kind::BadForm, params, "lambda needs a parameter list");
    std::vector<std::string> names;
    for (const auto& p : params.items) {
      if (!p.is_symbol()) error(CompileError::Kind::BadForm, p, "parameters are variable names");
      names.push_back(p.text);
    }
    if (names.empty()) names.push_back("_");
    std::vector<std::size_t> protos;
    for (std::size_t k = 0; k < names.size(); ++k)
      protos.push_back(new_proto(names[k], k == 0 ? label : std::string()));
    ControlList code;
    body(e, 2, code);
    for (std::size_t k = names.size(); k-- > 0;) {
      unit.protos[protos[k]].code = std::move(code);
      code = ControlList{Instruction::closure(Loc{protos[k]})};
    }
    out.insert(out.end(), code.begin(), code.end());
  }

  void sel(const SourceExpr& c, const SourceExpr* t, const SourceExpr* f, ControlList& out) {
    expr(c, out);
    ControlList then_code, else_code;
    if (t)
      expr(*t, then_code);
    else
      then_code.push_back(Instruction::konst(Value()));
    if (f)
      expr(*f, else_code);
    else
      else_code.push_back(Instruction::konst(Value()));
    then_code.push_back(Instruction::make(Opcode::Join));
    else_code.push_back(Instruction::make(Opcode::Join));
    out.push_back(Instruction::sel(std::move(then_code), std::move(else_code)));
  }

  void loop(const SourceExpr& e, ControlList& out) {
    arity(e, 1, SIZE_MAX, "while");
    const Span s = e.span;
    std::string g = "#loop" + std::to_string(++gensym_);
    auto sym = [&](std::string n) { return SourceExpr::symbol(std::move(n), s); };
    auto nil = SourceExpr::constant(Value(), s);
    std::vector<SourceExpr> iter{sym("begin")};
    for (std::size_t i = 2; i < e.items.size(); ++i) iter.push_back(e.items[i]);
    iter.push_back(SourceExpr::list({sym(g), nil}, s));
    auto step = SourceExpr::list(
        {sym("lambda"), SourceExpr::list({sym("#_")}, s),
         SourceExpr::list({sym("if"), e.items[1], SourceExpr::list(std::move(iter), s), nil}, s)},
        s);
    std::size_t scope = new_proto(g, "");
    ControlList inner;
    lambda(step, "while", inner);
    inner.push_back(Instruction::set(g));
    inner.push_back(Instruction::make(Opcode::Pop));
    inner.push_back(Instruction::var(g));
    inner.push_back(Instruction::konst(Value()));
    inner.push_back(Instruction::make(Opcode::Ap));
    emit_closure(scope, std::move(inner), out);
    out.push_back(Instruction::konst(Value()));
    out.push_back(Instruction::make(Opcode::Ap));
  }

  void operand_or_nil(const SourceExpr& e, std::size_t i, ControlList& out) {
    if (i < e.items.size())
      expr(e.items[i], out);
    else
      out.push_back(Instruction::konst(Value()));
  }

  void expr(const SourceExpr& e, ControlList& out) {
    if (e.is_atom()) {
      out.push_back(Instruction::konst(e.atom()));
      return;
    }
    if (e.is_symbol()) {
      out.push_back(Instruction::var(e.text));
      return;
    }
    if (e.items.empty()) error(CompileError::Kind::UnknownForm, e, "empty application ()");
    std::string_view h = e.head();
    auto op = [&](Opcode o) { out.push_back(Instruction::make(o)); };

    if (h == "lambda") return lambda(e, "", out);
    if (h == "define")
      error(CompileError::Kind::BadForm, e, "define is only allowed in a body");
    if (h == "set!") {
      arity(e, 2, 2, "set!");
      return assign(symbol_at(e, 1, "set!"), e.items[2], out);
    }
    if (h == "if") {
      arity(e, 2, 3, "if");
      return sel(e.items[1], &e.items[2], e.items.size() > 3 ? &e.items[3] : nullptr, out);
    }
    if (h == "begin") return body(e, 1, out);
    if (h == "while") return loop(e, out);
    if (h == "and" || h == "or") {
      arity(e, 2, 2, h);
      auto b = SourceExpr::constant(Value(h == "or"), e.span);
      return h == "and" ? sel(e.items[1], &e.items[2], &b, out) : sel(e.items[1], &b, &e.items[2], out);
    }
    if (h == "list") {
      SourceExpr acc = SourceExpr::constant(Value(), e.span);
      for (std::size_t i = e.items.size(); i-- > 1;)
        acc = SourceExpr::list({SourceExpr::symbol("cons", e.span), e.items[i], std::move(acc)}, e.span);
      return expr(acc, out);
    }
    if (h == "create") {
      arity(e, 1, 1, "create");
      expr(e.items[1], out);
      return op(Opcode::Create);
    }
    if (h == "resume") {
      arity(e, 1, 2, "resume");
      operand_or_nil(e, 2, out);
      expr(e.items[1], out);
      return op(Opcode::Resume);
    }
    if (h == "yield") {
      arity(e, 0, 1, "yield");
      operand_or_nil(e, 1, out);
      return op(Opcode::Yield);
    }
    if (h == "newthread") {
      arity(e, 0, 0, "newthread");
      return op(Opcode::NewThread);
    }
    if (h == "reify") {
      arity(e, 1, 2, "reify");
      operand_or_nil(e, 2, out);
      expr(e.items[1], out);
      return op(Opcode::Reify);
    }
    if (h == "install") {
      arity(e, 2, 3, "install");
      operand_or_nil(e, 3, out);
      expr(e.items[2], out);
      expr(e.items[1], out);
      return op(Opcode::Install);
    }
    if (h == "name" || h == "fields" || h == "status") {
      arity(e, 1, 1, h);
      expr(e.items[1], out);
      return op(h == "name" ? Opcode::NameOf : h == "fields" ? Opcode::FieldsOf : Opcode::StatusOf);
    }
    if (h == "setstatus") {
      arity(e, 2, 2, "setstatus");
      expr(e.items[2], out);
      expr(e.items[1], out);
      return op(Opcode::SetStatus);
    }
    if (auto p = prim_by_symbol(h)) {
      const auto& info = prim_info(*p);
      arity(e, info.arity, info.arity, h);
      for (std::size_t i = 1; i < e.items.size(); ++i) expr(e.items[i], out);
      out.push_back(Instruction::primitive(*p));
      return;
    }
    if (!h.empty() && reserved_forms().count(h))
      error(CompileError::Kind::UnknownForm, e, "unsupported form '" + std::string(h) + "'");

    expr(e.items[0], out);
    if (e.items.size() == 1) {
      out.push_back(Instruction::konst(Value()));
      op(Opcode::Ap);
    }
    for (std::size_t i = 1; i < e.items.size(); ++i) {
      expr(e.items[i], out);
      op(Opcode::Ap);
    }
  }

  std::size_t gensym_ = 0;
};

inline void collect_symbols(const SourceExpr& e, std::set<std::string, std::less<>>& out) {
  if (e.is_symbol()) out.insert(e.text);
  if (e.head() == "list") out.insert("cons");
  for (const auto& i : e.items) collect_symbols(i, out);
}

/// Prelude definitions the program refers to, transitively, in prelude order.
inline std::vector<SourceExpr> prelude_for(const SourceExpr& program) {
  static const std::vector<SourceExpr> defs = parse_all(kPrelude);
  std::set<std::string, std::less<>> needed;
  collect_symbols(program, needed);
  std::vector<bool> take(defs.size(), false);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < defs.size(); ++i) {
      if (take[i] || !needed.count(defs[i].items[1].text)) continue;
      take[i] = changed = true;
      collect_symbols(defs[i].items[2], needed);
    }
  }
  std::vector<SourceExpr> out;
  for (std::size_t i = 0; i < defs.size(); ++i)
    if (take[i]) out.push_back(defs[i]);
  return out;
}

}  // namespace detail

struct CompileOptions {
  bool prelude = true;
};

/// Compiles a program body (usually the `begin` from parse_program).
inline CompiledUnit compile(const SourceExpr& program, CompileOptions opts = {}) {
  SourceExpr body = program;
  if (opts.prelude) {
    auto defs = detail::prelude_for(program);
    if (!defs.empty()) {
      std::vector<SourceExpr> items{SourceExpr::symbol("begin", program.span)};
      for (auto& d : defs) items.push_back(std::move(d));
      if (program.head() == "begin")
        items.insert(items.end(), program.items.begin() + 1, program.items.end());
      else
        items.push_back(program);
      body = SourceExpr::list(std::move(items), program.span);
    }
  }
  detail::Compiler c;
  c.program(body);
  return std::move(c.unit);
}

inline CompiledUnit compile_program(std::string_view text, CompileOptions opts = {}) {
  return compile(parse_program(text), opts);
}

namespace detail {
inline ControlList relocate_code(const ControlList& code, const std::vector<Loc>& locs) {
  ControlList out;
  out.reserve(code.size());
  for (const auto& ins : code) {
    if (ins.op == Opcode::MakeClosure)
      out.push_back(Instruction::closure(locs.at(ins.proto.id)));
    else if (ins.op == Opcode::Sel)
      out.push_back(Instruction::sel(relocate_code(*ins.then_branch, locs),
                                     relocate_code(*ins.else_branch, locs)));
    else
      out.push_back(ins);
  }
  return out;
}
}  // namespace detail

/// Allocates the unit's protos in the store; returns a closure of the program
/// proto over a fresh empty environment.
inline Loc load(MachineState& st, const CompiledUnit& unit) {
  std::vector<Loc> locs;
  for (std::size_t i = 0; i < unit.protos.size(); ++i) locs.push_back(st.store.allocate(Proto{}));
  for (std::size_t i = 0; i < unit.protos.size(); ++i) {
    const UnitProto& u = unit.protos[i];
    Proto p;
    p.param = u.param;
    p.code = std::make_shared<const ControlList>(detail::relocate_code(u.code, locs));
    p.consts = collect_consts(*p.code);
    p.inner = collect_inner(*p.code);
    p.label = u.label;
    *st.store.get_if<Proto>(locs[i]) = std::move(p);
  }
  return st.store.allocate(Closure{locs[0], st.new_env()});
}

// ---------------------------------------------------------------------------
// Listing

inline void disassemble(const ControlList& code, std::string& out, int indent) {
  for (const auto& ins : code) {
    out.append(static_cast<std::size_t>(indent), ' ');
    out += opcode_name(ins.op);
    switch (ins.op) {
      case Opcode::Const:
        out += ' ';
        out += ins.constant.is_text() ? "\"" + ins.constant.as_text() + "\"" : display(ins.constant);
        break;
      case Opcode::Var:
      case Opcode::Set: out += " " + ins.name; break;
      case Opcode::MakeClosure: out += " #" + std::to_string(ins.proto.id); break;
      case Opcode::Prim: out += " " + std::string(prim_info(ins.prim).name); break;
      default: break;
    }
    out += '\n';
    if (ins.op == Opcode::Sel) {
      out.append(static_cast<std::size_t>(indent), ' ');
      out += "then:\n";
      disassemble(*ins.then_branch, out, indent + 2);
      out.append(static_cast<std::size_t>(indent), ' ');
      out += "else:\n";
      disassemble(*ins.else_branch, out, indent + 2);
    }
  }
}

/// Canonical text of a unit.
inline std::string disassemble(const CompiledUnit& unit) {
  std::string out;
  for (std::size_t i = 0; i < unit.protos.size(); ++i) {
    const auto& p = unit.protos[i];
    out += "proto #" + std::to_string(i) + " (" + p.param + ")";
    if (!p.label.empty()) out += " " + p.label;
    out += '\n';
    disassemble(p.code, out, 2);
  }
  return out;
}

}  // namespace sigma::lang
