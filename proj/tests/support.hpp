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

// Shared test helpers: bundled programs, hand-built machine states, a
// direct-interpretation oracle for the surface language and random program
// generators.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "sigma/sigma.hpp"

namespace sigma::testing {

inline std::filesystem::path programs_dir() { return SIGMA_PROGRAMS_DIR; }

inline lang::CompiledUnit bundled(const std::string& name) {
  return lang::compile_program(read_text_file(programs_dir() / (name + ".sexp")));
}

/// A scratch directory unique to the calling test.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sigma_test_" + name + "_" +
                                                     std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// Hand-built states

/// A machine whose root coroutine runs `code` in a fresh environment.
inline MachineState raw_state(ControlList code, std::vector<Value> stack = {}) {
  MachineState st;
  Loc env = st.new_env();
  Loc root = st.store.allocate(Coroutine{{}, Status::Running});
  st.active.push_back({root, {Frame(std::move(stack), env, std::move(code))}});
  return st;
}

inline Loc make_proto(MachineState& st, std::string param, ControlList code, std::string label = "") {
  Proto p;
  p.param = std::move(param);
  p.code = std::make_shared<const ControlList>(std::move(code));
  p.consts = collect_consts(*p.code);
  p.inner = collect_inner(*p.code);
  p.label = std::move(label);
  return st.store.allocate(std::move(p));
}

inline void bind(MachineState& st, Loc env, const std::string& x, Value v) {
  st.store.get_if<Env>(env)->bindings[x] = st.store.allocate(Cell{std::move(v)});
}

/// Steps to the end, checking invariants after every step.
inline Value step_to_halt(MachineState& st, std::uint64_t fuel = 1'000'000) {
  while (fuel--) {
    if (auto v = step(st)) return *v;
  }
  throw Error("step_to_halt: out of fuel");
}

/// Handles renamed to their order of first appearance.
inline RepRecord canonical(RepRecord r) {
  std::map<std::uint64_t, std::uint64_t> names;
  for_each_handle(r, [&](Loc& l) {
    auto [it, fresh] = names.emplace(l.id, names.size() + 1);
    l = Loc{it->second};
  });
  return r;
}

// ---------------------------------------------------------------------------
// Randomness

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(gen_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Oracle: a direct recursive interpreter over source trees. It shares no code
// with the compiler or the machine beyond the parser and number formatting.

namespace oracle {

struct Closure;
struct OEnv;
using OValue = std::variant<std::monostate, bool, double, std::string, std::shared_ptr<Closure>>;

struct OEnv {
  std::map<std::string, OValue> vars;
  std::shared_ptr<OEnv> parent;
};

struct Closure {
  std::vector<std::string> params;  // remaining curried parameters
  const lang::SourceExpr* body;     // lambda form; body items start at 2
  std::shared_ptr<OEnv> env;
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Interpreter {
 public:
  std::vector<std::string> output;
  std::size_t budget = 2'000'000;

  OValue program(const lang::SourceExpr& begin_form) {
    auto env = std::make_shared<OEnv>();
    env->vars["arg"] = std::monostate{};
    return body(begin_form, 1, env);
  }

 private:
  static std::string show(const OValue& v) {
    switch (v.index()) {
      case 0: return "nil";
      case 1: return std::get<bool>(v) ? "true" : "false";
      case 2: return format_number(std::get<double>(v));
      case 3: return std::get<std::string>(v);
      default: return "<function>";
    }
  }

  static double num(const OValue& v) {
    if (v.index() != 2) throw Failure("number expected");
    return std::get<double>(v);
  }

  static bool boolean(const OValue& v) {
    if (v.index() != 1) throw Failure("boolean expected");
    return std::get<bool>(v);
  }

  static bool equal(const OValue& a, const OValue& b) {
    if (a.index() != b.index()) return false;
    switch (a.index()) {
      case 0: return true;
      case 1: return std::get<bool>(a) == std::get<bool>(b);
      case 2: return std::get<double>(a) == std::get<double>(b);
      case 3: return std::get<std::string>(a) == std::get<std::string>(b);
      default: return std::get<4>(a) == std::get<4>(b);
    }
  }

  static OValue* find(const std::shared_ptr<OEnv>& env, const std::string& x) {
    for (OEnv* e = env.get(); e; e = e->parent.get()) {
      auto it = e->vars.find(x);
      if (it != e->vars.end()) return &it->second;
    }
    return nullptr;
  }

  OValue body(const lang::SourceExpr& list, std::size_t from, std::shared_ptr<OEnv> env) {
    OValue last;
    for (std::size_t i = from; i < list.items.size(); ++i) {
      const auto& e = list.items[i];
      if (e.head() == "define") {
        auto scope = std::make_shared<OEnv>();
        scope->parent = env;
        scope->vars[e.items[1].text] = std::monostate{};
        env = scope;
        last = eval(e.items[2], env);
        env->vars[e.items[1].text] = last;
      } else {
        last = eval(e, env);
      }
    }
    return last;
  }

  OValue apply(const OValue& f, OValue arg) {
    if (f.index() != 4) throw Failure("not a function");
    const auto& c = std::get<4>(f);
    auto env = std::make_shared<OEnv>();
    env->parent = c->env;
    env->vars[c->params[0]] = std::move(arg);
    if (c->params.size() > 1) {
      auto rest = std::make_shared<Closure>(*c);
      rest->params.erase(rest->params.begin());
      rest->env = env;
      return rest;
    }
    return body(*c->body, 2, env);
  }

  OValue eval(const lang::SourceExpr& e, const std::shared_ptr<OEnv>& env) {
    if (budget-- == 0) throw Failure("budget");
    using K = lang::SourceExpr::Kind;
    switch (e.kind) {
      case K::Number: return e.number;
      case K::Boolean: return e.boolean;
      case K::String: return e.text;
      case K::Nil: return std::monostate{};
      case K::Symbol: {
        OValue* v = find(env, e.text);
        if (!v) throw Failure("unbound " + e.text);
        return *v;
      }
      case K::List: break;
    }
    const std::string h(e.head());
    const auto& it = e.items;
    if (h == "lambda") {
      auto c = std::make_shared<Closure>();
      for (const auto& p : it[1].items) c->params.push_back(p.text);
      if (c->params.empty()) c->params.push_back("_");
      c->body = &e;
      c->env = env;
      return c;
    }
    if (h == "if") {
      bool c = boolean(eval(it[1], env));
      if (c) return eval(it[2], env);
      return it.size() > 3 ? eval(it[3], env) : OValue{};
    }
    if (h == "and") return boolean(eval(it[1], env)) ? eval(it[2], env) : OValue(false);
    if (h == "or") return boolean(eval(it[1], env)) ? OValue(true) : eval(it[2], env);
    if (h == "begin") return body(e, 1, env);
    if (h == "set!") {
      OValue v = eval(it[2], env);
      OValue* slot = find(env, it[1].text);
      if (!slot) throw Failure("unbound " + it[1].text);
      *slot = v;
      return v;
    }
    if (h == "while") {
      while (boolean(eval(it[1], env))) body(e, 2, env);
      return {};
    }
    if (h == "not") return !boolean(eval(it[1], env));
    if (h == "print") {
      output.push_back(show(eval(it[1], env)));
      return {};
    }
    static const std::vector<std::string> binary = {"+", "-", "*", "/", "=", "<", "<=", ">", ">=", "concat"};
    if (std::find(binary.begin(), binary.end(), h) != binary.end() && !find(env, h)) {
      OValue a = eval(it[1], env), b = eval(it[2], env);
      if (h == "+") return num(a) + num(b);
      if (h == "-") return num(a) - num(b);
      if (h == "*") return num(a) * num(b);
      if (h == "/") return num(a) / num(b);
      if (h == "=") return equal(a, b);
      if (h == "concat") {
        auto part = [](const OValue& v) {
          if (v.index() == 2) return format_number(std::get<double>(v));
          if (v.index() == 3) return std::get<std::string>(v);
          throw Failure("concat operand");
        };
        return part(a) + part(b);
      }
      auto less = [](const OValue& x, const OValue& y) {
        if (x.index() == 2 && y.index() == 2) return std::get<double>(x) < std::get<double>(y);
        if (x.index() == 3 && y.index() == 3) return std::get<std::string>(x) < std::get<std::string>(y);
        throw Failure("lt operands");
      };
      if (h == "<") return less(a, b);
      if (h == ">") return less(b, a);
      if (h == "<=") return !boolean(OValue(less(b, a)));
      return !less(a, b);
    }
    if (h == "abs" && !find(env, h)) {
      double x = num(eval(it[1], env));
      return x < 0 ? 0 - x : x;
    }
    OValue f = eval(it[0], env);
    if (it.size() == 1) return apply(f, {});
    for (std::size_t i = 1; i < it.size(); ++i) f = apply(f, eval(it[i], env));
    return f;
  }
};

/// Result of the oracle, in machine terms; nullopt when it failed.
struct Result {
  std::optional<Value> value;  // functions map to the text "<function>"
  std::vector<std::string> output;
};

inline Result run(const std::string& text) {
  auto program = lang::parse_program(text);
  Interpreter in;
  Result r;
  try {
    OValue v = in.program(program);
    switch (v.index()) {
      case 0: r.value = Value(); break;
      case 1: r.value = Value(std::get<bool>(v)); break;
      case 2: r.value = Value(std::get<double>(v)); break;
      case 3: r.value = Value(std::get<std::string>(v)); break;
      default: r.value = Value("<function>"); break;
    }
  } catch (const Failure&) {
  }
  r.output = in.output;
  return r;
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Generators

/// Well-typed (mostly) pure programs over numbers, booleans and strings.
class PureGen {
 public:
  explicit PureGen(Rng& rng) : rng_(rng) {}

  std::string program() {
    vars_.clear();
    std::string s;
    int forms = rng_.uniform(0, 3);
    for (int i = 0; i < forms; ++i) {
      std::string v = fresh();
      s += "(define " + v + " " + num(3) + ")\n";
      vars_.push_back(v);
    }
    if (rng_.chance(0.5)) s += "(print (concat \"v\" " + num(2) + "))\n";
    if (rng_.chance(0.05)) s += ill_typed() + "\n";
    s += num(4) + "\n";
    return s;
  }

 private:
  std::string fresh() { return "v" + std::to_string(counter_++); }

  std::string lit() { return std::to_string(rng_.uniform(-5, 20)); }

  std::string ill_typed() {
    static const std::vector<std::string> bad = {"(+ 1 \"x\")", "(if 1 2 3)", "(< \"a\" 1)",
                                                 "(undefined-var 1)", "(1 2)", "(not 3)"};
    return rng_.pick(bad);
  }

  std::string num(int d) {
    if (d <= 0) {
      if (!vars_.empty() && rng_.chance(0.5)) return rng_.pick(vars_);
      return lit();
    }
    switch (rng_.uniform(0, 13)) {
      case 0: return lit();
      case 1:
        if (!vars_.empty()) return rng_.pick(vars_);
        return lit();
      case 2: return "(+ " + num(d - 1) + " " + num(d - 1) + ")";
      case 3: return "(- " + num(d - 1) + " " + num(d - 1) + ")";
      case 4: return "(* " + num(d - 1) + " " + num(d - 1) + ")";
      case 5: return "(if " + boolean(d - 1) + " " + num(d - 1) + " " + num(d - 1) + ")";
      case 6: {
        std::string x = fresh();
        vars_.push_back(x);
        std::string body = num(d - 1);
        vars_.pop_back();
        return "((lambda (" + x + ") " + body + ") " + num(d - 1) + ")";
      }
      case 7: {
        std::string x = fresh(), y = fresh();
        vars_.push_back(x);
        vars_.push_back(y);
        std::string body = num(d - 1);
        vars_.pop_back();
        vars_.pop_back();
        return "((lambda (" + x + " " + y + ") " + body + ") " + num(d - 1) + " " + num(d - 1) + ")";
      }
      case 8: {
        if (vars_.empty()) return num(d - 1);
        return "(begin (set! " + rng_.pick(vars_) + " " + num(d - 1) + ") " + num(d - 1) + ")";
      }
      case 9: {
        std::string x = fresh();
        std::string init = num(d - 1);
        vars_.push_back(x);
        std::string rest = num(d - 1);
        vars_.pop_back();
        return "(begin (define " + x + " " + init + ") " + rest + ")";
      }
      case 10: {
        std::string i = fresh(), s = fresh();
        std::string k = std::to_string(rng_.uniform(0, 5));
        std::string init = num(d - 1);
        vars_.push_back(i);
        vars_.push_back(s);
        std::string step = num(d - 1);
        vars_.pop_back();
        vars_.pop_back();
        return "(begin (define " + i + " 0) (define " + s + " " + init + ") (while (< " + i + " " + k +
               ") (set! " + s + " (+ " + s + " " + step + ")) (set! " + i + " (+ " + i + " 1))) " + s + ")";
      }
      case 11: {
        std::string f = fresh(), n = fresh();
        std::string base = num(d - 1);
        std::string k = std::to_string(rng_.uniform(0, 6));
        return "(begin (define " + f + " (lambda (" + n + ") (if (< " + n + " 1) " + base + " (+ " + n +
               " (" + f + " (- " + n + " 1)))))) (" + f + " " + k + "))";
      }
      case 12: return "(abs " + num(d - 1) + ")";
      default: return "(/ " + num(d - 1) + " " + std::to_string(rng_.uniform(1, 4)) + ")";
    }
  }

  std::string boolean(int d) {
    if (d <= 0) return rng_.chance(0.5) ? "true" : "false";
    switch (rng_.uniform(0, 7)) {
      case 0: return rng_.chance(0.5) ? "true" : "false";
      case 1: return "(< " + num(d - 1) + " " + num(d - 1) + ")";
      case 2: return "(= " + num(d - 1) + " " + num(d - 1) + ")";
      case 3: return "(not " + boolean(d - 1) + ")";
      case 4: return "(<= " + num(d - 1) + " " + num(d - 1) + ")";
      case 5: return "(and " + boolean(d - 1) + " " + boolean(d - 1) + ")";
      case 6: return "(or " + boolean(d - 1) + " " + boolean(d - 1) + ")";
      default: return "(> " + num(d - 1) + " " + num(d - 1) + ")";
    }
  }

  Rng& rng_;
  std::vector<std::string> vars_;
  int counter_ = 0;
};

/// Programs that print, yield from recursion of depth <= 7, keep tables
/// (shared and self-referential) and optionally drive an inner coroutine.
inline std::string coroutine_program(Rng& rng, int max_recursion = 7) {
  int depth = rng.uniform(0, max_recursion);
  int rounds = rng.uniform(1, 3);
  int k = rng.uniform(1, 9);
  bool inner = rng.chance(0.5);
  bool table = rng.chance(0.6);
  bool self_ref = table && rng.chance(0.5);
  bool yield_in_loop = rng.chance(0.5);
  int gen_n = rng.uniform(1, 4);
  int gen_m = rng.uniform(1, 5);

  std::string s = "(define acc " + std::to_string(rng.uniform(0, 3)) + ")\n";
  s += "(define t (table))\n";
  if (self_ref) s += "(put! t \"self\" t)\n";
  if (inner)
    s += "(define gen (create (lambda (x) (define j 0) (while (< j " + std::to_string(gen_n) +
         ") (yield (* j " + std::to_string(gen_m) + ")) (set! j (+ j 1))) 99)))\n";
  std::string bottom = "(begin (print (concat \"bottom \" acc)) (yield (+ acc 1))";
  if (table) bottom += " (put! t acc n)";
  if (inner) bottom += " (set! acc (+ acc (if (= (status gen) \"suspended\") (resume gen 0) 0)))";
  bottom += " acc)";
  s += "(define f (lambda (n) (if (= n 0) " + bottom + " (+ (f (- n 1)) (* n " + std::to_string(k) + ")))))\n";
  s += "(define i 0)\n";
  s += "(while (< i " + std::to_string(rounds) + ")\n";
  s += "  (set! acc (+ acc (f " + std::to_string(depth) + ")))\n";
  s += "  (print (concat \"acc \" acc))\n";
  if (table) s += "  (print (concat \"t \" (if (= (get t acc) nil) -1 (get t acc))))\n";
  if (self_ref) s += "  (print (concat \"self \" (if (= (get t \"self\") t) 1 0)))\n";
  if (yield_in_loop) s += "  (yield i)\n";
  s += "  (set! i (+ i 1)))\n";
  s += "acc\n";
  return s;
}

struct Suspended {
  std::string text;
  std::unique_ptr<Session> session;
};

// A generated program stopped at one of its harness yields.
inline Suspended suspended_machine(Rng& rng, int max_recursion = 7) {
  for (;;) {
    Suspended m{coroutine_program(rng, max_recursion), nullptr};
    auto unit = lang::compile_program(m.text);
    Session probe(unit, Value());
    std::size_t yields = 0;
    while (probe.next_yield()) ++yields;
    if (yields == 0) continue;
    std::size_t k = static_cast<std::size_t>(rng.uniform(1, static_cast<int>(yields)));
    m.session = std::make_unique<Session>(unit, Value());
    for (std::size_t i = 0; i < k; ++i) m.session->next_yield();
    return m;
  }
}

/// Canonical representations of every frame, innermost first.
inline std::vector<RepRecord> all_levels(const MachineState& st, Loc co) {
  std::vector<RepRecord> out;
  for (std::int64_t n = 1;; ++n) {
    auto rep = reflect::describe(st, Value(co), n);
    if (!rep) return out;
    out.push_back(canonical(rep->fields));
  }
}

}  // namespace sigma::testing
