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

// Acceptance run: one PASS/FAIL line per criterion, each within its time limit.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

#include "graph_support.hpp"

namespace sigma {
namespace {

namespace fs = std::filesystem;
using testing::Rng;

// Thrown by check() with the first counterexample.
struct Counterexample : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Counterexample(what);
}

Value eval(const std::string& text, std::vector<std::string>* out = nullptr) {
  MachineState st;
  boot(st, lang::load(st, lang::compile_program(text)), Value());
  Value v = run(st).value;
  if (out) *out = st.output;
  return v;
}

std::vector<std::string> joined(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::uint64_t payload_bytes(const Capture& c, const fs::path& root = ".") {
  return migrate::encode(migrate::make_envelope(pickle::serialize(c.doc), c.doc, root)).size();
}

// A receiver on an ephemeral loopback port.
class Node {
 public:
  explicit Node(const std::string& name)
      : root_(testing::scratch_dir("acc_node_" + name)),
        server_(migrate::NodeConfig{{"127.0.0.1", 0}, root_, kDefaultFuel, 2000}),
        thread_([this] { server_.serve(stop_); }) {}
  ~Node() {
    stop_ = true;
    thread_.join();
  }
  migrate::Address address() const { return {"127.0.0.1", server_.port()}; }
  const fs::path& root() const { return root_; }
  migrate::Server& server() { return server_; }

 private:
  fs::path root_;
  migrate::Server server_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

// ---------------------------------------------------------------------------

std::string inc_round_trip() {
  std::vector<std::string> out;
  Value v = eval(R"(
    (define inc (lambda (counter) (+ counter 1)))
    (define tinc (reify inc))
    (define tproto (reify (get tinc "p")))
    (put! tinc "p" (install tproto "proto"))
    (define newinc (install tinc "function"))
    (newinc 1))",
                 &out);
  check(v == Value(2.0), "newinc(1) = " + display(v));
  return "newinc(1) = 2";
}

std::string count_continuation() {
  std::vector<std::string> out;
  Value v = eval(R"(
    (define co (create (lambda ()
      (define i 1)
      (while (<= i 5)
        (print (concat "Number " i))
        (yield i)
        (set! i (+ i 1))))))
    (resume co) (resume co)
    (define last (resume co))
    (define frames (table))
    (define depth 0)
    (while (not (= (reify co (+ depth 1)) nil))
      (set! depth (+ depth 1))
      (put! frames depth (reify co depth)))
    (define n (newthread))
    (define k depth)
    (while (> k 0)
      (install (get frames k) n 0)
      (set! k (- k 1)))
    (setstatus n "suspended")
    (define next (resume n))
    (resume n)
    (if (= last 3) next -1))",
                 &out);
  check(v == Value(4.0), "next yielded value " + display(v));
  check(out == std::vector<std::string>{"Number 1", "Number 2", "Number 3", "Number 4", "Number 5"},
        "output trace");
  return "yield 3 -> rebuilt thread yields 4, prints Number 4, Number 5";
}

// Generated programs call at most 8 deep (main plus recursion <= 7); frame
// counts also include define scopes and loop closures.
std::string symmetry() {
  constexpr int kMachines = 500;
  Rng rng(1);
  std::size_t levels = 0, max_frames = 0;
  for (int i = 0; i < kMachines; ++i) {
    auto m = testing::suspended_machine(rng, 7);
    Session& s = *m.session;
    Loc co = s.program();
    auto before = testing::all_levels(s.state(), co);
    max_frames = std::max(max_frames, before.size());
    for (std::int64_t n = 1; n <= static_cast<std::int64_t>(before.size()); ++n) {
      Session copy = s;
      MachineState& st = copy.state();
      Value rep = reflect::reify(st, Value(co), n);
      auto rep_fields = testing::canonical(reflect::read_representation(st, TypeName::Frame, rep).fields);
      reflect::install(st, rep, co, n);
      check(testing::canonical(reflect::describe(st, Value(co), n)->fields) == rep_fields,
            "reify(install(rep)) != rep, machine " + std::to_string(i));
      check(testing::all_levels(st, co) == before, "frame form changed, machine " + std::to_string(i));
      if (n == 1 || n == static_cast<std::int64_t>(before.size())) {
        Session reference = s;
        Value a = copy.finish(), b = reference.finish();
        check(a == b && copy.output() == reference.output(),
              "run differs, machine " + std::to_string(i) + "\n" + m.text);
      }
      ++levels;
    }
  }
  return std::to_string(kMachines) + " machines, " + std::to_string(levels) + " levels, at most " +
         std::to_string(max_frames) + " frames";
}

std::string transparency() {
  std::size_t points = 0;
  for (const auto& [name, arg] : std::vector<std::pair<std::string, Value>>{
           {"count", Value()}, {"factorial", Value(10.0)}, {"fibonacci", Value(15.0)},
           {"myprint", Value(4.0)}, {"knn_lite", Value()}, {"inc", Value(1.0)}}) {
    auto unit = testing::bundled(name);
    auto plain = testing::scratch_dir("acc_plain");
    Outcome whole = run_program(unit, arg, plain);
    Session probe(unit, arg, testing::scratch_dir("acc_probe"));
    std::size_t yields = 0;
    while (probe.next_yield()) ++yields;
    for (std::size_t k = 1; k <= yields; ++k) {
      auto src = testing::scratch_dir("acc_src");
      auto dst = testing::scratch_dir("acc_dst");
      auto cap = checkpoint(unit, arg, k, src);
      for (const auto& f : cap.doc.files) fs::copy_file(src / f.path, dst / f.path);
      auto s = restore(pickle::deserialize(pickle::serialize(cap.doc)), dst);
      Value v = s.finish();
      check(v == whole.result, name + " yield " + std::to_string(k) + ": value");
      check(joined(cap.output, s.output()) == whole.output, name + " yield " + std::to_string(k) + ": output");
      ++points;
    }
  }
  return std::to_string(points) + " yield points over 6 programs";
}

std::string scaling() {
  auto unit = testing::bundled("factorial");
  std::vector<std::uint64_t> sizes;
  for (int n = 5; n <= 50; n += 5) sizes.push_back(payload_bytes(checkpoint(unit, Value(double(n)), 1)));
  std::vector<double> diffs;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    check(sizes[i] > sizes[i - 1], "payload not increasing at depth " + std::to_string(5 * (i + 1)));
    diffs.push_back(double(sizes[i] - sizes[i - 1]));
  }
  auto sorted = diffs;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted[sorted.size() / 2];
  for (double d : diffs) check(std::abs(d - median) <= 0.25 * median, "step " + std::to_string(d) + " vs median " + std::to_string(median));
  std::ostringstream o;
  o << "payload " << sizes.front() << ".." << sizes.back() << " bytes, median step " << median;
  return o.str();
}

std::string dedup() {
  std::size_t depths = 0;
  for (int n = 1; n <= 25; ++n) {
    auto cap = checkpoint(testing::bundled("fibonacci"), Value(double(n)), 1);
    std::size_t labelled = 0;
    for (const auto& [id, node] : cap.doc.nodes) {
      auto it = node.payload.find("label");
      if (node.kind == TypeName::Proto && it != node.payload.end() && it->second.value() == Value("fibonacci"))
        ++labelled;
    }
    check(labelled == 1, "n=" + std::to_string(n) + ": " + std::to_string(labelled) + " fibonacci protos");
    ++depths;
  }
  return "one fibonacci proto at " + std::to_string(depths) + " depths";
}

std::string sharing() {
  constexpr int kGraphs = 500;
  Rng rng(7);
  std::size_t shared = 0, loops = 0;
  for (int i = 0; i < kGraphs; ++i) {
    auto g = testing::random_graph(rng);
    // A table holding itself under key 1.
    Loc t = g.tables[static_cast<std::size_t>(rng.uniform(0, int(g.tables.size()) - 1))];
    g.st.store.get_if<Table>(t)->entries[Value(1.0)] = Value(t);

    auto doc = pickle::capture_value(g.st, g.root);
    std::size_t reachable = 0;
    for (const auto& [k, n] : testing::reachable_by_kind(g.st, g.root.as_loc())) reachable += n;
    check(doc.nodes.size() == reachable, "graph " + std::to_string(i) + ": node count");

    MachineState fresh;
    Value back = pickle::instantiate_value(fresh, pickle::deserialize(pickle::serialize(doc)));
    testing::Iso iso(g.st, fresh);
    check(iso.same(g.root, back), "graph " + std::to_string(i) + ": " + iso.why);

    if (auto it = iso.fwd.find(t.id); it != iso.fwd.end()) {
      Loc t2{it->second};
      check(fresh.store.get_if<Table>(t2)->entries.at(Value(1.0)) == Value(t2), "t'[1] != t'");
      ++loops;
    }
    // Writes through one parent are visible through every other parent.
    std::map<std::uint64_t, std::vector<std::pair<Loc, Value>>> parents;
    for (const auto& [orig, copy] : iso.fwd)
      if (const Table* tab = fresh.store.get_if<Table>(Loc{copy}))
        for (const auto& [k, v] : tab->entries)
          if (v.is_loc() && fresh.store.get_if<Table>(v.as_loc())) parents[v.as_loc().id].push_back({Loc{copy}, k});
    for (const auto& [target, edges] : parents) {
      if (edges.size() < 2) continue;
      auto via = [&](std::size_t e) -> Table& {
        return *fresh.store.get_if<Table>(fresh.store.get_if<Table>(edges[e].first)->entries.at(edges[e].second).as_loc());
      };
      via(0).entries[Value("mark")] = Value(double(i));
      for (std::size_t e = 1; e < edges.size(); ++e)
        check(via(e).entries.at(Value("mark")) == Value(double(i)), "mutation not shared");
      ++shared;
    }
  }
  return std::to_string(kGraphs) + " graphs, " + std::to_string(shared) + " shared targets, " +
         std::to_string(loops) + " self loops";
}

const char* kWriter = R"(
(define f (open "out.txt" "w"))
(define i 0)
(while (< i 6)
  (write f (concat "line " i))
  (write f "\n")
  (if (= i 2) (yield i))
  (set! i (+ i 1)))
(close f)
"ok")";

std::string file_restore() {
  auto unit = lang::compile_program(kWriter);
  auto plain = testing::scratch_dir("acc_file_plain");
  Outcome whole = run_program(unit, Value(), plain);
  std::string want = read_text_file(plain / "out.txt");

  auto src = testing::scratch_dir("acc_file_src");
  auto cap = checkpoint(unit, Value(), 1, src);
  check(cap.doc.files.size() == 1, "file records");
  const auto& rec = cap.doc.files[0];
  std::uint64_t p = fs::file_size(src / "out.txt");
  check(rec.mode == "w" && rec.position == p, "captured mode/position");

  // Reopened handle, checked on a local instantiation.
  auto dst = testing::scratch_dir("acc_file_dst");
  fs::copy_file(src / "out.txt", dst / "out.txt");
  MachineState st;
  st.file_root = dst;
  pickle::instantiate(st, cap.doc);
  check(st.open_files.size() == 1, "open files after restore");
  const auto& h = *st.store.get_if<FileHandle>(*st.open_files.begin());
  check(h.mode == "r+" && h.position == p, "restored mode " + h.mode + " position " + std::to_string(h.position));

  // The same capture shipped to a receiver with its file.
  Node node("file");
  auto m = migrate::migrate(unit, Value(), node.address(), 1, testing::scratch_dir("acc_file_ship"));
  check(m.response.status == migrate::Exit::Ok, m.response.error);
  check(read_text_file(node.root() / "out.txt") == want, "remote bytes differ");
  check(m.response.result == display(whole.result), "remote result");
  return "w -> r+ at offset " + std::to_string(p) + ", " + std::to_string(want.size()) + " bytes match";
}

std::string editing() {
  auto unit = testing::bundled("myprint");
  Outcome whole = run_program(unit, Value(3.0));
  auto cap = checkpoint(unit, Value(3.0), 1);
  std::string before = pickle::serialize(cap.doc);
  auto edited = cap.doc;
  check(pickle::rebind(edited, 1, "a", Value()), "no local `a` at level 1");
  std::string after = pickle::serialize(edited);
  check(after.size() < before.size(), "payload did not shrink");
  auto s = restore(pickle::deserialize(after));
  Value v = s.finish();
  check(v == whole.result, "result changed");
  check(joined(cap.output, s.output()) == whole.output, "subsequent output changed");
  return "payload " + std::to_string(before.size()) + " -> " + std::to_string(after.size()) + " bytes";
}

std::string loopback() {
  Node node("fib");
  auto unit = testing::bundled("fibonacci");
  Outcome local = run_program(unit, Value(20.0));
  auto m = migrate::migrate(unit, Value(20.0), node.address());
  check(m.response.status == migrate::Exit::Ok, m.response.error);
  check(m.response.result == "6765" && local.result == Value(6765.0), "remote " + m.response.result);

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    std::string bytes(static_cast<std::size_t>(rng.uniform(0, 300)), '\0');
    for (auto& c : bytes) c = static_cast<char>(rng.uniform(0, 255));
    if (i % 2) bytes = std::string(migrate::kRequestMagic) + char(migrate::kWireVersion) + bytes;
    migrate::Socket s = migrate::connect_to(node.address(), 5000);
    s.send_all(bytes);
    ::shutdown(s.fd(), SHUT_WR);
    char buf[256];
    while (::recv(s.fd(), buf, sizeof buf, 0) > 0) {
    }
  }
  auto again = migrate::migrate(unit, Value(20.0), node.address());
  check(again.response.result == "6765", "server unusable after fuzz");
  return "6765 remote = local; 200 garbage requests, " + std::to_string(node.server().rejected()) +
         " rejected, server alive";
}

struct Criterion {
  int number;
  const char* title;
  double limit_ms;
  std::function<std::string()> run;
};

}  // namespace
}  // namespace sigma

int main() {
  using namespace sigma;
  const std::vector<Criterion> criteria = {
      {1, "inc function round trip", 1000, inc_round_trip},
      {2, "count continuation rebuilt", 1000, count_continuation},
      {3, "reify/install symmetry", 60000, symmetry},
      {4, "migration transparency", 60000, transparency},
      {5, "payload scaling shape", 30000, scaling},
      {6, "prototype dedup", 30000, dedup},
      {7, "sharing and cycles", 60000, sharing},
      {8, "file restore", 5000, file_restore},
      {9, "representation editing", 5000, editing},
      {10, "loopback migration and fuzz", 30000, loopback},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (ok && ms > c.limit_ms) {
      ok = false;
      detail += " (over time limit)";
    }
    if (!ok) ++failed;
    std::printf("%s %2d %-30s %9.1f ms / %6.0f ms  %s\n", ok ? "PASS" : "FAIL", c.number, c.title, ms,
                c.limit_ms, detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
