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

// sigma: run, checkpoint, restore and migrate programs.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "sigma/sigma.hpp"

namespace {

using sigma::migrate::Exit;

struct Common {
  std::uint64_t fuel = sigma::kDefaultFuel;
  std::string policy = "fail";
  std::string report;
  std::string root = ".";
};

sigma::pickle::ErrorPolicy policy_of(const std::string& name) {
  return name == "nil" ? sigma::pickle::ErrorPolicy::replace_with_nil()
                       : sigma::pickle::ErrorPolicy::fail();
}

sigma::Value first_arg(const std::vector<std::string>& args) {
  return args.empty() ? sigma::Value() : sigma::parse_argument(args[0]);
}

void print_lines(const std::vector<std::string>& lines) {
  for (const auto& l : lines) std::cout << l << '\n';
}

void print_report(const Common& c, const sigma::migrate::MigrationReport& r) {
  if (c.report == "json")
    std::cout << r.to_json().dump() << '\n';
  else if (c.report == "text")
    std::cout << r.to_text();
}

sigma::lang::CompiledUnit load_program(const std::string& path) {
  return sigma::lang::compile_program(sigma::read_text_file(path));
}

int cmd_run(const Common& c, const std::string& prog, const std::vector<std::string>& args) {
  auto unit = load_program(prog);
  sigma::Session s(unit, first_arg(args), c.root, c.fuel);
  sigma::Value v = s.finish();
  print_lines(s.output());
  std::cout << sigma::display(v) << '\n';
  return 0;
}

int cmd_checkpoint(const Common& c, const std::string& prog, const std::vector<std::string>& args,
                   std::size_t k, const std::string& out) {
  auto unit = load_program(prog);
  sigma::Capture cap = sigma::checkpoint(unit, first_arg(args), k, c.root, policy_of(c.policy), c.fuel);
  double t0 = sigma::cpu_ms();
  std::string text = sigma::pickle::serialize(cap.doc);
  sigma::write_text_file(out, text);
  sigma::migrate::MigrationReport r;
  r.capture_ms = cap.capture_ms;
  r.store_ms = sigma::cpu_ms() - t0;
  r.payload_bytes = text.size();
  r.frame_count = cap.frame_count;
  print_lines(cap.output);
  print_report(c, r);
  return 0;
}

int cmd_restore(const Common& c, const std::string& dump) {
  double t0 = sigma::cpu_ms();
  auto doc = sigma::pickle::deserialize(sigma::read_text_file(dump));
  double t1 = sigma::cpu_ms();
  sigma::Session s = sigma::restore(doc, c.root, sigma::Value(), c.fuel);
  double t2 = sigma::cpu_ms();
  sigma::Value v = s.finish();
  print_lines(s.output());
  std::cout << sigma::display(v) << '\n';
  sigma::migrate::MigrationReport r;
  r.load_ms = t1 - t0;
  r.restore_ms = t2 - t1;
  print_report(c, r);
  return 0;
}

int cmd_serve(const Common& c, const std::string& listen, std::size_t max_requests) {
  sigma::migrate::NodeConfig cfg;
  cfg.listen = sigma::migrate::parse_address(listen);
  cfg.root = c.root;
  cfg.fuel = c.fuel;
  sigma::migrate::Server server(cfg);
  std::cout << "listening on " << cfg.listen.host << ":" << server.port() << std::endl;
  while (max_requests == 0 || server.served() < max_requests) server.serve_one(-1);
  return 0;
}

int cmd_migrate(const Common& c, const std::string& prog, const std::vector<std::string>& args,
                const std::string& to, std::size_t k) {
  auto unit = load_program(prog);
  auto m = sigma::migrate::migrate(unit, first_arg(args), sigma::migrate::parse_address(to), k,
                                   c.root, policy_of(c.policy), c.fuel);
  print_lines(m.local_output);
  if (m.response.status != Exit::Ok) {
    std::cerr << "remote: " << m.response.error << '\n';
    return static_cast<int>(m.response.status);
  }
  print_lines(m.response.output);
  std::cout << m.response.result << '\n';
  print_report(c, m.report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SECD machine with reflective coroutines: run, checkpoint, restore, migrate"};
  app.require_subcommand(1);
  Common c;
  auto common = [&c](CLI::App* sub) {
    sub->add_option("--fuel", c.fuel, "Step budget per run");
    sub->add_option("--policy", c.policy, "Non-serializable values: fail or nil")
        ->check(CLI::IsMember({"fail", "nil"}));
    sub->add_option("--report", c.report, "Print a timing report")
        ->check(CLI::IsMember({"json", "text"}));
    sub->add_option("--root", c.root, "Directory program file paths are relative to");
  };

  std::string prog, out, dump, listen, to;
  std::vector<std::string> args;
  std::size_t k = 1, max_requests = 0;

  auto* run = app.add_subcommand("run", "Run a program to completion");
  run->add_option("program", prog)->required();
  run->add_option("args", args);
  common(run);

  auto* cp = app.add_subcommand("checkpoint", "Capture a program at a yield");
  cp->add_option("program", prog)->required();
  cp->add_option("args", args);
  cp->add_option("--at-yield", k, "Capture at the K-th yield")->check(CLI::PositiveNumber);
  cp->add_option("--out", out, "Dump file")->required();
  common(cp);

  auto* rs = app.add_subcommand("restore", "Resume a dump to completion");
  rs->add_option("dump", dump)->required();
  common(rs);

  auto* sv = app.add_subcommand("serve", "Receive migrations");
  sv->add_option("--listen", listen, "HOST:PORT (port 0 picks one)")->required();
  sv->add_option("--max-requests", max_requests, "Exit after this many requests (0 = never)");
  common(sv);

  auto* mg = app.add_subcommand("migrate", "Run to a yield and continue on another node");
  mg->add_option("program", prog)->required();
  mg->add_option("args", args);
  mg->add_option("--to", to, "HOST:PORT")->required();
  mg->add_option("--at-yield", k, "Migrate at the K-th yield")->check(CLI::PositiveNumber);
  common(mg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(Exit::Usage);
  }

  try {
    if (*run) return cmd_run(c, prog, args);
    if (*cp) return cmd_checkpoint(c, prog, args, k, out);
    if (*rs) return cmd_restore(c, dump);
    if (*sv) return cmd_serve(c, listen, max_requests);
    if (*mg) return cmd_migrate(c, prog, args, to, k);
  } catch (const sigma::lang::SyntaxError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(Exit::Compile);
  } catch (const sigma::lang::CompileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(Exit::Compile);
  } catch (const sigma::migrate::ProtocolError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(Exit::Protocol);
  } catch (const sigma::migrate::ConnectionFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(Exit::Protocol);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(Exit::Runtime);
  }
  return static_cast<int>(Exit::Usage);
}
