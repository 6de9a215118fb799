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

// Two-node migration over TCP.
//
// Request:  "SIGMAMIG" ver:u8 token:u32+bytes dump:u64+bytes nfiles:u32
//           { name:u32+bytes data:u64+bytes }*
// Response: "SIGMARES" ver:u8 status:u8 body:u64+bytes (JSON)
//
// All integers are big-endian. The resume token is the JSON text of the atom
// handed to the program as the result of its yield.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <unistd.h>

#include <json.hpp>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sigma/pickle.hpp"
#include "sigma/session.hpp"

namespace sigma::migrate {

inline constexpr std::string_view kRequestMagic = "SIGMAMIG";
inline constexpr std::string_view kResponseMagic = "SIGMARES";
inline constexpr std::uint8_t kWireVersion = 1;

inline constexpr std::uint64_t kMaxDump = 256ull << 20;
inline constexpr std::uint64_t kMaxFile = 256ull << 20;
inline constexpr std::uint32_t kMaxFiles = 1024;
inline constexpr std::uint32_t kMaxName = 4096;
inline constexpr std::uint32_t kMaxToken = 1 << 20;

/// Exit statuses shared by the CLI and the response status byte.
enum class Exit : int { Ok = 0, Usage = 2, Compile = 3, Runtime = 4, Protocol = 5 };

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& msg) : Error("ProtocolError: " + msg) {}
};

class ConnectionFailure : public Error {
 public:
  explicit ConnectionFailure(const std::string& msg) : Error("ConnectionFailure: " + msg) {}
};

struct AttachedFile {
  std::string name;  // path relative to the transfer root
  std::string data;

  friend bool operator==(const AttachedFile&, const AttachedFile&) = default;
};

struct Envelope {
  std::string token = "null";
  std::string dump;
  std::vector<AttachedFile> files;

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

struct Response {
  Exit status = Exit::Ok;
  std::vector<std::string> output;
  std::string result;  // display form of the final value
  nlohmann::json result_value;
  std::string error;
  double load_ms = 0;
  double restore_ms = 0;
  double run_ms = 0;
  double total_ms = 0;  // remote wall time spent handling the request
};

struct MigrationReport {
  double capture_ms = 0;
  double store_ms = 0;
  double transmit_ms = 0;
  double load_ms = 0;
  double restore_ms = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t frame_count = 0;

  nlohmann::json to_json() const {
    return {{"capture_ms", capture_ms}, {"store_ms", store_ms},   {"transmit_ms", transmit_ms},
            {"load_ms", load_ms},       {"restore_ms", restore_ms}, {"payload_bytes", payload_bytes},
            {"frame_count", frame_count}};
  }

  std::string to_text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "capture_ms    %.3f\nstore_ms      %.3f\ntransmit_ms   %.3f\nload_ms       %.3f\n"
                  "restore_ms    %.3f\npayload_bytes %llu\nframe_count   %llu\n",
                  capture_ms, store_ms, transmit_ms, load_ms, restore_ms,
                  static_cast<unsigned long long>(payload_bytes),
                  static_cast<unsigned long long>(frame_count));
    return buf;
  }
};

// ---------------------------------------------------------------------------
// Atoms as JSON (resume token, final value)

inline nlohmann::json atom_json(const Value& v) {
  if (v.is_nil()) return nullptr;
  if (v.is_bool()) return v.as_bool();
  if (v.is_num()) return std::isfinite(v.as_num()) ? nlohmann::json(v.as_num()) : nlohmann::json(display(v));
  if (v.is_text()) return v.as_text();
  return display(v);
}

inline Value atom_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  return Value();
}

// ---------------------------------------------------------------------------
// Codec

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

/// Pulls bytes from a source one request at a time; the source throws on
/// short reads.
using ReadFn = std::function<std::string(std::size_t)>;

inline std::uint64_t get_uint(const ReadFn& read, int bytes) {
  std::string b = read(static_cast<std::size_t>(bytes));
  std::uint64_t v = 0;
  for (unsigned char c : b) v = (v << 8) | c;
  return v;
}

inline std::string get_blob(const ReadFn& read, int len_bytes, std::uint64_t limit,
                            const char* what) {
  std::uint64_t n = get_uint(read, len_bytes);
  if (n > limit)
    throw ProtocolError(std::string(what) + " length " + std::to_string(n) + " exceeds limit");
  return read(static_cast<std::size_t>(n));
}

inline void magic(const ReadFn& read, std::string_view want) {
  std::string m = read(want.size());
  if (m != want) throw ProtocolError("bad magic");
  std::uint64_t ver = get_uint(read, 1);
  if (ver != kWireVersion) throw ProtocolError("unsupported wire version " + std::to_string(ver));
}

}  // namespace detail

inline std::string encode(const Envelope& e) {
  std::string out(kRequestMagic);
  detail::put_u8(out, kWireVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(e.token.size()));
  out += e.token;
  detail::put_u64(out, e.dump.size());
  out += e.dump;
  detail::put_u32(out, static_cast<std::uint32_t>(e.files.size()));
  for (const auto& f : e.files) {
    detail::put_u32(out, static_cast<std::uint32_t>(f.name.size()));
    out += f.name;
    detail::put_u64(out, f.data.size());
    out += f.data;
  }
  return out;
}

inline Envelope decode_envelope(const detail::ReadFn& read) {
  detail::magic(read, kRequestMagic);
  Envelope e;
  e.token = detail::get_blob(read, 4, kMaxToken, "token");
  e.dump = detail::get_blob(read, 8, kMaxDump, "dump");
  std::uint64_t n = detail::get_uint(read, 4);
  if (n > kMaxFiles) throw ProtocolError("too many files: " + std::to_string(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    AttachedFile f;
    f.name = detail::get_blob(read, 4, kMaxName, "file name");
    f.data = detail::get_blob(read, 8, kMaxFile, "file data");
    e.files.push_back(std::move(f));
  }
  return e;
}

/// Reader over an in-memory buffer.
inline detail::ReadFn buffer_reader(std::string_view buf) {
  auto pos = std::make_shared<std::size_t>(0);
  return [buf, pos](std::size_t n) {
    if (buf.size() - *pos < n) throw ProtocolError("truncated message");
    std::string s(buf.substr(*pos, n));
    *pos += n;
    return s;
  };
}

inline Envelope decode_envelope(std::string_view buf) {
  auto read = buffer_reader(buf);
  Envelope e = decode_envelope(read);
  try {
    read(1);
  } catch (const ProtocolError&) {
    return e;
  }
  throw ProtocolError("trailing bytes after envelope");
}

inline std::string encode(const Response& r) {
  nlohmann::json body = {{"output", r.output},
                         {"result", r.result},
                         {"value", r.result_value},
                         {"error", r.error},
                         {"timings",
                          {{"load_ms", r.load_ms},
                           {"restore_ms", r.restore_ms},
                           {"run_ms", r.run_ms},
                           {"total_ms", r.total_ms}}}};
  std::string text = body.dump();
  std::string out(kResponseMagic);
  detail::put_u8(out, kWireVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(r.status));
  detail::put_u64(out, text.size());
  out += text;
  return out;
}

inline Response decode_response(const detail::ReadFn& read) {
  detail::magic(read, kResponseMagic);
  Response r;
  r.status = static_cast<Exit>(detail::get_uint(read, 1));
  std::string text = detail::get_blob(read, 8, kMaxDump, "response");
  nlohmann::json body = nlohmann::json::parse(text, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw ProtocolError("malformed response body");
  r.output = body.value("output", std::vector<std::string>{});
  r.result = body.value("result", "");
  r.result_value = body.value("value", nlohmann::json());
  r.error = body.value("error", "");
  const auto t = body.value("timings", nlohmann::json::object());
  r.load_ms = t.value("load_ms", 0.0);
  r.restore_ms = t.value("restore_ms", 0.0);
  r.run_ms = t.value("run_ms", 0.0);
  r.total_ms = t.value("total_ms", 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// Sockets

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void set_timeout(int ms) {
    timeval tv{ms / 1000, (ms % 1000) * 1000};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  }

  void send_all(std::string_view data) {
    while (!data.empty()) {
      ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw ConnectionFailure(std::string("send: ") + std::strerror(errno));
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  std::string recv_exact(std::size_t n) {
    std::string out;
    char buf[65536];
    while (out.size() < n) {
      ssize_t got = ::recv(fd_, buf, std::min(sizeof buf, n - out.size()), 0);
      if (got < 0 && errno == EINTR) continue;
      if (got == 0) throw ProtocolError("connection closed mid-message");
      if (got < 0) throw ProtocolError(std::string("recv: ") + std::strerror(errno));
      out.append(buf, static_cast<std::size_t>(got));
    }
    return out;
  }

  detail::ReadFn reader() {
    return [this](std::size_t n) { return recv_exact(n); };
  }

 private:
  int fd_ = -1;
};

struct Address {
  std::string host;
  std::uint16_t port = 0;
};

inline Address parse_address(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == text.size())
    throw Error("address must be HOST:PORT, got '" + std::string(text) + "'");
  unsigned long port = 0;
  try {
    port = std::stoul(std::string(text.substr(colon + 1)));
  } catch (const std::exception&) {
    port = 70000;
  }
  if (port > 65535) throw Error("bad port in '" + std::string(text) + "'");
  std::string host(text.substr(0, colon));
  if (host.empty()) host = "127.0.0.1";
  return {host, static_cast<std::uint16_t>(port)};
}

namespace detail {
struct AddrInfo {
  addrinfo* list = nullptr;
  ~AddrInfo() {
    if (list) ::freeaddrinfo(list);
  }
};

inline AddrInfo resolve(const Address& a, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  AddrInfo out;
  std::string port = std::to_string(a.port);
  int rc = ::getaddrinfo(a.host.c_str(), port.c_str(), &hints, &out.list);
  if (rc != 0) throw ConnectionFailure(a.host + ": " + ::gai_strerror(rc));
  return out;
}
}  // namespace detail

inline Socket connect_to(const Address& a, int timeout_ms = 30000) {
  auto ai = detail::resolve(a, false);
  std::string last = "no addresses";
  for (addrinfo* p = ai.list; p; p = p->ai_next) {
    Socket s(::socket(p->ai_family, p->ai_socktype, p->ai_protocol));
    if (!s.valid()) continue;
    if (::connect(s.fd(), p->ai_addr, p->ai_addrlen) == 0) {
      s.set_timeout(timeout_ms);
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return s;
    }
    last = std::strerror(errno);
  }
  throw ConnectionFailure("connect " + a.host + ":" + std::to_string(a.port) + ": " + last);
}

inline Socket listen_on(const Address& a) {
  auto ai = detail::resolve(a, true);
  for (addrinfo* p = ai.list; p; p = p->ai_next) {
    Socket s(::socket(p->ai_family, p->ai_socktype, p->ai_protocol));
    if (!s.valid()) continue;
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.fd(), p->ai_addr, p->ai_addrlen) == 0 && ::listen(s.fd(), 16) == 0) return s;
  }
  throw ConnectionFailure("cannot listen on " + a.host + ":" + std::to_string(a.port));
}

inline std::uint16_t local_port(const Socket& s) {
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&ss), &len);
  if (ss.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
  return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
}

// ---------------------------------------------------------------------------
// Receiver

struct NodeConfig {
  Address listen{"127.0.0.1", 0};
  std::filesystem::path root = ".";
  std::uint64_t fuel = kDefaultFuel;
  int timeout_ms = 5000;
};

/// Restores and finishes the computation carried by `e`.
inline Response handle(const NodeConfig& cfg, const Envelope& e) {
  Response r;
  double t_start = wall_ms();
  try {
    for (const auto& f : e.files) {
      auto path = resolve_under(cfg.root, f.name);
      std::filesystem::create_directories(path.parent_path());
      write_text_file(path, f.data);
    }
    nlohmann::json token = nlohmann::json::parse(e.token, nullptr, false);
    if (token.is_discarded()) throw ProtocolError("resume token is not JSON");
    double t0 = cpu_ms();
    pickle::WireDoc doc = pickle::deserialize(e.dump);
    double t1 = cpu_ms();
    Session s = restore(doc, cfg.root, atom_from_json(token), cfg.fuel);
    double t2 = cpu_ms();
    Value v = s.finish();
    r.run_ms = cpu_ms() - t2;
    r.load_ms = t1 - t0;
    r.restore_ms = t2 - t1;
    r.output = s.output();
    r.result = display(v);
    r.result_value = atom_json(v);
  } catch (const ProtocolError& ex) {
    r.status = Exit::Protocol;
    r.error = ex.what();
  } catch (const pickle::PickleError& ex) {
    r.status = Exit::Protocol;
    r.error = ex.what();
  } catch (const std::exception& ex) {
    r.status = Exit::Runtime;
    r.error = ex.what();
  }
  r.total_ms = wall_ms() - t_start;
  return r;
}

/// Serial accept loop. Any failure while reading a request is answered with a
/// protocol-error response when possible, and the server keeps serving.
class Server {
 public:
  explicit Server(NodeConfig cfg) : cfg_(std::move(cfg)), sock_(listen_on(cfg_.listen)) {
    std::filesystem::create_directories(cfg_.root);
  }

  std::uint16_t port() const { return local_port(sock_); }
  std::size_t served() const { return served_; }
  std::size_t rejected() const { return rejected_; }

  /// Serves one connection; returns false if none arrived within `wait_ms`.
  bool serve_one(int wait_ms = -1) {
    pollfd pfd{sock_.fd(), POLLIN, 0};
    if (::poll(&pfd, 1, wait_ms) <= 0) return false;
    Socket c(::accept(sock_.fd(), nullptr, nullptr));
    if (!c.valid()) return false;
    c.set_timeout(cfg_.timeout_ms);
    Response r;
    try {
      Envelope e = decode_envelope(c.reader());
      r = handle(cfg_, e);
    } catch (const std::exception& ex) {
      r.status = Exit::Protocol;
      r.error = ex.what();
    }
    if (r.status == Exit::Protocol) ++rejected_;
    ++served_;
    try {
      c.send_all(encode(r));
    } catch (const std::exception&) {
    }
    return true;
  }

  void serve(const std::atomic<bool>& stop) {
    while (!stop.load()) serve_one(100);
  }

 private:
  NodeConfig cfg_;
  Socket sock_;
  std::size_t served_ = 0;
  std::size_t rejected_ = 0;
};

// ---------------------------------------------------------------------------
// Sender

struct Migration {
  Response response;
  MigrationReport report;
  std::vector<std::string> local_output;  // printed before the capture
};

/// Builds the envelope for a capture: the serialized dump plus the bytes of
/// every file it references, read from `root`.
inline Envelope make_envelope(const std::string& dump, const pickle::WireDoc& doc,
                              const std::filesystem::path& root, const Value& token = Value()) {
  Envelope e;
  e.token = atom_json(token).dump();
  e.dump = dump;
  for (const auto& f : doc.files)
    e.files.push_back({f.path, read_text_file(resolve_under(root, f.path))});
  return e;
}

/// Sends an envelope and waits for the response; `roundtrip_ms` receives the
/// wall time from first byte sent to response received.
inline Response send(const Address& to, const Envelope& e, double* roundtrip_ms = nullptr,
                     int timeout_ms = 60000) {
  Socket s = connect_to(to, timeout_ms);
  std::string bytes = encode(e);
  double t0 = wall_ms();
  s.send_all(bytes);
  Response r = decode_response(s.reader());
  if (roundtrip_ms) *roundtrip_ms = wall_ms() - t0;
  return r;
}

/// Runs the program to its k-th yield, captures it and ships it to `to`.
inline Migration migrate(const lang::CompiledUnit& unit, Value arg, const Address& to,
                         std::size_t k = 1, const std::filesystem::path& root = ".",
                         const pickle::ErrorPolicy& policy = {},
                         std::uint64_t fuel = kDefaultFuel) {
  Migration m;
  Capture c = checkpoint(unit, std::move(arg), k, root, policy, fuel);
  m.local_output = c.output;
  double t0 = cpu_ms();
  std::string dump = pickle::serialize(c.doc);
  m.report.store_ms = cpu_ms() - t0;
  m.report.capture_ms = c.capture_ms;
  m.report.frame_count = c.frame_count;
  Envelope e = make_envelope(dump, c.doc, root);
  m.report.payload_bytes = encode(e).size();
  double roundtrip = 0;
  m.response = send(to, e, &roundtrip);
  m.report.transmit_ms = std::max(0.0, (roundtrip - m.response.total_ms) / 2);
  m.report.load_ms = m.response.load_ms;
  m.report.restore_ms = m.response.restore_ms;
  return m;
}

}  // namespace sigma::migrate
