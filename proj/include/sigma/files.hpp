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

// Host file handles. A handle is plain data (path, mode, position); every
// read or write opens the host file, seeks, transfers and closes again, so a
// MachineState never owns an OS resource and stays copyable.

#include <array>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "sigma/state.hpp"

namespace sigma {

inline constexpr std::array<std::string_view, 8> kFileModes = {
    "r", "w", "a", "r+", "rb", "wb", "ab", "rb+"};

inline bool valid_file_mode(std::string_view mode) {
  for (auto m : kFileModes)
    if (m == mode) return true;
  return false;
}

/// Paths are relative to a transfer root and may not escape it.
inline std::filesystem::path resolve_under(const std::filesystem::path& root,
                                           std::string_view rel) {
  std::filesystem::path p(rel);
  if (rel.empty() || p.is_absolute())
    fail(Fault::BadPath, "file", "path must be relative: '" + std::string(rel) + "'");
  for (const auto& part : p)
    if (part == "..")
      fail(Fault::BadPath, "file", "path escapes the file root: '" + std::string(rel) + "'");
  return root / p;
}

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_host(const std::filesystem::path& p, const char* mode) {
  return FilePtr(std::fopen(p.c_str(), mode));
}

inline bool mode_writes(std::string_view m) { return m != "r" && m != "rb"; }
inline bool mode_reads(std::string_view m) {
  return m == "r" || m == "rb" || m == "r+" || m == "rb+";
}
inline bool mode_appends(std::string_view m) { return m == "a" || m == "ab"; }

}  // namespace detail

/// Opens `path` on the host and records the handle in the machine's file
/// registry. "w" modes truncate here, once.
inline Loc register_open(MachineState& st, std::string_view path, std::string_view mode) {
  if (!valid_file_mode(mode))
    fail(Fault::HostOpenFailure, "open", "bad mode '" + std::string(mode) + "'");
  auto full = resolve_under(st.file_root, path);
  std::string host_mode(mode);
  if (host_mode.find('b') == std::string::npos) host_mode += 'b';
  auto f = detail::open_host(full, host_mode.c_str());
  if (!f)
    fail(Fault::HostOpenFailure, "open",
         "cannot open '" + std::string(path) + "' in mode " + std::string(mode));
  std::uint64_t pos = 0;
  if (detail::mode_appends(mode)) {
    std::fseek(f.get(), 0, SEEK_END);
    pos = static_cast<std::uint64_t>(std::ftell(f.get()));
  }
  Loc l = st.store.allocate(FileHandle{std::string(path), std::string(mode), pos});
  st.open_files.insert(l);
  return l;
}

inline FileHandle& open_handle(MachineState& st, Loc l, std::string_view op) {
  auto& fh = st.store.expect<FileHandle>(l, Fault::TypeError, op);
  if (!st.open_files.count(l))
    fail(Fault::TypeError, std::string(op), "file " + location_name(l) + " is closed");
  return fh;
}

inline void file_write(MachineState& st, Loc l, std::string_view data) {
  auto& fh = open_handle(st, l, "write");
  if (!detail::mode_writes(fh.mode))
    fail(Fault::TypeError, "write", "file opened read-only");
  auto f = detail::open_host(resolve_under(st.file_root, fh.path), "r+b");
  if (!f) fail(Fault::HostOpenFailure, "write", "cannot reopen '" + fh.path + "'");
  if (detail::mode_appends(fh.mode)) {
    std::fseek(f.get(), 0, SEEK_END);
    fh.position = static_cast<std::uint64_t>(std::ftell(f.get()));
  } else {
    std::fseek(f.get(), static_cast<long>(fh.position), SEEK_SET);
  }
  std::fwrite(data.data(), 1, data.size(), f.get());
  fh.position += data.size();
}

/// Reads up to `n` bytes; nil at end of file.
inline Value file_read(MachineState& st, Loc l, std::size_t n) {
  auto& fh = open_handle(st, l, "read");
  if (!detail::mode_reads(fh.mode)) fail(Fault::TypeError, "read", "file opened write-only");
  auto f = detail::open_host(resolve_under(st.file_root, fh.path), "rb");
  if (!f) fail(Fault::HostOpenFailure, "read", "cannot reopen '" + fh.path + "'");
  std::fseek(f.get(), static_cast<long>(fh.position), SEEK_SET);
  std::string buf(n, '\0');
  std::size_t got = std::fread(buf.data(), 1, n, f.get());
  if (got == 0 && n > 0) return Value();
  buf.resize(got);
  fh.position += got;
  return Value(std::move(buf));
}

inline void file_close(MachineState& st, Loc l) {
  open_handle(st, l, "close");
  st.open_files.erase(l);
}

}  // namespace sigma
