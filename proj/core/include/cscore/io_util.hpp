#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "cscore/errors.hpp"

// Little-endian binary file helpers shared by the on-disk containers.

namespace cs::ioutil {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path);
  return f;
}

inline void write_bytes(std::FILE* f, const void* data, std::size_t n) {
  if (std::fwrite(data, 1, n, f) != n) throw IoError("file write failed");
}

inline void read_bytes(std::FILE* f, void* data, std::size_t n,
                       const char* what) {
  if (std::fread(data, 1, n, f) != n)
    throw IoError(std::string("file truncated reading ") + what);
}

inline void write_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  write_bytes(f, b, 4);
}

inline std::uint32_t read_u32(std::FILE* f, const char* what) {
  unsigned char b[4];
  read_bytes(f, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32_array(std::FILE* f, const float* data, std::size_t n) {
  std::vector<unsigned char> buf(4 * std::min<std::size_t>(n, 16384));
  std::size_t done = 0;
  while (done < n) {
    const std::size_t chunk = std::min<std::size_t>(n - done, 16384);
    for (std::size_t i = 0; i < chunk; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &data[done + i], 4);
      buf[4 * i + 0] = static_cast<unsigned char>(bits & 0xff);
      buf[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
      buf[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
      buf[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    write_bytes(f, buf.data(), 4 * chunk);
    done += chunk;
  }
}

inline void read_f32_array(std::FILE* f, float* data, std::size_t n,
                           const char* what) {
  std::vector<unsigned char> buf(4 * std::min<std::size_t>(n, 16384));
  std::size_t done = 0;
  while (done < n) {
    const std::size_t chunk = std::min<std::size_t>(n - done, 16384);
    read_bytes(f, buf.data(), 4 * chunk, what);
    for (std::size_t i = 0; i < chunk; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i + 0]) |
                                 (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
      std::memcpy(&data[done + i], &bits, 4);
    }
    done += chunk;
  }
}

inline void check_magic(std::FILE* f, const char magic[4], const char* kind) {
  char got[4];
  read_bytes(f, got, 4, "magic");
  if (std::memcmp(got, magic, 4) != 0)
    throw IoError(std::string("bad magic, expected a ") + kind + " file");
}

inline std::int64_t file_payload_bytes(std::FILE* f) {
  const long here = std::ftell(f);
  if (here < 0 || std::fseek(f, 0, SEEK_END) != 0)
    throw IoError("file seek failed");
  const long end = std::ftell(f);
  if (end < 0 || std::fseek(f, here, SEEK_SET) != 0)
    throw IoError("file seek failed");
  return end - here;
}

}  // namespace cs::ioutil
