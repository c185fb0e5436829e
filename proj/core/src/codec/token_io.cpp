#include "cscore/codec/token_io.hpp"

#include <algorithm>
#include <cstdint>

#include "cscore/errors.hpp"
#include "cscore/io_util.hpp"

namespace cs::codec {
namespace {

constexpr char kMagic[4] = {'C', 'S', 'T', 'K'};
constexpr std::uint32_t kVersion = 1;

std::int64_t row_bytes(std::int64_t p) { return (p + 7) / 8; }

}  // namespace

void write_token_file(const std::string& path, const CodecConfig& cfg,
                      const std::vector<TokenHierarchy>& windows) {
  cfg.validate();
  ioutil::FilePtr f = ioutil::open_file(path, "wb");

  ioutil::write_bytes(f.get(), kMagic, 4);
  ioutil::write_u32(f.get(), kVersion);
  ioutil::write_u32(f.get(), static_cast<std::uint32_t>(cfg.levels()));
  for (std::int64_t r : cfg.resolutions)
    ioutil::write_u32(f.get(), static_cast<std::uint32_t>(r));
  ioutil::write_u32(f.get(), static_cast<std::uint32_t>(cfg.p));
  ioutil::write_u32(f.get(), static_cast<std::uint32_t>(cfg.T));

  const std::int64_t rb = row_bytes(cfg.p);
  std::vector<unsigned char> row(static_cast<std::size_t>(rb));
  for (const TokenHierarchy& h : windows) {
    check_state(static_cast<std::int64_t>(h.levels.size()) == cfg.levels(),
                "token window has wrong level count");
    for (std::size_t l = 0; l < h.levels.size(); ++l) {
      const CodeLevel& lev = h.levels[l];
      check_state(lev.bits_per_row == cfg.p &&
                      lev.full_rows == cfg.resolutions[l],
                  "token level shape mismatch");
      check_state(lev.rows_present() == lev.full_rows,
                  "refusing to write a partial token window");
      for (std::int64_t j = 0; j < lev.full_rows; ++j) {
        std::fill(row.begin(), row.end(), 0);
        for (std::int64_t b = 0; b < cfg.p; ++b) {
          if (lev.bit(j, b) != 0)
            row[static_cast<std::size_t>(b / 8)] |=
                static_cast<unsigned char>(1u << (b % 8));
        }
        ioutil::write_bytes(f.get(), row.data(), row.size());
      }
    }
  }
  if (std::fflush(f.get()) != 0) throw IoError("token file flush failed");
}

TokenFile read_token_file(const std::string& path) {
  ioutil::FilePtr f = ioutil::open_file(path, "rb");
  ioutil::check_magic(f.get(), kMagic, "token");
  const std::uint32_t version = ioutil::read_u32(f.get(), "version");
  if (version != kVersion)
    throw IoError("unsupported token file version " + std::to_string(version));

  TokenFile out;
  const std::uint32_t levels = ioutil::read_u32(f.get(), "level count");
  check_state(levels >= 1 && levels <= 64, "implausible token level count");
  out.resolutions.resize(levels);
  for (std::uint32_t l = 0; l < levels; ++l)
    out.resolutions[l] = ioutil::read_u32(f.get(), "resolution");
  out.p = ioutil::read_u32(f.get(), "code width");
  out.T = ioutil::read_u32(f.get(), "window length");
  check_state(out.p >= 1 && out.p <= 16, "implausible code width");
  check_state(out.T >= 1, "implausible window length");

  std::int64_t window_bytes = 0;
  const std::int64_t rb = row_bytes(out.p);
  for (std::uint32_t l = 0; l < levels; ++l) {
    check_state(out.resolutions[l] >= 1 && out.resolutions[l] <= out.T,
                "implausible token resolution");
    window_bytes += out.resolutions[l] * rb;
  }

  const std::int64_t payload = ioutil::file_payload_bytes(f.get());
  check_state(payload % window_bytes == 0,
              "token file payload is not a whole number of windows");
  const std::int64_t n_windows = payload / window_bytes;

  std::vector<unsigned char> row(static_cast<std::size_t>(rb));
  out.windows.reserve(static_cast<std::size_t>(n_windows));
  for (std::int64_t w = 0; w < n_windows; ++w) {
    TokenHierarchy h;
    h.levels.resize(levels);
    for (std::uint32_t l = 0; l < levels; ++l) {
      CodeLevel& lev = h.levels[l];
      lev.level = static_cast<std::int64_t>(l) + 1;
      lev.full_rows = out.resolutions[l];
      lev.bits_per_row = out.p;
      lev.bits.reserve(
          static_cast<std::size_t>(lev.full_rows * lev.bits_per_row));
      for (std::int64_t j = 0; j < lev.full_rows; ++j) {
        ioutil::read_bytes(f.get(), row.data(), row.size(), "bit row");
        for (std::int64_t b = 0; b < out.p; ++b) {
          const unsigned char byte = row[static_cast<std::size_t>(b / 8)];
          lev.bits.push_back((byte >> (b % 8)) & 1u);
        }
      }
    }
    out.windows.push_back(std::move(h));
  }
  return out;
}

}  // namespace cs::codec
