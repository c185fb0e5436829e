#pragma once

#include <string>
#include <vector>

#include "cscore/codec/codec.hpp"

namespace cs::codec {

// Token container: header (magic "CSTK", u32 version, u32 L, u32 r_l each,
// u32 p, u32 T), then per window per level the bit rows packed LSB-first,
// each row padded to a whole byte. Window count is implied by file size.

struct TokenFile {
  std::int64_t T = 0;
  std::int64_t p = 0;
  std::vector<std::int64_t> resolutions;
  std::vector<TokenHierarchy> windows;
};

void write_token_file(const std::string& path, const CodecConfig& cfg,
                      const std::vector<TokenHierarchy>& windows);

TokenFile read_token_file(const std::string& path);

}  // namespace cs::codec
