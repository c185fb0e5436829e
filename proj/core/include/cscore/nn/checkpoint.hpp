#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cscore/nn/params.hpp"

namespace cs::nn {

// Versioned binary weight container. Layout: magic "CSCT", u32 version,
// u32 entry count, then per entry a manifest record (u32 name length, name
// bytes, u8 dtype tag 0=f32 / 1=u8, u8 ndim, u32 dims...) and finally the
// raw little-endian payloads in manifest order. Every parameter is stored
// twice: "<name>" holds the raw weights, "<name>.ema" the EMA shadow.
// Byte blobs carry sidecar data (the producing config rides along as the
// "__config__" entry).

struct CheckpointBlob {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

struct LoadedCheckpoint {
  std::uint32_t version = 0;
  std::vector<std::pair<std::string, TensorF>> tensors;
  std::vector<CheckpointBlob> blobs;

  const TensorF* find_tensor(const std::string& name) const;
  const CheckpointBlob* find_blob(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const std::vector<CheckpointBlob>& blobs);

LoadedCheckpoint read_checkpoint(const std::string& path);

// Strict restore: every store parameter must appear with matching shape,
// raw and EMA both.
void load_into_store(const LoadedCheckpoint& ckpt, ParameterStore& store);

}  // namespace cs::nn
