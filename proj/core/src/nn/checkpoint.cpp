#include "cscore/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cs::nn {
namespace {

constexpr char kMagic[4] = {'C', 'S', 'C', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(static_cast<bool>(is), "checkpoint: truncated integer");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32_array(std::ostream& os, const float* data, std::size_t n) {
  // IEEE-754 floats serialized through their bit pattern
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32(os, bits);
  }
}

void get_f32_array(std::istream& is, float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = get_u32(is);
    std::memcpy(&data[i], &bits, 4);
  }
}

struct ManifestEntry {
  std::string name;
  std::uint8_t dtype = 0;  // 0 = f32, 1 = u8
  std::vector<std::uint32_t> dims;
  std::size_t elem_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

void write_manifest_entry(std::ostream& os, const ManifestEntry& e) {
  put_u32(os, static_cast<std::uint32_t>(e.name.size()));
  os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
  os.put(static_cast<char>(e.dtype));
  os.put(static_cast<char>(e.dims.size()));
  for (std::uint32_t d : e.dims) put_u32(os, d);
}

ManifestEntry read_manifest_entry(std::istream& is) {
  ManifestEntry e;
  const std::uint32_t name_len = get_u32(is);
  check(name_len < (1u << 16), "checkpoint: implausible name length");
  e.name.resize(name_len);
  is.read(e.name.data(), name_len);
  int dt = is.get();
  int nd = is.get();
  check(static_cast<bool>(is), "checkpoint: truncated manifest");
  check(dt == 0 || dt == 1, "checkpoint: unknown dtype tag");
  e.dtype = static_cast<std::uint8_t>(dt);
  e.dims.resize(static_cast<std::size_t>(nd));
  for (auto& d : e.dims) d = get_u32(is);
  return e;
}

}  // namespace

const TensorF* LoadedCheckpoint::find_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const CheckpointBlob* LoadedCheckpoint::find_blob(
    const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return &b;
  return nullptr;
}

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const std::vector<CheckpointBlob>& blobs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(os), "checkpoint: cannot open for write: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);

  std::vector<ManifestEntry> entries;
  for (std::int64_t i = 0; i < store.count(); ++i) {
    const Parameter& p = store.at(i);
    const auto r = static_cast<std::uint32_t>(p.value.rows());
    const auto c = static_cast<std::uint32_t>(p.value.cols());
    entries.push_back({p.name, 0, {r, c}});
    entries.push_back({p.name + ".ema", 0, {r, c}});
  }
  for (const CheckpointBlob& b : blobs)
    entries.push_back(
        {b.name, 1, {static_cast<std::uint32_t>(b.bytes.size())}});

  put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const ManifestEntry& e : entries) write_manifest_entry(os, e);

  for (std::int64_t i = 0; i < store.count(); ++i) {
    const Parameter& p = store.at(i);
    put_f32_array(os, p.value.data.data(), p.value.data.size());
    put_f32_array(os, p.ema_value.data.data(), p.ema_value.data.size());
  }
  for (const CheckpointBlob& b : blobs)
    os.write(reinterpret_cast<const char*>(b.bytes.data()),
             static_cast<std::streamsize>(b.bytes.size()));
  check(static_cast<bool>(os), "checkpoint: write failed: " + path);
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(static_cast<bool>(is), "checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  check(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0,
        "checkpoint: bad magic in " + path);
  LoadedCheckpoint out;
  out.version = get_u32(is);
  check(out.version == kVersion, "checkpoint: unsupported version");
  const std::uint32_t n_entries = get_u32(is);
  std::vector<ManifestEntry> entries;
  entries.reserve(n_entries);
  for (std::uint32_t i = 0; i < n_entries; ++i)
    entries.push_back(read_manifest_entry(is));

  for (const ManifestEntry& e : entries) {
    if (e.dtype == 0) {
      check(e.dims.size() == 2, "checkpoint: tensor entries are 2-d");
      TensorF t(static_cast<std::int64_t>(e.dims[0]),
                static_cast<std::int64_t>(e.dims[1]));
      get_f32_array(is, t.data.data(), t.data.size());
      out.tensors.emplace_back(e.name, std::move(t));
    } else {
      check(e.dims.size() == 1, "checkpoint: blob entries are 1-d");
      CheckpointBlob b;
      b.name = e.name;
      b.bytes.resize(e.dims[0]);
      is.read(reinterpret_cast<char*>(b.bytes.data()),
              static_cast<std::streamsize>(b.bytes.size()));
      out.blobs.push_back(std::move(b));
    }
    check(static_cast<bool>(is), "checkpoint: truncated payload in " + path);
  }
  return out;
}

void load_into_store(const LoadedCheckpoint& ckpt, ParameterStore& store) {
  for (std::int64_t i = 0; i < store.count(); ++i) {
    Parameter& p = store.at(i);
    const TensorF* raw = ckpt.find_tensor(p.name);
    const TensorF* ema = ckpt.find_tensor(p.name + ".ema");
    check(raw != nullptr, "checkpoint: missing tensor " + p.name);
    check(ema != nullptr, "checkpoint: missing tensor " + p.name + ".ema");
    check_shape(raw->rows() == p.value.rows() && raw->cols() == p.value.cols(),
                "checkpoint: shape mismatch for " + p.name);
    check_shape(ema->same_shape(*raw), "checkpoint: ema shape mismatch");
    p.value = *raw;
    p.ema_value = *ema;
    std::fill(p.gradient.data.begin(), p.gradient.data.end(), 0.0f);
  }
}

}  // namespace cs::nn
