#pragma once

#include <stdexcept>
#include <string>

namespace cs {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/matrix dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Out-of-range class indices, frame indices, token addresses.
struct IndexError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration (resolutions > T, codec/generator
// mismatch, missing files named by a manifest, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Protocol misuse: out-of-order token prediction, double backward,
// incomplete token hierarchies, inconsistent emitted sets.
struct StateError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}
inline void check_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}
inline void check_index(bool cond, const std::string& msg) {
  if (!cond) throw IndexError(msg);
}
inline void check_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}
inline void check_state(bool cond, const std::string& msg) {
  if (!cond) throw StateError(msg);
}

}  // namespace cs
