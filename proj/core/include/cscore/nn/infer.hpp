#pragma once

#include <string>
#include <vector>

#include "cscore/nn/params.hpp"
#include "cscore/nn/transformer.hpp"

namespace cs::nn {

// Eager single-pass kernels. These reproduce the corresponding tape ops
// operation for operation (same loop order, same accumulation order), so a
// cached incremental pass emits the same bits as a full-sequence replay.
TensorF affine_rows(const TensorF& x, const TensorF& w, const TensorF& b);
TensorF layer_norm_rows(const TensorF& x, const TensorF& g, const TensorF& b);
void gelu_inplace(TensorF& x);
void append_rows(TensorF& dst, const TensorF& rows);

// Incremental decoder over a registered transformer: self-attention keys
// grow as rows are fed; cross-attention reads per-stream key/value caches
// that the caller sets or extends. Rows fed to step() must already carry
// their input embedding and positional encoding.
class TransformerSession {
 public:
  TransformerSession(const ParameterStore& store, std::string prefix,
                     TransformerConfig cfg);

  // replace a stream's source rows (re-projects key/value caches)
  void set_stream(const std::string& name, const TensorF& rows);
  // extend a stream with additional rows
  void append_stream(const std::string& name, const TensorF& rows);
  std::int64_t stream_rows(const std::string& name) const;

  // feed the next rows of the sequence; returns their final-norm outputs
  TensorF step(const TensorF& x_rows);
  std::int64_t position() const { return self_rows_; }

  // forget the self-attention context (window rollover); streams persist
  void reset_context();

 private:
  struct LayerKV {
    TensorF k, v;
  };

  std::int64_t stream_index(const std::string& name) const;
  const TensorF& weight(const std::string& suffix) const;

  const ParameterStore& store_;
  std::string prefix_;
  TransformerConfig cfg_;
  std::vector<LayerKV> self_;                    // per layer
  std::vector<std::vector<LayerKV>> streams_;    // [stream][layer]
  std::int64_t self_rows_ = 0;
};

}  // namespace cs::nn
