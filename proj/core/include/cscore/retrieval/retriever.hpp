#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cscore/codec/codec.hpp"
#include "cscore/nn/params.hpp"
#include "cscore/nn/tape.hpp"
#include "cscore/nn/transformer.hpp"

namespace cs::retrieval {

// Style retrieval: cross-attention readout over an unstructured library of
// reference clips, jointly keyed by recent audio and motion history, mapped
// to a motion-space prior for the frames seen so far plus the one being
// generated.

struct RetrieverConfig {
  std::int64_t width = 64;
  std::int64_t heads = 4;
  std::int64_t query_tail = 16;  // recent history rows kept at full rate
  std::int64_t slots = 4;        // learned readout queries
  std::int64_t head_hidden = 128;
  std::int64_t max_window = 100;  // T; priors cover at most 2T rows

  void validate() const;
};

struct StyleTemplate {
  TensorF audio;   // n x 512
  TensorF motion;  // n x 137
  std::string identity_tag;  // evaluation bookkeeping, never enters the model

  std::int64_t rows() const { return motion.rows(); }
};

// Templates kept in a canonical content-determined order, so attention
// reductions run identically no matter the insertion order.
class StyleLibrary {
 public:
  void add(StyleTemplate t);
  const std::vector<StyleTemplate>& templates() const { return templates_; }
  std::int64_t total_rows() const;
  bool empty() const { return templates_.empty(); }

 private:
  std::vector<StyleTemplate> templates_;
};

// Library manifest: lines of `<identity_tag> <clip_path>`, paths relative
// to the manifest location, clips in the dataset binary format.
StyleLibrary load_library(const std::string& manifest_path);

// Encoded library: one key/value row per template frame. Rebuilt whenever
// the templates or the weights change; immutable afterwards and shareable.
struct LibraryMemory {
  TensorF keys;    // rows x width
  TensorF values;  // rows x width
  bool null_memory = false;  // empty library: the learned null row pair
};

// Aligned causal history for one query: the previous window followed by the
// current frames before t. pad marks rows that are stream-start padding.
struct QueryHistory {
  TensorF audio;   // rows x 512
  TensorF motion;  // rows x 137
  std::vector<std::uint8_t> pad;
};

// What actually enters the network: a mean summary row of older history
// plus the most recent query_tail rows, each concat(audio, motion, pad
// flag, summary flag); plus the positional rows for the prior output.
struct QueryInputs {
  TensorF rows;      // (m+1) x 651
  std::int64_t n_prior = 0;
};

class RetrieverModel {
 public:
  // Registers parameters under "ret." into the shared store. The store
  // must outlive the model.
  RetrieverModel(RetrieverConfig cfg, nn::ParameterStore& store,
                 std::uint64_t seed);

  const RetrieverConfig& config() const { return cfg_; }
  const nn::ParameterStore& store() const { return store_; }

  // Eager library encoding (inference path).
  LibraryMemory encode_library(const StyleLibrary& lib) const;

  // Query assembly is shared by training and inference; histories are
  // data, not differentiable inputs.
  QueryInputs build_query(const QueryHistory& hist,
                          std::int64_t n_prior) const;

  // Inference: prior over n_prior rows (previous window + frames <= t).
  TensorF retrieve(const LibraryMemory& memory, const QueryHistory& hist,
                   std::int64_t n_prior) const;

  // Tape builders, used by the joint training graph.
  template <typename S>
  std::pair<typename nn::Tape<S>::Id, typename nn::Tape<S>::Id>
  encode_library_graph(nn::Tape<S>& tape, const nn::AttachedParams<S>& att,
                       const StyleLibrary& lib) const;

  template <typename S>
  typename nn::Tape<S>::Id retrieve_graph(nn::Tape<S>& tape,
                                          const nn::AttachedParams<S>& att,
                                          typename nn::Tape<S>::Id mem_keys,
                                          typename nn::Tape<S>::Id mem_values,
                                          const QueryInputs& q) const;

  // positional rows for prior output indices [0, n)
  TensorF prior_posenc(std::int64_t n) const;

  nn::TransformerConfig query_tf_config() const;

 private:
  RetrieverConfig cfg_;
  nn::ParameterStore& store_;
  TensorF query_posenc_;  // (query_tail + 1) x width
  TensorF prior_posenc_;  // 2 * max_window x width
};

// Mean squared error over all prior entries against aligned ground truth.
template <typename S>
typename nn::Tape<S>::Id prior_loss(nn::Tape<S>& tape,
                                    typename nn::Tape<S>::Id prior,
                                    const TensorF& target);

double prior_loss_value(const TensorF& prior, const TensorF& target);

}  // namespace cs::retrieval
