#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cscore/nn/params.hpp"
#include "cscore/nn/tape.hpp"

namespace cs::nn {

// Pre-norm transformer: self-attention, then one cross-attention block per
// named stream (in declaration order), then a GELU MLP, with a final layer
// norm after the last block. All models in the repo are instances of this
// with different stream sets.
struct TransformerConfig {
  std::int64_t depth = 2;
  std::int64_t width = 64;
  std::int64_t heads = 4;
  std::int64_t mlp_mult = 4;
  std::vector<std::string> cross_streams;

  void validate() const {
    check_config(depth >= 1 && width >= 1 && heads >= 1 && mlp_mult >= 1,
                 "transformer config: positive dims");
    check_config(width % heads == 0,
                 "transformer config: width divisible by heads");
  }
};

// standard sin/cos interleaved table, rows are positions
TensorF sinusoidal_posenc(std::int64_t n, std::int64_t d);

void register_transformer(ParameterStore& store, const std::string& prefix,
                          const TransformerConfig& cfg, cs::rng::Rng& rng);

// Multi-head attention on tape ids. q is [nq x d], k [nk x d], v [nk x dv];
// d and dv must both divide by heads. A fully denied query row yields a
// zero output row.
template <typename S>
typename Tape<S>::Id masked_attention(Tape<S>& tape, typename Tape<S>::Id q,
                                      typename Tape<S>::Id k,
                                      typename Tape<S>::Id v,
                                      const AttentionMask& mask,
                                      std::int64_t heads);

template <typename S>
struct CrossStream {
  typename Tape<S>::Id source = -1;  // [n_src x width], already embedded
  AttentionMask mask;                // query x n_src visibility
};

// crosses must carry exactly cfg.cross_streams, in order.
template <typename S>
typename Tape<S>::Id apply_transformer(
    Tape<S>& tape, const ParameterStore& store, const AttachedParams<S>& att,
    const std::string& prefix, const TransformerConfig& cfg,
    typename Tape<S>::Id x, const AttentionMask& self_mask,
    const std::vector<std::pair<std::string, CrossStream<S>>>& crosses = {});

}  // namespace cs::nn
