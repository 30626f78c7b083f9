#pragma once

// The LocalBins head: bin-embedding projection, seed bin estimation at the
// bottleneck, per-level bin splitting and hybrid depth regression. All layers
// are pointwise MLPs, so the same parameters run on spatial maps and on
// pooled query vectors.

#include <random>

#include "localbins/backbone.hpp"
#include "localbins/bin_ops.hpp"
#include "localbins/types.hpp"

namespace localbins {

// Per-pixel normalized bin widths at one pyramid level plus the embedding
// field that produced them. Rank 4 on the spatial path, rank 2 on the query
// path.
struct BinState {
  Tensor widths;     // [N,m,H,W] or [B,m], m = 2^level * N_seed
  Tensor embedding;  // [N,E,H,W] or [B,E]
  int level = 0;
};

struct LocalBinsConfig {
  int n_seed = 4;
  int n_levels = 4;        // decoder levels; bin count at the output is 2^n * N_seed
  int embed_dim = 128;     // bin embedding space
  int hidden_embed = 128;  // h for bin embedding MLPs
  int hidden_seed = 256;   // h for the seed bin width MLP
  int hidden_split = 128;  // h for bin splitter MLPs
  SplitterKind splitter = SplitterKind::LinearNorm;
  double linear_norm_eps = 1e-4;
  double seed_eps = 1e-3;  // positivity floor before seed normalization
};

struct LocalBinsParams {
  LocalBinsConfig cfg;
  Mlp embed_bottleneck;
  std::vector<Mlp> embed_decoder;  // one per decoder level
  Mlp seed;
  std::vector<Mlp> splitters;  // level k uses splitters[k-1]; empty for Constant
};

LocalBinsParams make_localbins(ParamStore& store, std::mt19937_64& rng,
                               const LocalBinsConfig& cfg, std::int64_t bottleneck_channels,
                               const std::vector<std::int64_t>& decoder_channels);

// layer -1 = bottleneck, 0..n-1 = decoder levels.
Tensor embed_bins(const Tensor& feat, const LocalBinsParams& p, int layer);

// Seed widths at level 0: MLP -> ReLU + eps -> per-pixel normalization.
BinState seed_bins(const Tensor& bottleneck_embedding, const LocalBinsParams& p);

// Splitter activation on the raw MLP output (m channels for Sigmoid, 2m
// interleaved nonnegative pairs for LinearNorm, ignored for Constant).
Tensor splitter_activation(SplitterKind kind, const Tensor& mlp_out, double eps,
                           std::int64_t m_bins);

// One refinement level. On the spatial path the previous state is bilinearly
// upsampled (widths renormalized afterwards); on the flat query path shapes
// must already agree. The embedding carried forward is the residual sum.
BinState split_bins(const BinState& prev, const Tensor& cur_embedding,
                    const LocalBinsParams& p);

// d = sum_k c(b^k) p^k with p = softmax over channels; output [N,1,H,W].
Tensor hybrid_regress(const Tensor& widths, const Tensor& logits, const DepthRange& range);

struct LocalBinsOutput {
  std::vector<BinState> states;  // levels 0..n
  Tensor depth;                  // [N,1,H,W]
};

LocalBinsOutput forward_localbins(const PyramidFeatures& pyr, const Tensor& logits,
                                  const LocalBinsParams& p, const DepthRange& range);

}  // namespace localbins
