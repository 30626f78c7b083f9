#pragma once

// Desk-scale encoder-decoder with skip connections. n stride-2 encoder
// stages, a bottleneck conv, and n decoder stages that upsample, concatenate
// the matching skip and convolve. Stands in for a full-scale pretrained
// backbone.

#include <random>

#include "localbins/types.hpp"

namespace localbins {

struct ConvLayer {
  Tensor w, b;
  int stride = 1;
  int pad = 1;
};

struct PyramidFeatures {
  Tensor bottleneck;            // [N,C0,H/2^n,W/2^n]
  std::vector<Tensor> decoder;  // level i at (H/2^{n-1-i}, W/2^{n-1-i})
};

struct BackboneParams {
  int n = 4;        // encoder/decoder stages
  int n_seed = 4;   // fixes the logits head channel count 2^n * n_seed
  std::vector<ConvLayer> enc;
  ConvLayer bottleneck;
  std::vector<ConvLayer> dec;
  ConvLayer logits_head;  // -> 2^n * n_seed channels
  ConvLayer direct_head;  // -> 1 channel (plain regression baseline)

  int bottleneck_channels() const { return static_cast<int>(bottleneck.w.dim(0)); }
  std::int64_t logits_channels() const { return logits_head.w.dim(0); }
};

// Registers all backbone parameters in `store` under "backbone.*".
BackboneParams make_backbone(ParamStore& store, std::mt19937_64& rng, int n, int n_seed,
                             int base_channels = 16, int max_channels = 128);

PyramidFeatures encode_decode(const Tensor& image, const BackboneParams& p);

// Raw per-pixel logits for the probability head.
Tensor output_logits(const Tensor& top_decoder_feat, const BackboneParams& p,
                     std::int64_t n_bins_out);

// Plain depth head: d_min + (d_max-d_min) * sigmoid(conv(feat)).
Tensor direct_depth(const Tensor& top_decoder_feat, const BackboneParams& p,
                    const DepthRange& range);

}  // namespace localbins
