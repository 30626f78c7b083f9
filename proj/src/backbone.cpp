#include "localbins/backbone.hpp"

namespace localbins {

namespace {

ConvLayer make_conv(ParamStore& store, std::mt19937_64& rng, const std::string& name,
                    std::int64_t cin, std::int64_t cout, int k, int stride) {
  ConvLayer c;
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k));
  c.w = store.add(name + ".w", uniform_tensor<double>(rng, {cout, cin, k, k}, -bound, bound));
  c.b = store.add(name + ".b", Tensor({cout}));
  c.stride = stride;
  c.pad = (k - 1) / 2;
  return c;
}

Tensor apply_conv(const Tensor& x, const ConvLayer& c, bool act) {
  Tensor y = bias_channel(conv2d(x, c.w, c.stride, c.pad), c.b);
  return act ? relu(y) : y;
}

}  // namespace

BackboneParams make_backbone(ParamStore& store, std::mt19937_64& rng, int n, int n_seed,
                             int base_channels, int max_channels) {
  if (n < 0) throw std::invalid_argument("backbone: n must be >= 0");
  if (n_seed < 1) throw std::invalid_argument("backbone: n_seed must be >= 1");
  BackboneParams p;
  p.n = n;
  p.n_seed = n_seed;

  auto ch = [&](int i) { return std::min(base_channels << i, max_channels); };

  std::int64_t cin = 3;
  for (int i = 0; i < n; ++i) {
    p.enc.push_back(make_conv(store, rng, "backbone.enc" + std::to_string(i), cin, ch(i), 3, 2));
    cin = ch(i);
  }
  const int c0 = std::min(base_channels << n, max_channels);
  p.bottleneck = make_conv(store, rng, "backbone.bottleneck", cin, c0, 3, 1);

  std::int64_t prev = c0;
  for (int i = 1; i <= n; ++i) {
    const std::int64_t skip = (i < n) ? ch(n - i - 1) : 3;  // last skip is the image
    const std::int64_t cout = std::max(c0 >> i, 8);
    p.dec.push_back(
        make_conv(store, rng, "backbone.dec" + std::to_string(i - 1), prev + skip, cout, 3, 1));
    prev = cout;
  }

  const std::int64_t top = n > 0 ? prev : c0;
  const std::int64_t n_bins_out = (std::int64_t{1} << n) * n_seed;
  p.logits_head = make_conv(store, rng, "backbone.logits_head", top, n_bins_out, 3, 1);
  p.direct_head = make_conv(store, rng, "backbone.direct_head", top, 1, 3, 1);
  return p;
}

PyramidFeatures encode_decode(const Tensor& image, const BackboneParams& p) {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw std::invalid_argument("encode_decode: expected [N,3,H,W] input");
  const std::int64_t h = image.dim(2), w = image.dim(3);
  const std::int64_t div = std::int64_t{1} << p.n;
  if (h % div != 0 || w % div != 0)
    throw std::invalid_argument("encode_decode: spatial extents must be divisible by 2^n");

  std::vector<Tensor> skips;  // skips[j] = stage j output
  Tensor x = image;
  for (const auto& c : p.enc) {
    x = apply_conv(x, c, true);
    skips.push_back(x);
  }
  PyramidFeatures pyr;
  pyr.bottleneck = apply_conv(x, p.bottleneck, true);

  Tensor d = pyr.bottleneck;
  for (int i = 1; i <= p.n; ++i) {
    Tensor up = bilinear_upsample2x(d);
    const Tensor& skip = (i < p.n) ? skips[static_cast<std::size_t>(p.n - i - 1)] : image;
    d = apply_conv(concat_channel(up, skip), p.dec[static_cast<std::size_t>(i - 1)], true);
    pyr.decoder.push_back(d);
  }
  return pyr;
}

Tensor output_logits(const Tensor& top_decoder_feat, const BackboneParams& p,
                     std::int64_t n_bins_out) {
  if (n_bins_out != (std::int64_t{1} << p.n) * p.n_seed)
    throw std::invalid_argument("output_logits: n_bins_out does not match 2^n * N_seed");
  if (p.logits_head.w.dim(0) != n_bins_out)
    throw std::invalid_argument("output_logits: head channel count mismatch");
  return apply_conv(top_decoder_feat, p.logits_head, false);
}

Tensor direct_depth(const Tensor& top_decoder_feat, const BackboneParams& p,
                    const DepthRange& range) {
  Tensor logit = apply_conv(top_decoder_feat, p.direct_head, false);
  return add_scalar(scale(sigmoid(logit), range.d_max - range.d_min), range.d_min);
}

}  // namespace localbins
