#include "localbins/bins.hpp"

namespace localbins {

namespace {

// Splitter fractions can get arbitrarily close to 0, and products of them
// across levels underflow far enough that adjacent bin centers tie in
// float64. Re-flooring after every width normalization bounds each width
// away from zero so centers stay strictly increasing.
constexpr double kWidthFloor = 1e-8;

Tensor floor_widths(const Tensor& widths) {
  return normalize_channel(add_scalar(widths, kWidthFloor));
}

void register_mlp(ParamStore& store, const std::string& name, Mlp& m) {
  m.w1 = store.add(name + ".w1", m.w1);
  m.b1 = store.add(name + ".b1", m.b1);
  m.w2 = store.add(name + ".w2", m.w2);
  m.b2 = store.add(name + ".b2", m.b2);
  m.w3 = store.add(name + ".w3", m.w3);
  m.b3 = store.add(name + ".b3", m.b3);
}

}  // namespace

LocalBinsParams make_localbins(ParamStore& store, std::mt19937_64& rng,
                               const LocalBinsConfig& cfg, std::int64_t bottleneck_channels,
                               const std::vector<std::int64_t>& decoder_channels) {
  if (cfg.n_seed < 1) throw std::invalid_argument("localbins: n_seed must be >= 1");
  if (static_cast<int>(decoder_channels.size()) != cfg.n_levels)
    throw std::invalid_argument("localbins: decoder channel list length != n_levels");
  LocalBinsParams p;
  p.cfg = cfg;

  p.embed_bottleneck =
      Mlp::kaiming(rng, bottleneck_channels, cfg.hidden_embed, cfg.embed_dim);
  register_mlp(store, "localbins.embed_bottleneck", p.embed_bottleneck);
  for (int i = 0; i < cfg.n_levels; ++i) {
    Mlp m = Mlp::kaiming(rng, decoder_channels[static_cast<std::size_t>(i)], cfg.hidden_embed,
                         cfg.embed_dim);
    register_mlp(store, "localbins.embed_dec" + std::to_string(i), m);
    p.embed_decoder.push_back(std::move(m));
  }
  p.seed = Mlp::kaiming(rng, cfg.embed_dim, cfg.hidden_seed, cfg.n_seed);
  register_mlp(store, "localbins.seed", p.seed);

  if (cfg.splitter != SplitterKind::Constant) {
    for (int k = 1; k <= cfg.n_levels; ++k) {
      const std::int64_t m_bins = (std::int64_t{1} << (k - 1)) * cfg.n_seed;
      const std::int64_t out =
          cfg.splitter == SplitterKind::LinearNorm ? 2 * m_bins : m_bins;
      Mlp m = Mlp::kaiming(rng, cfg.embed_dim, cfg.hidden_split, out);
      register_mlp(store, "localbins.split" + std::to_string(k), m);
      p.splitters.push_back(std::move(m));
    }
  }
  return p;
}

Tensor embed_bins(const Tensor& feat, const LocalBinsParams& p, int layer) {
  const Mlp* m = nullptr;
  if (layer == -1) {
    m = &p.embed_bottleneck;
  } else if (layer >= 0 && layer < static_cast<int>(p.embed_decoder.size())) {
    m = &p.embed_decoder[static_cast<std::size_t>(layer)];
  } else {
    throw std::invalid_argument("embed_bins: unknown layer id " + std::to_string(layer));
  }
  return m->apply(feat);
}

BinState seed_bins(const Tensor& bottleneck_embedding, const LocalBinsParams& p) {
  Tensor raw = p.seed.apply(bottleneck_embedding);
  Tensor widths = floor_widths(normalize_channel(add_scalar(relu(raw), p.cfg.seed_eps)));
  return {widths, bottleneck_embedding, 0};
}

Tensor splitter_activation(SplitterKind kind, const Tensor& mlp_out, double eps,
                           std::int64_t m_bins) {
  switch (kind) {
    case SplitterKind::Constant: {
      Shape s = mlp_out.shape();
      s[1] = m_bins;
      return Tensor::full(s, 0.5);
    }
    case SplitterKind::Sigmoid:
      if (mlp_out.dim(1) != m_bins)
        throw std::invalid_argument("splitter_activation: expected m channels");
      return sigmoid(mlp_out);
    case SplitterKind::LinearNorm:
      if (mlp_out.dim(1) != 2 * m_bins)
        throw std::invalid_argument("splitter_activation: expected 2m channels");
      // ReLU alone allows exact zeros and hence alpha = 0; the tiny floor
      // keeps alpha strictly inside (0,1) so bin widths never collapse.
      return linear_norm_pairs(add_scalar(relu(mlp_out), 1e-7), eps);
  }
  throw std::invalid_argument("splitter_activation: bad kind");
}

BinState split_bins(const BinState& prev, const Tensor& cur_embedding,
                    const LocalBinsParams& p) {
  const int k = prev.level + 1;
  if (k > p.cfg.n_levels) throw std::invalid_argument("split_bins: level overflow");

  Tensor widths = prev.widths;
  Tensor emb = prev.embedding;
  if (cur_embedding.rank() == 4) {
    if (cur_embedding.dim(2) != 2 * widths.dim(2) || cur_embedding.dim(3) != 2 * widths.dim(3))
      throw std::invalid_argument("split_bins: current level must be 2x the previous resolution");
    // upsampling perturbs per-pixel sums, renormalize to keep the invariant
    widths = normalize_channel(bilinear_upsample2x(widths));
    emb = bilinear_upsample2x(emb);
  } else if (cur_embedding.shape() != emb.shape()) {
    throw std::invalid_argument("split_bins: embedding shape mismatch on flat path");
  }

  Tensor residual = add(emb, cur_embedding);
  const std::int64_t m_bins = widths.dim(1);
  Tensor alpha;
  if (p.cfg.splitter == SplitterKind::Constant) {
    alpha = splitter_activation(SplitterKind::Constant, residual, 0.0, m_bins);
  } else {
    const Mlp& s = p.splitters.at(static_cast<std::size_t>(k - 1));
    alpha = splitter_activation(p.cfg.splitter, s.apply(residual), p.cfg.linear_norm_eps, m_bins);
  }
  Tensor out = floor_widths(normalize_channel(split_widths(widths, alpha)));
  return {out, residual, k};
}

Tensor hybrid_regress(const Tensor& widths, const Tensor& logits, const DepthRange& range) {
  if (widths.shape() != logits.shape())
    throw std::invalid_argument("hybrid_regress: widths/logits shape mismatch, " +
                                shape_str(widths.shape()) + " vs " + shape_str(logits.shape()));
  Tensor centers = bin_centers(widths, range.d_min, range.d_max);
  Tensor probs = softmax_channel(logits);
  return sum_channel(mul(centers, probs));
}

LocalBinsOutput forward_localbins(const PyramidFeatures& pyr, const Tensor& logits,
                                  const LocalBinsParams& p, const DepthRange& range) {
  if (static_cast<int>(pyr.decoder.size()) != p.cfg.n_levels)
    throw std::invalid_argument("forward_localbins: pyramid level count mismatch");
  LocalBinsOutput out;
  Tensor e0 = embed_bins(pyr.bottleneck, p, -1);
  out.states.push_back(seed_bins(e0, p));
  for (int k = 1; k <= p.cfg.n_levels; ++k) {
    Tensor ek = embed_bins(pyr.decoder[static_cast<std::size_t>(k - 1)], p, k - 1);
    out.states.push_back(split_bins(out.states.back(), ek, p));
  }
  out.depth = hybrid_regress(out.states.back().widths, logits, range);
  return out;
}

}  // namespace localbins
