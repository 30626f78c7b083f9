#include "localbins/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace localbins {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t tag) {
  // distinct, purpose-bound RNG streams so data/boxes/init never interleave
  std::seed_seq seq{seed, tag};
  return std::mt19937_64(seq);
}

Tensor stack_images(const std::vector<SceneSample>& corpus,
                    const std::vector<std::size_t>& idx) {
  const std::int64_t h = corpus[idx[0]].image.dim(1), w = corpus[idx[0]].image.dim(2);
  Tensor out({static_cast<std::int64_t>(idx.size()), 3, h, w});
  for (std::size_t s = 0; s < idx.size(); ++s)
    std::copy(corpus[idx[s]].image.data(), corpus[idx[s]].image.data() + 3 * h * w,
              out.data() + static_cast<std::int64_t>(s) * 3 * h * w);
  return out;
}

Tensor stack_depths(const std::vector<SceneSample>& corpus, const std::vector<std::size_t>& idx,
                    std::vector<std::uint8_t>& mask_out) {
  const std::int64_t h = corpus[idx[0]].depth.dim(1), w = corpus[idx[0]].depth.dim(2);
  Tensor out({static_cast<std::int64_t>(idx.size()), 1, h, w});
  mask_out.clear();
  for (std::size_t s = 0; s < idx.size(); ++s) {
    std::copy(corpus[idx[s]].depth.data(), corpus[idx[s]].depth.data() + h * w,
              out.data() + static_cast<std::int64_t>(s) * h * w);
    mask_out.insert(mask_out.end(), corpus[idx[s]].mask.begin(), corpus[idx[s]].mask.end());
  }
  return out;
}

std::vector<std::int64_t> decoder_channels(const BackboneParams& bb) {
  std::vector<std::int64_t> out;
  for (const auto& c : bb.dec) out.push_back(c.w.dim(0));
  return out;
}

}  // namespace

Model build_model(const TrainConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  auto rng = stream_rng(cfg.seed, 1);
  m.backbone = make_backbone(m.store, rng, cfg.n_decoder, cfg.n_seed, cfg.base_channels,
                             cfg.max_channels);
  if (cfg.training_mode != TrainingMode::PixelOnly) {
    LocalBinsConfig lc;
    lc.n_seed = cfg.n_seed;
    lc.n_levels = cfg.n_decoder;
    lc.embed_dim = cfg.embed_dim;
    lc.hidden_embed = cfg.hidden_embed;
    lc.hidden_seed = cfg.hidden_seed;
    lc.hidden_split = cfg.hidden_split;
    lc.splitter = cfg.splitter;
    lc.linear_norm_eps = cfg.linear_norm_eps;
    lc.seed_eps = cfg.seed_eps;
    m.head = make_localbins(m.store, rng, lc, m.backbone.bottleneck_channels(),
                            decoder_channels(m.backbone));
    m.has_head = true;
  }
  return m;
}

Tensor predict_depth(const Model& m, const Tensor& image) {
  PyramidFeatures pyr = encode_decode(image, m.backbone);
  const Tensor& top = m.cfg.n_decoder > 0 ? pyr.decoder.back() : pyr.bottleneck;
  if (!m.has_head) return direct_depth(top, m.backbone, m.cfg.range());
  Tensor logits = output_logits(top, m.backbone, m.cfg.output_bins());
  return forward_localbins(pyr, logits, m.head, m.cfg.range()).depth;
}

void check_corpus(const TrainConfig& cfg, const std::vector<SceneSample>& corpus) {
  if (corpus.empty()) throw format_error("corpus is empty");
  for (const auto& s : corpus) {
    if (s.depth.dim(1) != cfg.resolution || s.depth.dim(2) != cfg.resolution)
      throw format_error("corpus/config mismatch: sample resolution " +
                         std::to_string(s.depth.dim(1)) + "x" + std::to_string(s.depth.dim(2)) +
                         " vs configured " + std::to_string(cfg.resolution));
    for (std::int64_t i = 0; i < s.depth.size(); ++i)
      if (s.mask[static_cast<std::size_t>(i)] &&
          (s.depth.data()[i] < cfg.d_min || s.depth.data()[i] > cfg.d_max))
        throw format_error("corpus/config mismatch: valid depth outside configured range");
  }
}

TrainResult train_model(Model& m, const std::vector<SceneSample>& corpus,
                        const std::string& out_dir) {
  const TrainConfig& cfg = m.cfg;
  check_corpus(cfg, corpus);
  std::filesystem::create_directories(out_dir);

  const std::int64_t h = cfg.resolution, w = cfg.resolution;
  const std::int64_t epoch_steps =
      (static_cast<std::int64_t>(corpus.size()) + cfg.batch - 1) / cfg.batch;
  const std::int64_t total_steps = cfg.steps > 0 ? cfg.steps : cfg.epochs * epoch_steps;

  auto data_rng = stream_rng(cfg.seed, 2);
  auto box_rng = stream_rng(cfg.seed, 3);
  auto gt_rng = stream_rng(cfg.seed, 4);
  auto naive_rng = stream_rng(cfg.seed, 5);

  AdamWT<double> opt;
  opt.base_lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.final_lr_factor = cfg.final_lr_factor;
  opt.flat_fraction = cfg.flat_fraction;
  std::vector<Tensor> params = m.store.tensors();

  std::ofstream loss_csv(out_dir + "/loss.csv");
  loss_csv << "step,pixel_loss,bins_loss,total\n";
  std::ofstream dbg;
  if (cfg.training_mode == TrainingMode::QRFoveated) {
    dbg.open(out_dir + "/loss_breakdown.csv");
    dbg << "step,level,size_class,weighted_term\n";
  }

  const auto sizes = cfg.working_box_sizes(h, w);
  const DepthRange range = cfg.range();
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);

  TrainResult result;
  for (std::int64_t step = 0; step < total_steps; ++step) {
    std::vector<std::size_t> idx;
    for (std::int64_t b = 0; b < cfg.batch; ++b) idx.push_back(pick(data_rng));
    Tensor images = stack_images(corpus, idx);
    std::vector<std::uint8_t> mask;
    Tensor depths = stack_depths(corpus, idx, mask);

    PyramidFeatures pyr = encode_decode(images, m.backbone);
    const Tensor& top = cfg.n_decoder > 0 ? pyr.decoder.back() : pyr.bottleneck;

    Tensor pixel;
    Tensor bins = Tensor::scalar(0.0);
    bool have_bins = false;
    LocalBinsOutput lbo;
    if (m.has_head) {
      Tensor logits = output_logits(top, m.backbone, cfg.output_bins());
      lbo = forward_localbins(pyr, logits, m.head, range);
      pixel = silog_loss(lbo.depth, depths, mask, cfg.loss.si_lambda, cfg.loss.si_alpha);
    } else {
      pixel = silog_loss(direct_depth(top, m.backbone, range), depths, mask,
                         cfg.loss.si_lambda, cfg.loss.si_alpha);
    }

    if (cfg.training_mode == TrainingMode::Naive) {
      // per-pixel spatial bins vs centered GT windows at sampled locations
      std::vector<PixelIndex> px;
      std::vector<std::vector<double>> gts;
      for (std::size_t s = 0; s < idx.size(); ++s) {
        auto targets = naive_subsample_targets(corpus[idx[s]].depth, corpus[idx[s]].mask,
                                               cfg.naive_window, cfg.naive_locations, naive_rng);
        for (auto& t : targets) {
          px.push_back({static_cast<std::int64_t>(s), t.pixel.y, t.pixel.x});
          gts.push_back(std::move(t.gt_depths));
        }
      }
      if (!px.empty()) {
        Tensor rows = gather_pixels(lbo.states.back().widths, px);
        Tensor centers = bin_centers(rows, range.d_min, range.d_max);
        bins = chamfer_rows(centers, gts, std::vector<double>(gts.size(), 1.0));
        have_bins = true;
      }
    } else if (cfg.training_mode == TrainingMode::QR ||
               cfg.training_mode == TrainingMode::QRFoveated) {
      // queries per sample, grouped class-major across the whole batch
      std::vector<QuerySet> qsets;
      for (std::size_t s = 0; s < idx.size(); ++s)
        qsets.push_back(generate_queries(box_rng, h, w, sizes, cfg.boxes_per_class));
      QueryBatch qb;
      for (std::size_t k = 0; k < sizes.size(); ++k)
        for (std::size_t s = 0; s < idx.size(); ++s)
          for (const auto& b : qsets[s].boxes) {
            if (b.size_class != static_cast<int>(k)) continue;
            auto gt = extract_gt_depths(corpus[idx[s]].depth, corpus[idx[s]].mask, b, cfg.gt_cap,
                                        gt_rng);
            if (gt.empty()) continue;  // rejected box
            qb.boxes.push_back({static_cast<std::int64_t>(s), b.x0, b.y0, b.x1, b.y1});
            qb.size_class.push_back(b.size_class);
            qb.gt.push_back(std::move(gt));
          }
      if (!qb.boxes.empty()) {
        auto widths = query_bins_batch(pyr, m.head, qb, h, w);
        LossConfig lc = cfg.loss;
        if (cfg.training_mode == TrainingMode::QR) lc.gamma_l = lc.gamma_b = 1.0;
        auto res = foveated_bins_loss(widths, qb.size_class, qb.gt, range, lc,
                                      static_cast<int>(sizes.size()));
        bins = res.loss;
        have_bins = true;
        if (dbg.is_open())
          for (std::size_t lv = 0; lv < res.breakdown.size(); ++lv)
            for (std::size_t k = 0; k < res.breakdown[lv].size(); ++k)
              dbg << step << ',' << lv << ',' << k << ','
                  << format_double(res.breakdown[lv][k]) << '\n';
      }
    }

    Tensor total = have_bins ? total_loss(pixel, bins, cfg.loss) : pixel;
    m.store.zero_grad();
    backward(total);
    opt.step(params, step, total_steps);

    StepLoss sl{pixel.item(), have_bins ? bins.item() : 0.0, total.item()};
    result.losses.push_back(sl);
    loss_csv << step << ',' << format_double(sl.pixel) << ',' << format_double(sl.bins) << ','
             << format_double(sl.total) << '\n';

    if ((step + 1) % epoch_steps == 0)
      save_checkpoint(m.store,
                      out_dir + "/ckpt_epoch_" + std::to_string((step + 1) / epoch_steps) + ".lbk");
  }
  save_checkpoint(m.store, out_dir + "/ckpt_final.lbk");
  return result;
}

MetricsReport evaluate_model(const Model& m, const std::vector<SceneSample>& corpus) {
  check_corpus(m.cfg, corpus);
  NoGrad ng;
  MetricsReport mean;
  for (const auto& s : corpus) {
    Tensor img({1, 3, s.image.dim(1), s.image.dim(2)}, s.image.values());
    Tensor pred = predict_depth(m, img);
    Tensor pred3({1, s.depth.dim(1), s.depth.dim(2)}, pred.values());
    MetricsReport r = compute_metrics(pred3, s.depth, s.mask);
    mean.delta1 += r.delta1;
    mean.delta2 += r.delta2;
    mean.delta3 += r.delta3;
    mean.rel += r.rel;
    mean.rms += r.rms;
    mean.log10 += r.log10;
  }
  const double n = static_cast<double>(corpus.size());
  mean.delta1 /= n;
  mean.delta2 /= n;
  mean.delta3 /= n;
  mean.rel /= n;
  mean.rms /= n;
  mean.log10 /= n;
  return mean;
}

std::vector<SweepRow> sweep_bins(const TrainConfig& base, const std::vector<int>& n_seed_values,
                                 const std::vector<SceneSample>& train_corpus,
                                 const std::vector<SceneSample>& eval_corpus,
                                 const std::string& out_dir) {
  if (n_seed_values.size() < 2) throw std::invalid_argument("sweep_bins: need at least 2 values");
  std::vector<SweepRow> rows;
  for (int v : n_seed_values) {
    TrainConfig cfg = base;
    cfg.n_seed = v;
    Model m = build_model(cfg);
    train_model(m, train_corpus, out_dir + "/nseed_" + std::to_string(v));
    SweepRow r;
    r.n_bins = cfg.output_bins();
    r.rel = evaluate_model(m, eval_corpus).rel;
    rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.n_bins < b.n_bins; });
  return rows;
}

std::vector<CoverageRow> coverage_study(const TrainConfig& cfg, std::int64_t h, std::int64_t w) {
  std::vector<CoverageRow> rows;
  // naive accounting: every sampled location contributes exactly one pixel
  for (std::int64_t psci : {std::int64_t{4096}, std::int64_t{8192}}) {
    CoverageRow r;
    r.mode = "naive";
    r.report.psci = psci;
    r.report.px_covered = psci;
    r.report.coverage_pct = 100.0 * static_cast<double>(psci) / static_cast<double>(h * w);
    rows.push_back(r);
  }
  // query-response rows share one box stream so unions are nested
  auto rng = stream_rng(cfg.seed, 6);
  const auto sizes = cfg.working_box_sizes(h, w);
  QuerySet full = generate_queries(rng, h, w, sizes, 200);
  for (std::int64_t m : {std::int64_t{50}, std::int64_t{100}, std::int64_t{200}}) {
    QuerySet qs;
    qs.sizes = sizes;
    qs.boxes_per_class = m;
    for (std::size_t k = 0; k < sizes.size(); ++k)
      for (std::int64_t i = 0; i < m; ++i)
        qs.boxes.push_back(full.boxes[k * 200 + static_cast<std::size_t>(i)]);
    CoverageRow r;
    r.mode = "query_response";
    r.report = coverage_report(qs, h, w);
    rows.push_back(r);
  }
  return rows;
}

void analyze_model(const Model& m, const std::vector<SceneSample>& corpus,
                   std::int64_t n_locations, const std::string& out_dir) {
  if (!m.has_head) throw std::invalid_argument("analyze: model has no LocalBins head");
  check_corpus(m.cfg, corpus);
  std::filesystem::create_directories(out_dir);
  NoGrad ng;
  auto rng = stream_rng(m.cfg.seed, 7);
  const DepthRange range = m.cfg.range();
  const std::int64_t n_images = std::min<std::int64_t>(4, static_cast<std::int64_t>(corpus.size()));
  const auto windows = m.cfg.working_box_sizes(m.cfg.resolution, m.cfg.resolution);

  std::ofstream loc_csv(out_dir + "/locality.csv");
  loc_csv << "image,location,y,x,window,mean_abs_dist\n";
  std::ofstream mean_csv(out_dir + "/locality_mean.csv");
  mean_csv << "image,window,mean_abs_dist\n";
  std::ofstream den_csv(out_dir + "/density.csv");
  den_csv << "image,location,kind,window,depth,density\n";

  for (std::int64_t im = 0; im < n_images; ++im) {
    const auto& s = corpus[static_cast<std::size_t>(im)];
    const std::int64_t h = s.depth.dim(1), w = s.depth.dim(2);
    Tensor img({1, 3, h, w}, s.image.values());
    PyramidFeatures pyr = encode_decode(img, m.backbone);
    const Tensor& top = m.cfg.n_decoder > 0 ? pyr.decoder.back() : pyr.bottleneck;
    Tensor logits = output_logits(top, m.backbone, m.cfg.output_bins());
    LocalBinsOutput lbo = forward_localbins(pyr, logits, m.head, range);
    const Tensor& widths = lbo.states.back().widths;
    const std::int64_t nbins = widths.dim(1);

    std::vector<std::int64_t> valid;
    for (std::int64_t i = 0; i < h * w; ++i)
      if (s.mask[static_cast<std::size_t>(i)]) valid.push_back(i);
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);

    std::vector<double> win_acc(windows.size(), 0.0);
    std::vector<std::int64_t> win_cnt(windows.size(), 0);
    for (std::int64_t loc = 0; loc < n_locations; ++loc) {
      const std::int64_t pidx = valid[pick(rng)];
      const std::int64_t cy = pidx / w, cx = pidx % w;
      // per-pixel predicted centers at the output level
      std::vector<double> wvec(static_cast<std::size_t>(nbins));
      for (std::int64_t k = 0; k < nbins; ++k)
        wvec[static_cast<std::size_t>(k)] = widths.data()[k * h * w + cy * w + cx];
      std::vector<double> centers(static_cast<std::size_t>(nbins));
      double cum = 0;
      for (std::int64_t k = 0; k < nbins; ++k) {
        centers[static_cast<std::size_t>(k)] =
            range.d_min + (range.d_max - range.d_min) * (wvec[static_cast<std::size_t>(k)] / 2 + cum);
        cum += wvec[static_cast<std::size_t>(k)];
      }
      std::vector<std::vector<double>> win_sets;
      for (auto ws : windows) {
        const std::int64_t r = ws / 2;
        std::vector<double> set;
        for (std::int64_t y = std::max<std::int64_t>(cy - r, 0); y <= std::min(cy + r, h - 1); ++y)
          for (std::int64_t x = std::max<std::int64_t>(cx - r, 0); x <= std::min(cx + r, w - 1);
               ++x)
            if (s.mask[static_cast<std::size_t>(y * w + x)])
              set.push_back(s.depth.data()[y * w + x]);
        if (set.empty()) set.push_back(s.depth.data()[pidx]);
        win_sets.push_back(std::move(set));
      }
      auto dists = nearest_center_locality(centers, win_sets);
      for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        loc_csv << im << ',' << loc << ',' << cy << ',' << cx << ',' << windows[wi] << ','
                << format_double(dists[wi]) << '\n';
        win_acc[wi] += dists[wi];
        ++win_cnt[wi];
      }
      if (loc < 3) {
        const double bw = default_kde_bandwidth(range, centers.size());
        DensityCurve pc = bin_density_profile(centers, range, bw);
        for (std::size_t i = 0; i < pc.depth.size(); ++i)
          den_csv << im << ',' << loc << ",pred,0," << format_double(pc.depth[i]) << ','
                  << format_double(pc.density[i]) << '\n';
        for (std::size_t wi = 0; wi < windows.size(); ++wi) {
          DensityCurve gc = bin_density_profile(win_sets[wi], range,
                                                default_kde_bandwidth(range, win_sets[wi].size()));
          for (std::size_t i = 0; i < gc.depth.size(); ++i)
            den_csv << im << ',' << loc << ",gt," << windows[wi] << ','
                    << format_double(gc.depth[i]) << ',' << format_double(gc.density[i]) << '\n';
        }
      }
    }
    for (std::size_t wi = 0; wi < windows.size(); ++wi)
      mean_csv << im << ',' << windows[wi] << ','
               << format_double(win_acc[wi] / static_cast<double>(win_cnt[wi])) << '\n';
  }
}

}  // namespace localbins
