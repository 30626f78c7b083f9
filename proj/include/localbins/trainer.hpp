#pragma once

// Run management: model assembly, the training loop with its query-response
// supervision, evaluation, sweeps, the coverage study and analysis emission.

#include <string>

#include "localbins/checkpoint.hpp"
#include "localbins/config.hpp"
#include "localbins/data.hpp"
#include "localbins/optim.hpp"
#include "localbins/query.hpp"

namespace localbins {

struct Model {
  TrainConfig cfg;
  ParamStore store;
  BackboneParams backbone;
  LocalBinsParams head;  // absent in pixel_only mode
  bool has_head = false;
};

Model build_model(const TrainConfig& cfg);

// Depth prediction for a [N,3,H,W] batch (hybrid regression, or the direct
// head in pixel_only mode).
Tensor predict_depth(const Model& m, const Tensor& image);

struct StepLoss {
  double pixel = 0, bins = 0, total = 0;
};

struct TrainResult {
  std::vector<StepLoss> losses;
};

// Trains in place; writes loss.csv, per-(level,class) breakdown CSV in
// qr_foveated mode, per-epoch checkpoints and ckpt_final.lbk under out_dir.
TrainResult train_model(Model& m, const std::vector<SceneSample>& corpus,
                        const std::string& out_dir);

// Mean per-image metrics.
MetricsReport evaluate_model(const Model& m, const std::vector<SceneSample>& corpus);

struct SweepRow {
  std::int64_t n_bins = 0;
  double rel = 0;
};
std::vector<SweepRow> sweep_bins(const TrainConfig& base, const std::vector<int>& n_seed_values,
                                 const std::vector<SceneSample>& train_corpus,
                                 const std::vector<SceneSample>& eval_corpus,
                                 const std::string& out_dir);

struct CoverageRow {
  std::string mode;
  CoverageReport report;
};
std::vector<CoverageRow> coverage_study(const TrainConfig& cfg, std::int64_t h, std::int64_t w);

void analyze_model(const Model& m, const std::vector<SceneSample>& corpus,
                   std::int64_t n_locations, const std::string& out_dir);

// Checks the corpus against the config (resolution and depth range).
void check_corpus(const TrainConfig& cfg, const std::vector<SceneSample>& corpus);

std::string format_double(double v);

}  // namespace localbins
