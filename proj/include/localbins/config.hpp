#pragma once

// Flat key=value training configuration. Every method constant appears as a
// key with its standard value as default; sizes are desk-scale by default.

#include <string>
#include <vector>

#include "localbins/losses.hpp"
#include "localbins/types.hpp"

namespace localbins {

enum class TrainingMode { PixelOnly, Naive, QR, QRFoveated };

std::string to_string(TrainingMode m);
TrainingMode training_mode_from_string(const std::string& s);

struct TrainConfig {
  // architecture
  int n_seed = 4;
  int n_decoder = 4;
  int embed_dim = 128;
  int hidden_embed = 128;
  int hidden_seed = 256;
  int hidden_split = 128;
  int base_channels = 16;
  int max_channels = 128;
  SplitterKind splitter = SplitterKind::LinearNorm;
  double linear_norm_eps = 1e-4;
  double seed_eps = 1e-3;

  // depth range
  double d_min = 1e-3;
  double d_max = 10.0;

  // query-response
  std::vector<std::int64_t> box_sizes = {3, 7, 15, 31, 63};
  bool scale_boxes = true;  // rescale sizes to the working resolution
  std::int64_t boxes_per_class = 200;
  std::int64_t gt_cap = 512;

  // naive baseline
  int naive_window = 7;
  std::int64_t naive_locations = 1024;

  // losses
  LossConfig loss;

  // optimizer / schedule
  double lr = 3.57e-4;
  double weight_decay = 0.1;
  double final_lr_factor = 1e-4;
  double flat_fraction = 0.7;

  // run shape (desk-scale defaults; full-scale values settable)
  std::int64_t batch = 4;
  std::int64_t steps = 2000;
  std::int64_t epochs = 10;  // used only when steps == 0
  std::int64_t resolution = 64;
  std::uint64_t seed = 0;
  TrainingMode training_mode = TrainingMode::QRFoveated;

  DepthRange range() const { return DepthRange(d_min, d_max); }
  std::int64_t output_bins() const { return (std::int64_t{1} << n_decoder) * n_seed; }
  std::vector<std::int64_t> working_box_sizes(std::int64_t h, std::int64_t w) const;
  void validate() const;
};

TrainConfig parse_config_file(const std::string& path);
TrainConfig parse_config_text(const std::string& text);

}  // namespace localbins
