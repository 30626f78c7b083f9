#include "localbins/config.hpp"

#include <fstream>
#include <sstream>

#include "localbins/query.hpp"

namespace localbins {

std::string to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::PixelOnly: return "pixel_only";
    case TrainingMode::Naive: return "naive";
    case TrainingMode::QR: return "qr";
    case TrainingMode::QRFoveated: return "qr_foveated";
  }
  return "?";
}

TrainingMode training_mode_from_string(const std::string& s) {
  if (s == "pixel_only") return TrainingMode::PixelOnly;
  if (s == "naive") return TrainingMode::Naive;
  if (s == "qr") return TrainingMode::QR;
  if (s == "qr_foveated") return TrainingMode::QRFoveated;
  throw std::invalid_argument("unknown training_mode: " + s);
}

std::vector<std::int64_t> TrainConfig::working_box_sizes(std::int64_t h, std::int64_t w) const {
  return scale_boxes ? scaled_box_sizes(h, w, box_sizes) : box_sizes;
}

void TrainConfig::validate() const {
  if (n_seed < 1) throw std::invalid_argument("config: n_seed must be >= 1");
  if (n_decoder < 0) throw std::invalid_argument("config: n_decoder must be >= 0");
  if (!(0 < d_min && d_min < d_max)) throw std::invalid_argument("config: bad depth range");
  if (batch < 1 || resolution < 16 || resolution > 256)
    throw std::invalid_argument("config: batch must be >= 1 and resolution in [16,256]");
  if (steps < 0 || (steps == 0 && epochs < 1))
    throw std::invalid_argument("config: need steps > 0 or epochs >= 1");
  if (boxes_per_class < 1 || box_sizes.empty())
    throw std::invalid_argument("config: need at least one box size and one box per class");
  for (std::size_t i = 1; i < box_sizes.size(); ++i)
    if (box_sizes[i] <= box_sizes[i - 1])
      throw std::invalid_argument("config: box_sizes must be strictly increasing");
  if (naive_window % 2 == 0) throw std::invalid_argument("config: naive_window must be odd");
  if (!(loss.beta >= 0) || !(loss.gamma_l > 0 && loss.gamma_l <= 1) ||
      !(loss.gamma_b > 0 && loss.gamma_b <= 1))
    throw std::invalid_argument("config: bad loss weights");
  if (!(lr > 0) || !(weight_decay >= 0)) throw std::invalid_argument("config: bad optimizer constants");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::int64_t> parse_int_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoll(trim(tok)));
  return out;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig c;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "n_seed") c.n_seed = std::stoi(val);
      else if (key == "n_decoder") c.n_decoder = std::stoi(val);
      else if (key == "embed_dim") c.embed_dim = std::stoi(val);
      else if (key == "hidden_embed") c.hidden_embed = std::stoi(val);
      else if (key == "hidden_seed") c.hidden_seed = std::stoi(val);
      else if (key == "hidden_split") c.hidden_split = std::stoi(val);
      else if (key == "base_channels") c.base_channels = std::stoi(val);
      else if (key == "max_channels") c.max_channels = std::stoi(val);
      else if (key == "splitter") c.splitter = splitter_from_string(val);
      else if (key == "linear_norm_eps") c.linear_norm_eps = std::stod(val);
      else if (key == "seed_eps") c.seed_eps = std::stod(val);
      else if (key == "d_min") c.d_min = std::stod(val);
      else if (key == "d_max") c.d_max = std::stod(val);
      else if (key == "box_sizes") c.box_sizes = parse_int_list(val);
      else if (key == "scale_boxes") c.scale_boxes = (val == "true" || val == "1");
      else if (key == "boxes_per_class") c.boxes_per_class = std::stoll(val);
      else if (key == "gt_cap") c.gt_cap = std::stoll(val);
      else if (key == "naive_window") c.naive_window = std::stoi(val);
      else if (key == "naive_locations") c.naive_locations = std::stoll(val);
      else if (key == "beta") c.loss.beta = std::stod(val);
      else if (key == "gamma_l") c.loss.gamma_l = std::stod(val);
      else if (key == "gamma_b") c.loss.gamma_b = std::stod(val);
      else if (key == "si_lambda") c.loss.si_lambda = std::stod(val);
      else if (key == "si_alpha") c.loss.si_alpha = std::stod(val);
      else if (key == "lr") c.lr = std::stod(val);
      else if (key == "weight_decay") c.weight_decay = std::stod(val);
      else if (key == "final_lr_factor") c.final_lr_factor = std::stod(val);
      else if (key == "flat_fraction") c.flat_fraction = std::stod(val);
      else if (key == "batch") c.batch = std::stoll(val);
      else if (key == "steps") c.steps = std::stoll(val);
      else if (key == "epochs") c.epochs = std::stoll(val);
      else if (key == "resolution") c.resolution = std::stoll(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "training_mode") c.training_mode = training_mode_from_string(val);
      else throw std::invalid_argument("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad value for '" +
                                  key + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace localbins
