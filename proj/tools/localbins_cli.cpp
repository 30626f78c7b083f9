// localbins command line: corpus generation, training, evaluation, the bin
// count sweep, the coverage study and the locality/density analysis.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "localbins/trainer.hpp"

namespace {

using namespace localbins;

struct CommonArgs {
  std::string config;
  std::string data;
  std::string out = "out";
  std::string checkpoint;
  std::int64_t seed = -1;  // -1 = keep the config's seed
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_data) {
  cmd->add_option("--config", a.config, "key=value config file");
  cmd->add_option("--seed", a.seed, "RNG seed (overrides the config)");
  cmd->add_option("--out", a.out, "output directory");
  auto* d = cmd->add_option("--data", a.data, "corpus file (LBDS)");
  if (needs_data) d->required();
  cmd->add_option("--checkpoint", a.checkpoint, "checkpoint file (LBK1)");
}

TrainConfig load_cfg(const CommonArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : parse_config_file(a.config);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();
  return cfg;
}

void print_metrics(const MetricsReport& r) {
  std::cout << "delta1 " << format_double(r.delta1) << "\n"
            << "delta2 " << format_double(r.delta2) << "\n"
            << "delta3 " << format_double(r.delta3) << "\n"
            << "rel " << format_double(r.rel) << "\n"
            << "rms " << format_double(r.rms) << "\n"
            << "log10 " << format_double(r.log10) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"LocalBins: per-pixel adaptive depth bins"};
  app.require_subcommand(1);

  CommonArgs a;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::int64_t n_scenes = 200;
  gen->add_option("--scenes", n_scenes, "number of scenes");
  add_common(gen, a, false);

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, a, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, a, true);

  auto* sweep = app.add_subcommand("sweep-bins", "train/eval over seed bin counts");
  std::vector<int> seeds_list = {2, 4, 8};
  sweep->add_option("--n-seed", seeds_list, "seed bin counts to sweep");
  std::string eval_data;
  sweep->add_option("--eval-data", eval_data, "held-out corpus (defaults to --data)");
  add_common(sweep, a, true);

  auto* cov = app.add_subcommand("coverage", "supervision coverage accounting");
  add_common(cov, a, false);

  auto* ana = app.add_subcommand("analyze", "bin locality and density profiles");
  std::int64_t n_locations = 64;
  ana->add_option("--locations", n_locations, "sampled locations per image");
  add_common(ana, a, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  TrainConfig cfg = load_cfg(a);

  if (gen->parsed()) {
    std::filesystem::create_directories(a.out);
    std::mt19937_64 rng(cfg.seed);
    std::vector<SceneSample> corpus;
    for (std::int64_t i = 0; i < n_scenes; ++i)
      corpus.push_back(generate_scene(rng, cfg.resolution, cfg.resolution, cfg.range()));
    const std::string path = a.data.empty() ? a.out + "/corpus.lbds" : a.data;
    write_corpus(corpus, path);
    std::cout << "wrote " << n_scenes << " scenes to " << path << "\n";
    return 0;
  }

  if (cov->parsed()) {
    std::filesystem::create_directories(a.out);
    std::ofstream csv(a.out + "/coverage.csv");
    csv << "mode,psci,px_covered,coverage_pct\n";
    std::cout << "mode,psci,px_covered,coverage_pct\n";
    for (const auto& row : coverage_study(cfg, 480, 640)) {
      const std::string line = row.mode + "," + std::to_string(row.report.psci) + "," +
                               std::to_string(row.report.px_covered) + "," +
                               format_double(row.report.coverage_pct);
      csv << line << "\n";
      std::cout << line << "\n";
    }
    return 0;
  }

  std::vector<SceneSample> corpus = read_corpus(a.data);

  if (train->parsed()) {
    Model m = build_model(cfg);
    if (!a.checkpoint.empty()) load_checkpoint(m.store, a.checkpoint);
    TrainResult r = train_model(m, corpus, a.out);
    std::cout << "trained " << r.losses.size() << " steps, final total "
              << format_double(r.losses.back().total) << "\n";
    return 0;
  }

  if (eval->parsed()) {
    Model m = build_model(cfg);
    if (a.checkpoint.empty()) {
      std::cerr << "eval: --checkpoint is required\n";
      return 1;
    }
    load_checkpoint(m.store, a.checkpoint);
    print_metrics(evaluate_model(m, corpus));
    return 0;
  }

  if (sweep->parsed()) {
    std::vector<SceneSample> eval_corpus =
        eval_data.empty() ? corpus : read_corpus(eval_data);
    auto rows = sweep_bins(cfg, seeds_list, corpus, eval_corpus, a.out);
    std::filesystem::create_directories(a.out);
    std::ofstream csv(a.out + "/sweep.csv");
    csv << "n_bins,rel\n";
    std::cout << "n_bins,rel\n";
    for (const auto& r : rows) {
      csv << r.n_bins << ',' << format_double(r.rel) << "\n";
      std::cout << r.n_bins << ',' << format_double(r.rel) << "\n";
    }
    return 0;
  }

  if (ana->parsed()) {
    Model m = build_model(cfg);
    if (a.checkpoint.empty()) {
      std::cerr << "analyze: --checkpoint is required\n";
      return 1;
    }
    load_checkpoint(m.store, a.checkpoint);
    analyze_model(m, corpus, n_locations, a.out);
    std::cout << "analysis written to " << a.out << "\n";
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const localbins::format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
