#include "uwe/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Two-colour-space underwater image enhancement"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model");
  std::string config_path, data_root, out_dir;
  train->add_option("--config", config_path, "Flat key = value config file (defaults if omitted)");
  train->add_option("--data", data_root, "Dataset root with raw/ and reference/")->required();
  train->add_option("--out", out_dir, "Run directory")->required();

  auto* enhance = app.add_subcommand("enhance", "Enhance an image or a directory of images");
  std::string ckpt, in_path, out_path, expect_config;
  uwe::EnhanceOptions eopts;
  enhance->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  enhance->add_option("--in", in_path, "Input image or directory")->required();
  enhance->add_option("--out", out_path, "Output image or directory")->required();
  enhance->add_option("--config", expect_config, "Config the checkpoint must match");
  enhance->add_flag("--dump-intermediates", eopts.dump_intermediates,
                    "Also write branch outputs, attention halves and curves");
  enhance->add_flag("--dump-curves", eopts.dump_curves, "Also write the predicted curve knots");

  auto* evaluate = app.add_subcommand("evaluate", "Score a directory of predictions");
  std::string pred_dir, gt_dir, report_path, json_path;
  evaluate->add_option("--pred", pred_dir, "Predicted images")->required();
  evaluate->add_option("--gt", gt_dir, "Reference images (enables MSE/PSNR/SSIM)");
  evaluate->add_option("--report", report_path, "CSV report path")->required();
  evaluate->add_option("--json", json_path, "Optional JSON report path");

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  std::string module = "all";
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--module", module, "colorspace, curves, network, losses or all")
      ->check(CLI::IsMember({"colorspace", "curves", "network", "losses", "all"}));
  gradcheck->add_option("--seed", gc_seed, "Sampling seed");

  auto* degrade = app.add_subcommand("degrade", "Synthesise degraded copies of clean images");
  std::string preset_name, presets_file, deg_in, deg_out;
  std::uint64_t deg_seed = 0;
  degrade->add_option("--preset", preset_name, "bluish, greenish, yellowish, lowlight or a preset-file entry")
      ->required();
  degrade->add_option("--presets", presets_file, "INI-style preset file");
  degrade->add_option("--in", deg_in, "Clean image directory")->required();
  degrade->add_option("--out", deg_out, "Output directory")->required();
  degrade->add_option("--seed", deg_seed, "Seed");

  auto* toy = app.add_subcommand("toy", "Write a procedural toy dataset with train/ and test/ splits");
  std::string toy_root;
  int toy_train = 8, toy_test = 8, toy_size = 32;
  std::uint64_t toy_seed = 1;
  toy->add_option("--out", toy_root, "Dataset root")->required();
  toy->add_option("--train", toy_train, "Training pairs");
  toy->add_option("--test", toy_test, "Held-out pairs");
  toy->add_option("--size", toy_size, "Image side length");
  toy->add_option("--seed", toy_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const uwe::TrainConfig cfg = config_path.empty() ? uwe::TrainConfig{} : uwe::TrainConfig::load(config_path);
      const auto m = uwe::train(cfg, data_root, out_dir);
      std::cout << "trained " << m.total_steps << " steps on " << m.pairs << " pairs; final checkpoint "
                << m.final_checkpoint << "\nreport " << m.report << "\n";
      if (!m.metrics.aggregate.error.empty()) std::cout << "report: " << m.metrics.aggregate.error << "\n";
    } else if (*enhance) {
      std::optional<uwe::NetworkConfig> expected;
      if (!expect_config.empty()) expected = uwe::TrainConfig::load(expect_config).network();
      uwe::enhance(ckpt, in_path, out_path, eopts, expected ? &*expected : nullptr);
    } else if (*evaluate) {
      std::optional<fs::path> gt;
      if (!gt_dir.empty()) gt = gt_dir;
      const auto report = uwe::evaluate_dir(pred_dir, gt);
      report.write_csv(report_path);
      if (!json_path.empty()) report.write_json(json_path);
      std::cout << report.aggregated_rows << " images scored; report " << report_path << "\n";
    } else if (*gradcheck) {
      bool ok = true;
      for (const auto& r : uwe::gradcheck(module, gc_seed)) {
        std::cout << r.summary() << "\n";
        ok = ok && r.passed();
      }
      return ok ? 0 : 1;
    } else if (*degrade) {
      const auto table = presets_file.empty() ? uwe::builtin_presets() : uwe::load_presets(presets_file);
      const auto n = uwe::degrade_dir(uwe::preset(preset_name, table), deg_in, deg_out, deg_seed);
      std::cout << "degraded " << n << " images into " << deg_out << "\n";
    } else if (*toy) {
      uwe::write_toy_splits(toy_root, toy_train, toy_test, toy_size, toy_seed);
      std::cout << "wrote toy dataset to " << toy_root << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
