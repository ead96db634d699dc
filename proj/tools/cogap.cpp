// cogap: worst-case test image search for small image classifiers.
//
//   cogap dataset --out DIR --mode biased|balanced --n N --side S --seed U64
//   cogap train   --data DIR --out FILE.wcgf --epochs E --lr F --batch B --seed U64
//   cogap attack  --model FILE.wcgf --image FILE.ppm --spec FILE.json --out-dir DIR
//                 [--drop-threshold F] [--top-k K]
//   cogap report  --trace DIR --format text|csv

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>

#include <CLI11.hpp>

#include "cogap/dataset.hpp"
#include "cogap/model.hpp"
#include "cogap/report.hpp"

namespace fs = std::filesystem;

namespace {

int run_dataset(const fs::path& out, const std::string& mode, std::size_t n, std::size_t side, std::uint64_t seed) {
  const auto set = cogap::generate_dataset(n, cogap::parse_dataset_mode(mode), side, seed);
  cogap::write_dataset(set, out);
  std::cout << "wrote " << set.size() << " " << mode << " images to " << out.string() << "\n";
  return 0;
}

int run_train(const fs::path& data, const fs::path& out, const cogap::TrainConfig& cfg) {
  const auto set = cogap::read_dataset(data);
  if (set.size() == 0) throw std::runtime_error("dataset " + data.string() + " is empty");
  const std::size_t classes = *std::max_element(set.labels.begin(), set.labels.end()) + 1;
  auto names = cogap::glyph_class_names();
  if (classes != names.size()) names.clear();
  auto model = cogap::build_model(classes, set.images.front().width, cfg.seed, names);
  model = cogap::train(std::move(model), set, cfg);
  cogap::save_weights(model, out);
  std::cout << "train accuracy " << cogap::format_fixed6(cogap::accuracy(model, set)) << ", weights written to "
            << out.string() << "\n";
  return 0;
}

int attack_cmd_main(const fs::path& model, const fs::path& image, const fs::path& spec, const fs::path& out_dir,
               const cogap::AttackOptions& options) {
  const auto outcome = cogap::run_attack(model, image, spec, out_dir, options);
  std::cout << cogap::render_report(outcome.report, cogap::ReportFormat::text);
  std::cout << "search time: " << outcome.report.elapsed_seconds << " s over "
            << outcome.trace.iterations.size() - 1 << " iteration(s)\n";
  return 0;
}

int run_report(const fs::path& dir, const std::string& format) {
  const fs::path csv = dir / "report.csv";
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + csv.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::cout << cogap::render_report(cogap::parse_report_csv(text), cogap::parse_report_format(format));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Worst-case test image search for convolutional image classifiers"};
  app.require_subcommand(1);

  std::string out_dir, mode, data, out_file, model, image, spec, trace, format;
  std::size_t n = 0, side = 0, top_k = 0;
  std::uint64_t seed = 0;
  cogap::TrainConfig cfg;
  cogap::AttackOptions attack_options;

  auto* dataset_cmd = app.add_subcommand("dataset", "Generate a synthetic glyph dataset");
  dataset_cmd->add_option("--out", out_dir, "Output directory")->required();
  dataset_cmd->add_option("--mode", mode, "biased or balanced")->required()->check(CLI::IsMember({"biased", "balanced"}));
  dataset_cmd->add_option("--n", n, "Number of images (even)")->required();
  dataset_cmd->add_option("--side", side, "Image side in pixels")->required();
  dataset_cmd->add_option("--seed", seed, "Generator seed")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the reference CNN on a dataset directory");
  train_cmd->add_option("--data", data, "Dataset directory")->required();
  train_cmd->add_option("--out", out_file, "Output .wcgf file")->required();
  train_cmd->add_option("--epochs", cfg.epochs, "Training epochs")->required();
  train_cmd->add_option("--lr", cfg.learning_rate, "Learning rate")->required();
  train_cmd->add_option("--batch", cfg.batch_size, "Minibatch size")->required();
  train_cmd->add_option("--seed", cfg.seed, "Initialization and shuffle seed")->required();

  auto* attack_cmd = app.add_subcommand("attack", "Search for a worst-case image under a change spec");
  attack_cmd->add_option("--model", model, "Weights (.wcgf)")->required();
  attack_cmd->add_option("--image", image, "Input image (P6 PPM)")->required();
  attack_cmd->add_option("--spec", spec, "Change spec (JSON)")->required();
  attack_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  attack_cmd->add_option("--drop-threshold", attack_options.drop_threshold, "Original-class drop that counts as a gap");
  attack_cmd->add_option("--top-k", top_k, "Rows in the probability tables");

  auto* report_cmd = app.add_subcommand("report", "Render the report of a finished attack");
  report_cmd->add_option("--trace", trace, "Attack output directory")->required();
  report_cmd->add_option("--format", format, "text or csv")->required()->check(CLI::IsMember({"text", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dataset_cmd) return run_dataset(out_dir, mode, n, side, seed);
    if (*train_cmd) return run_train(data, out_file, cfg);
    if (*attack_cmd) {
      attack_options.top_k = top_k;
      return attack_cmd_main(model, image, spec, out_dir, attack_options);
    }
    if (*report_cmd) return run_report(trace, format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
