#include "dseg/config.hpp"
#include "dseg/core.hpp"
#include "dseg/pipeline.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <iostream>
#include <string>

namespace {

struct Options {
  std::string config_path;
  std::string manifest;
  std::string out_dir;
  std::string seed;  // empty = keep the config's seed
};

dseg::PipelineConfig load_config(const Options& opt) {
  dseg::PipelineConfig config = dseg::read_config(opt.config_path);
  if (!opt.out_dir.empty()) config.out_dir = opt.out_dir;
  if (!opt.manifest.empty()) config.manifest = opt.manifest;
  if (!opt.seed.empty()) {
    std::uint64_t seed = 0;
    const char* end = opt.seed.data() + opt.seed.size();
    auto [p, ec] = std::from_chars(opt.seed.data(), end, seed);
    if (ec != std::errc() || p != end) {
      throw std::invalid_argument("--seed expects a non-negative integer, got '" + opt.seed + "'");
    }
    config.seed = seed;
  }
  return config;
}

void add_common_options(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config_path, "Pipeline config TOML")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--manifest", opt.manifest, "Frame manifest (default <out>/manifest.toml)");
  sub->add_option("--out", opt.out_dir, "Artifact directory (default from config)");
  sub->add_option("--seed", opt.seed, "Override the config root seed");
}

const char* stage_help(const std::string& stage) {
  if (stage == "synth") return "Generate synthetic frames and the manifest";
  if (stage == "segment") return "Range-image ground removal and object segmentation";
  if (stage == "project") return "Project segment labels into the camera and densify";
  if (stage == "cluster") return "Describe, cluster, and pseudo-label segments";
  if (stage == "train-teacher") return "Fit the teacher classifier on pseudo-labels";
  if (stage == "refine") return "Majority-vote teacher predictions over segments";
  if (stage == "train-student") return "Fit the student classifier on refined maps";
  if (stage == "eval") return "Write Hungarian-matched evaluation reports";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised cross-modal segmentation pipeline"};
  app.require_subcommand(1);

  Options opt;
  std::string selected;
  for (const std::string& stage : dseg::stage_names()) {
    CLI::App* sub = app.add_subcommand(stage, stage_help(stage));
    add_common_options(sub, opt);
    sub->callback([&selected, stage] { selected = stage; });
  }
  CLI::App* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  add_common_options(pipeline, opt);
  pipeline->callback([&selected] { selected = "pipeline"; });

  CLI11_PARSE(app, argc, argv);

  try {
    dseg::PipelineConfig config = load_config(opt);
    if (selected == "pipeline") {
      dseg::EvalReport report = dseg::run_pipeline(config);
      std::cout << "student mIoU " << dseg::format_double(report.miou) << " pixel accuracy "
                << dseg::format_double(report.pixel_accuracy) << "\n";
    } else {
      dseg::run_stage(selected, config);
    }
  } catch (const std::exception& e) {
    std::cerr << "dseg: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
