#pragma once

#include "dseg/toml.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace dseg {

struct SynthConfig {
  int frames = 20;
  int n_objects = 8;
  int class_count = 6;
  int image_width = 192;
  int image_height = 128;
  bool operator==(const SynthConfig&) const = default;
};

struct SegmentConfig {
  double ground_max_incline = 0.0873;
  double theta = 0.1745;
  int min_segment_size = 20;
  bool operator==(const SegmentConfig&) const = default;
};

struct ProjectConfig {
  double z_min = 0.1;
  bool project_invalid = true;
  bool ignore_competes = true;
  double max_radius = 8.0;
  bool operator==(const ProjectConfig&) const = default;
};

struct ClusterConfig {
  int k = 30;
  int kmeans_max_iter = 300;
  double kmeans_tol = 1e-6;
  int min_crop_pixels = 9;
  bool cluster_ground = true;
  std::string features_file;  // optional externally computed features
  bool operator==(const ClusterConfig&) const = default;
};

struct TrainConfig {
  double lr = 2e-4;
  int batch = 32;
  int epochs = 20;
  int hidden = 32;
  bool augment = false;
  int crop = 512;
  bool operator==(const TrainConfig&) const = default;
};

struct RefineConfig {
  bool vote_ground = true;
  bool operator==(const RefineConfig&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string manifest;  // empty: <out_dir>/manifest.toml
  SynthConfig synth;
  SegmentConfig segment;
  ProjectConfig project;
  ClusterConfig cluster;
  TrainConfig teacher;
  TrainConfig student;
  RefineConfig refine;
  bool operator==(const PipelineConfig&) const = default;
};

// Strict: unknown tables or keys are errors.
PipelineConfig parse_config(const toml::Document& doc, std::string_view origin = "config");
PipelineConfig read_config(const std::filesystem::path& path);
toml::Document config_to_toml(const PipelineConfig& config);
void write_config(const std::filesystem::path& path, const PipelineConfig& config);

}  // namespace dseg
