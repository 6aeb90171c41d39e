#pragma once

#include "dseg/config.hpp"
#include "dseg/eval.hpp"
#include "dseg/rangeseg.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dseg {

struct FrameEntry {
  int id = 0;
  // Absolute after read_manifest; written relative to the manifest directory.
  std::filesystem::path cloud, calib, image, gt_class, gt_instance, meta;
};

struct FrameManifest {
  std::vector<FrameEntry> frames;
};

// Errors on duplicate ids, missing referenced files, or an empty frame list.
FrameManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const FrameManifest& manifest);

// Sensor-geometry sidecar each frame carries so the segmentation stages can
// rebuild the scan pattern without the generating config.
struct FrameMeta {
  LidarSpec lidar;
  std::string frame_id;
  std::uint64_t seed = 0;
};

void write_frame_meta(const std::filesystem::path& path, const FrameMeta& meta);
FrameMeta read_frame_meta(const std::filesystem::path& path);

void write_eval_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_eval_report(const std::filesystem::path& path);
void write_normalized_confusion_csv(const std::filesystem::path& path,
                                    const NormalizedConfusion& normalized);

// Stage names accepted by run_stage, in pipeline order.
const std::vector<std::string>& stage_names();

// Executes one stage against config.out_dir, reading the manifest named by
// the config (default <out_dir>/manifest.toml). Idempotent: re-running with
// unchanged inputs rewrites byte-identical artifacts.
void run_stage(const std::string& stage, const PipelineConfig& config);

struct PipelineReports {
  EvalReport teacher;
  EvalReport student;
};

// The eval stage as a callable: accumulates confusion over all frames for
// both models, writes the two report TOMLs and confusion CSVs.
PipelineReports run_eval(const PipelineConfig& config);

// All stages in order; returns the student report.
EvalReport run_pipeline(const PipelineConfig& config);

}  // namespace dseg
