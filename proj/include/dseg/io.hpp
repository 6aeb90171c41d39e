#pragma once

#include "dseg/core.hpp"
#include "dseg/distill.hpp"
#include "dseg/image.hpp"
#include "dseg/projection.hpp"
#include "dseg/pseudolabel.hpp"
#include "dseg/rangeseg.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// All writers are deterministic: fixed field order, shortest round-trip float
// formatting, binary image payloads, no timestamps.

namespace dseg {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). Used for label
// grids (IGNORE=65535, GROUND=65534) and ground-truth maps.
void write_pgm16(const std::filesystem::path& path, const GridI& grid);
GridI read_pgm16(const std::filesystem::path& path);

// Range images quantized to centimeters for inspection; 0 = invalid cell.
void write_range_pgm(const std::filesystem::path& path, const RangeImage& ri);

// 8-bit binary PPM (P6).
void write_ppm(const std::filesystem::path& path, const Rgb8Image& image);
Rgb8Image read_ppm(const std::filesystem::path& path);

// Point cloud CSV: header x,y,z,beam_row,azimuth_col,valid; invalid rows
// carry zero coordinates.
void write_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud_csv(const std::filesystem::path& path);

// Camera calibration TOML: [intrinsics] fx,fy,cx,cy,width,height and
// [extrinsics] matrix = [16 row-major floats].
void write_calib_toml(const std::filesystem::path& path, const CameraCalibration& calib);
CameraCalibration read_calib_toml(const std::filesystem::path& path);

// Segment features CSV: header frame_id,segment_id,f_0..f_{D-1}.
void write_features_csv(const std::filesystem::path& path,
                        const std::vector<SegmentFeature>& features);
std::vector<SegmentFeature> read_features_csv(const std::filesystem::path& path);

// Cluster model CSV: header k,D,seed,inertia; one value row; k centroid rows.
void write_cluster_csv(const std::filesystem::path& path, const ClusterModel& model);
ClusterModel read_cluster_csv(const std::filesystem::path& path);

// Classifier binary: magic DSEGCLS1, little-endian u32 (F, hidden, k), then
// little-endian f64 in order w1 row-major, b1, w2 row-major, b2.
void write_classifier(const std::filesystem::path& path, const ClassifierParams& params);
ClassifierParams read_classifier(const std::filesystem::path& path);

// Training log CSV: header step,loss,lr.
void write_train_log(const std::filesystem::path& path, const std::vector<TrainStep>& trajectory);

// Whole-file text write/read with binary-mode newlines.
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dseg
