#pragma once

#include "dseg/core.hpp"
#include "dseg/rangeseg.hpp"

#include <optional>
#include <vector>

namespace dseg {

struct CameraCalibration {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  // Rigid transform taking sensor-frame points to camera frame
  // (x right, y down, z forward).
  Eigen::Matrix4d lidar_to_cam = Eigen::Matrix4d::Identity();

  void validate() const;
};

Eigen::Vector3d transform_point(const Eigen::Vector3d& p, const Eigen::Matrix4d& rigid);

struct ImagePoint {
  double u = 0, v = 0;  // continuous pixel coordinates
  int px = 0, py = 0;   // rounded pixel; guaranteed inside the image
  double depth = 0;     // camera-frame z
};

// Pinhole projection of a camera-frame point; empty when the point sits at or
// behind z_min or its rounded pixel falls outside the image.
std::optional<ImagePoint> project_point(const Eigen::Vector3d& p_cam,
                                        const CameraCalibration& calib, double z_min);

struct SparseEntry {
  int u = 0, v = 0;
  int label = kIgnore;
  double depth = 0;
};

struct SparseLabelImage {
  std::vector<SparseEntry> entries;  // at most one per pixel, row-major order
  int width = 0, height = 0;
};

struct ProjectParams {
  double z_min = 0.1;
  // Invalid scan cells borrow a range from the nearest valid cell and project
  // as kIgnore markers, so unknown geometry can blank out image regions.
  bool project_invalid = true;
  bool ignore_competes = true;  // markers may beat farther labeled points
};

// Projects every labeled return into the image with z-buffering; depth ties
// go to the smaller label. Errors if seg and cloud carry different frame ids.
SparseLabelImage project_segments(const RangeSegmentation& seg, const PointCloud& cloud,
                                  const LidarSpec& spec, const CameraCalibration& calib,
                                  const ProjectParams& params);

struct DensifyParams {
  double max_radius = 8.0;  // px; pixels farther from any entry stay kIgnore
};

struct ImageSegmentMap {
  GridI labels;  // height x width

  int width() const { return static_cast<int>(labels.cols()); }
  int height() const { return static_cast<int>(labels.rows()); }
};

// Nearest-entry fill: each pixel takes the label of its closest sparse entry
// within max_radius (ties by depth, then label). Entry pixels keep their own.
ImageSegmentMap densify(const SparseLabelImage& sparse, const DensifyParams& params);

}  // namespace dseg
