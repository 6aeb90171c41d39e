#pragma once

#include "dseg/core.hpp"

#include <numbers>
#include <string>
#include <vector>

namespace dseg {

struct LidarPoint {
  double x = 0, y = 0, z = 0;  // sensor frame: x forward, y left, z up
  int beam_row = 0;
  int azimuth_col = 0;
  bool valid = false;  // false = no return; xyz meaningless
};

struct PointCloud {
  std::vector<LidarPoint> points;
  std::string frame_id;
};

// Scan-pattern geometry. Row r looks along elevation_angles[r]; column c is
// centered at azimuth_origin + (c + 0.5) * azimuth_span / azimuth_steps.
struct LidarSpec {
  int beams = 0;
  int azimuth_steps = 0;
  Eigen::VectorXd elevation_angles;  // radians, strictly monotone over rows
  double azimuth_origin = -std::numbers::pi;
  double azimuth_span = 2.0 * std::numbers::pi;

  double azimuth_angle(int col) const {
    return azimuth_origin + (col + 0.5) * azimuth_span / azimuth_steps;
  }
  double azimuth_step() const { return azimuth_span / azimuth_steps; }
  void validate() const;
};

struct RangeImage {
  GridD ranges;      // beams x azimuth_steps; 0 where invalid
  GridB validity;
  GridI point_index;  // back-reference into the source cloud; -1 where invalid
  std::string frame_id;

  int rows() const { return static_cast<int>(ranges.rows()); }
  int cols() const { return static_cast<int>(ranges.cols()); }
};

// Errors if a point's cell indices fall outside the spec grid or two points
// land in the same cell. Range is the full euclidean distance to the sensor.
RangeImage build_range_image(const PointCloud& cloud, const LidarSpec& spec);

// Angle subtended at the farther endpoint of two neighboring returns, looking
// at the segment between them. d1, d2 in any order; both must be positive,
// as must the beam separation alpha.
double neighbor_angle(double d1, double d2, double alpha);

struct GroundParams {
  double max_incline = 0.0873;  // rad, circa 5 degrees
};

// Flood fill from the lowest-elevation valid return of every column; a
// neighbor joins when the line between the two reconstructed points stays
// within max_incline of horizontal.
GridB segment_ground(const RangeImage& ri, const LidarSpec& spec, const GroundParams& params);

struct SegParams {
  double theta = 0.1745;  // rad merge threshold, circa 10 degrees
  int min_segment_size = 20;
};

struct RangeSegmentation {
  GridI labels;  // kIgnore, kGround, or segment id in [1, segment_count]
  int segment_count = 0;
  std::string frame_id;
};

// Angle-criterion flood fill over non-ground returns. 4-neighborhood with
// azimuth wrap-around; undersized components fall back to kIgnore. Ids are
// dense, assigned in row-major order of each component's first cell.
RangeSegmentation segment_objects(const RangeImage& ri, const GridB& ground,
                                  const LidarSpec& spec, const SegParams& params);

// Reconstructs the 3D point a grid cell represents from its range and the
// cell's beam/azimuth direction.
Eigen::Vector3d cell_point(const RangeImage& ri, const LidarSpec& spec, int row, int col);

}  // namespace dseg
