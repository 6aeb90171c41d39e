#include "dseg/rangeseg.hpp"

#include <cmath>
#include <queue>
#include <stdexcept>

namespace dseg {

void LidarSpec::validate() const {
  if (beams <= 0) throw std::invalid_argument("LidarSpec: beams must be positive");
  if (azimuth_steps <= 0) throw std::invalid_argument("LidarSpec: azimuth_steps must be positive");
  if (elevation_angles.size() != beams) {
    throw std::invalid_argument("LidarSpec: elevation_angles size must equal beams");
  }
  for (int r = 1; r < beams; ++r) {
    double d = elevation_angles[r] - elevation_angles[r - 1];
    double d0 = elevation_angles[1] - elevation_angles[0];
    if (d == 0.0 || (d > 0) != (d0 > 0)) {
      throw std::invalid_argument("LidarSpec: elevation_angles must be strictly monotone");
    }
  }
  if (!(azimuth_span > 0.0) || azimuth_span > 2.0 * std::numbers::pi + 1e-9) {
    throw std::invalid_argument("LidarSpec: azimuth_span must be in (0, 2*pi]");
  }
}

RangeImage build_range_image(const PointCloud& cloud, const LidarSpec& spec) {
  spec.validate();
  RangeImage ri;
  ri.frame_id = cloud.frame_id;
  ri.ranges = GridD::Zero(spec.beams, spec.azimuth_steps);
  ri.validity = GridB::Constant(spec.beams, spec.azimuth_steps, false);
  ri.point_index = GridI::Constant(spec.beams, spec.azimuth_steps, -1);
  GridB occupied = GridB::Constant(spec.beams, spec.azimuth_steps, false);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const LidarPoint& p = cloud.points[i];
    if (p.beam_row < 0 || p.beam_row >= spec.beams || p.azimuth_col < 0 ||
        p.azimuth_col >= spec.azimuth_steps) {
      throw std::invalid_argument("build_range_image: point " + std::to_string(i) +
                                  " has cell indices outside the scan grid");
    }
    if (occupied(p.beam_row, p.azimuth_col)) {
      throw std::invalid_argument("build_range_image: duplicate points in cell (" +
                                  std::to_string(p.beam_row) + ", " +
                                  std::to_string(p.azimuth_col) + ")");
    }
    occupied(p.beam_row, p.azimuth_col) = true;
    if (!p.valid) continue;
    double range = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (!(range > 0.0) || !std::isfinite(range)) {
      throw std::invalid_argument("build_range_image: point " + std::to_string(i) +
                                  " has non-positive or non-finite range");
    }
    ri.ranges(p.beam_row, p.azimuth_col) = range;
    ri.validity(p.beam_row, p.azimuth_col) = true;
    ri.point_index(p.beam_row, p.azimuth_col) = static_cast<int>(i);
  }
  return ri;
}

double neighbor_angle(double d1, double d2, double alpha) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) {
    throw std::invalid_argument("neighbor_angle: ranges must be positive");
  }
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("neighbor_angle: alpha must be positive");
  }
  double dmax = d1 > d2 ? d1 : d2;
  double dmin = d1 > d2 ? d2 : d1;
  return std::atan2(dmin * std::sin(alpha), dmax - dmin * std::cos(alpha));
}

Eigen::Vector3d cell_point(const RangeImage& ri, const LidarSpec& spec, int row, int col) {
  double range = ri.ranges(row, col);
  double phi = spec.elevation_angles[row];
  double theta = spec.azimuth_angle(col);
  return {range * std::cos(phi) * std::cos(theta), range * std::cos(phi) * std::sin(theta),
          range * std::sin(phi)};
}

GridB segment_ground(const RangeImage& ri, const LidarSpec& spec, const GroundParams& params) {
  spec.validate();
  const int rows = ri.rows();
  const int cols = ri.cols();
  if (rows != spec.beams || cols != spec.azimuth_steps) {
    throw std::invalid_argument("segment_ground: range image does not match spec grid");
  }
  GridB ground = GridB::Constant(rows, cols, false);

  // Cache the reconstructed points; the fill touches each cell repeatedly.
  std::vector<Eigen::Vector3d> pts(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (ri.validity(r, c)) pts[static_cast<std::size_t>(r) * cols + c] = cell_point(ri, spec, r, c);
    }
  }
  auto point_at = [&](int r, int c) -> const Eigen::Vector3d& {
    return pts[static_cast<std::size_t>(r) * cols + c];
  };
  auto incline_ok = [&](int r1, int c1, int r2, int c2) {
    Eigen::Vector3d d = point_at(r2, c2) - point_at(r1, c1);
    double horiz = std::hypot(d.x(), d.y());
    return std::atan2(std::abs(d.z()), horiz) <= params.max_incline;
  };

  bool ascending = spec.beams < 2 || spec.elevation_angles[1] > spec.elevation_angles[0];
  std::queue<std::pair<int, int>> frontier;
  // The lowest-elevation return of each column is assumed to sit on the
  // ground; everything else must be reached through low-incline steps.
  for (int c = 0; c < cols; ++c) {
    for (int k = 0; k < rows; ++k) {
      int r = ascending ? k : rows - 1 - k;
      if (ri.validity(r, c)) {
        ground(r, c) = true;
        frontier.emplace(r, c);
        break;
      }
    }
  }
  while (!frontier.empty()) {
    auto [r, c] = frontier.front();
    frontier.pop();
    const int nr[4] = {r - 1, r + 1, r, r};
    const int nc[4] = {c, c, (c + cols - 1) % cols, (c + 1) % cols};
    for (int k = 0; k < 4; ++k) {
      int r2 = nr[k], c2 = nc[k];
      if (r2 < 0 || r2 >= rows) continue;
      if (!ri.validity(r2, c2) || ground(r2, c2)) continue;
      if (incline_ok(r, c, r2, c2)) {
        ground(r2, c2) = true;
        frontier.emplace(r2, c2);
      }
    }
  }
  return ground;
}

RangeSegmentation segment_objects(const RangeImage& ri, const GridB& ground,
                                  const LidarSpec& spec, const SegParams& params) {
  spec.validate();
  const int rows = ri.rows();
  const int cols = ri.cols();
  if (ground.rows() != rows || ground.cols() != cols) {
    throw std::invalid_argument("segment_objects: ground mask shape mismatch");
  }
  RangeSegmentation seg;
  seg.frame_id = ri.frame_id;
  seg.labels = GridI::Constant(rows, cols, kIgnore);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (ri.validity(r, c) && ground(r, c)) seg.labels(r, c) = kGround;
    }
  }

  double h_alpha = spec.azimuth_step();
  auto merge = [&](int r1, int c1, int r2, int c2) {
    double alpha = (c1 == c2) ? std::abs(spec.elevation_angles[r2] - spec.elevation_angles[r1])
                              : h_alpha;
    return neighbor_angle(ri.ranges(r1, c1), ri.ranges(r2, c2), alpha) > params.theta;
  };

  GridB visited = GridB::Constant(rows, cols, false);
  std::vector<std::pair<int, int>> component;
  std::queue<std::pair<int, int>> frontier;
  int next_id = 1;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!ri.validity(r, c) || ground(r, c) || visited(r, c)) continue;
      component.clear();
      visited(r, c) = true;
      frontier.emplace(r, c);
      while (!frontier.empty()) {
        auto [cr, cc] = frontier.front();
        frontier.pop();
        component.emplace_back(cr, cc);
        const int nr[4] = {cr - 1, cr + 1, cr, cr};
        const int nc[4] = {cc, cc, (cc + cols - 1) % cols, (cc + 1) % cols};
        for (int k = 0; k < 4; ++k) {
          int r2 = nr[k], c2 = nc[k];
          if (r2 < 0 || r2 >= rows) continue;
          if (!ri.validity(r2, c2) || ground(r2, c2) || visited(r2, c2)) continue;
          if (merge(cr, cc, r2, c2)) {
            visited(r2, c2) = true;
            frontier.emplace(r2, c2);
          }
        }
      }
      if (static_cast<int>(component.size()) >= params.min_segment_size) {
        if (next_id > kMaxSegmentId) {
          throw std::runtime_error("segment_objects: segment id space exhausted");
        }
        for (auto [sr, sc] : component) seg.labels(sr, sc) = next_id;
        ++next_id;
      }
    }
  }
  seg.segment_count = next_id - 1;
  return seg;
}

}  // namespace dseg
