#include "dseg/projection.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dseg {

void CameraCalibration::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("CameraCalibration: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("CameraCalibration: image size must be positive");
  }
  Eigen::Matrix3d r = lidar_to_cam.topLeftCorner<3, 3>();
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(r.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument("CameraCalibration: extrinsic rotation must be orthonormal");
  }
  if ((lidar_to_cam.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() != 0.0) {
    throw std::invalid_argument("CameraCalibration: extrinsic bottom row must be [0 0 0 1]");
  }
}

Eigen::Vector3d transform_point(const Eigen::Vector3d& p, const Eigen::Matrix4d& rigid) {
  return rigid.topLeftCorner<3, 3>() * p + rigid.topRightCorner<3, 1>();
}

std::optional<ImagePoint> project_point(const Eigen::Vector3d& p_cam,
                                        const CameraCalibration& calib, double z_min) {
  double z = p_cam.z();
  if (!(z > z_min)) return std::nullopt;
  ImagePoint ip;
  ip.u = calib.fx * p_cam.x() / z + calib.cx;
  ip.v = calib.fy * p_cam.y() / z + calib.cy;
  ip.depth = z;
  long px = std::lround(ip.u);
  long py = std::lround(ip.v);
  if (px < 0 || px >= calib.width || py < 0 || py >= calib.height) return std::nullopt;
  ip.px = static_cast<int>(px);
  ip.py = static_cast<int>(py);
  return ip;
}

namespace {

// Range borrowed by an invalid cell: nearest valid cell in the same column
// (closest row, ties to the smaller row), else in the same row across the
// azimuth wrap (ties to the smaller column). Negative when the image holds
// no valid cell at all.
double interpolated_range(const RangeImage& ri, int r, int c) {
  const int rows = ri.rows();
  const int cols = ri.cols();
  for (int d = 1; d < rows; ++d) {
    if (r - d >= 0 && ri.validity(r - d, c)) return ri.ranges(r - d, c);
    if (r + d < rows && ri.validity(r + d, c)) return ri.ranges(r + d, c);
  }
  for (int d = 1; d <= cols / 2; ++d) {
    int a = ((c - d) % cols + cols) % cols;
    int b = (c + d) % cols;
    if (a > b) std::swap(a, b);  // equidistant ties go to the smaller column
    if (ri.validity(r, a)) return ri.ranges(r, a);
    if (b != a && ri.validity(r, b)) return ri.ranges(r, b);
  }
  return -1.0;
}

}  // namespace

SparseLabelImage project_segments(const RangeSegmentation& seg, const PointCloud& cloud,
                                  const LidarSpec& spec, const CameraCalibration& calib,
                                  const ProjectParams& params) {
  calib.validate();
  if (!seg.frame_id.empty() && !cloud.frame_id.empty() && seg.frame_id != cloud.frame_id) {
    throw std::invalid_argument("project_segments: frame id mismatch ('" + seg.frame_id +
                                "' vs '" + cloud.frame_id + "')");
  }
  RangeImage ri = build_range_image(cloud, spec);
  if (seg.labels.rows() != ri.ranges.rows() || seg.labels.cols() != ri.ranges.cols()) {
    throw std::invalid_argument("project_segments: segmentation shape does not match scan grid");
  }

  // Labeled returns and ignore markers keep separate z-buffers so the
  // ignore_competes switch can be applied per pixel afterwards.
  const int n_px = calib.width * calib.height;
  std::vector<double> label_depth(n_px, std::numeric_limits<double>::infinity());
  std::vector<int> label_val(n_px, -1);
  std::vector<double> ignore_depth(n_px, std::numeric_limits<double>::infinity());

  auto deposit = [&](const ImagePoint& ip, int label) {
    int at = ip.py * calib.width + ip.px;
    if (label == kIgnore) {
      if (ip.depth < ignore_depth[at]) ignore_depth[at] = ip.depth;
      return;
    }
    if (ip.depth < label_depth[at] ||
        (ip.depth == label_depth[at] && label < label_val[at])) {
      label_depth[at] = ip.depth;
      label_val[at] = label;
    }
  };

  for (int r = 0; r < ri.rows(); ++r) {
    for (int c = 0; c < ri.cols(); ++c) {
      if (ri.validity(r, c)) {
        const LidarPoint& p = cloud.points[ri.point_index(r, c)];
        auto ip = project_point(transform_point({p.x, p.y, p.z}, calib.lidar_to_cam), calib,
                                params.z_min);
        if (ip) deposit(*ip, seg.labels(r, c));
      } else if (params.project_invalid) {
        double range = interpolated_range(ri, r, c);
        if (range <= 0.0) continue;
        double phi = spec.elevation_angles[r];
        double theta = spec.azimuth_angle(c);
        Eigen::Vector3d p{range * std::cos(phi) * std::cos(theta),
                          range * std::cos(phi) * std::sin(theta), range * std::sin(phi)};
        auto ip = project_point(transform_point(p, calib.lidar_to_cam), calib, params.z_min);
        if (ip) deposit(*ip, kIgnore);
      }
    }
  }

  SparseLabelImage out;
  out.width = calib.width;
  out.height = calib.height;
  for (int v = 0; v < calib.height; ++v) {
    for (int u = 0; u < calib.width; ++u) {
      int at = v * calib.width + u;
      bool has_label = label_val[at] >= 0;
      bool has_ignore = std::isfinite(ignore_depth[at]);
      if (!has_label && !has_ignore) continue;
      SparseEntry e;
      e.u = u;
      e.v = v;
      if (has_label && (!has_ignore || !params.ignore_competes ||
                        label_depth[at] <= ignore_depth[at])) {
        e.label = label_val[at];
        e.depth = label_depth[at];
      } else {
        e.label = kIgnore;
        e.depth = ignore_depth[at];
      }
      out.entries.push_back(e);
    }
  }
  return out;
}

ImageSegmentMap densify(const SparseLabelImage& sparse, const DensifyParams& params) {
  if (sparse.width <= 0 || sparse.height <= 0) {
    throw std::invalid_argument("densify: sparse image has no extent");
  }
  const int w = sparse.width;
  const int h = sparse.height;
  GridI entry_label = GridI::Constant(h, w, -1);
  GridD entry_depth = GridD::Zero(h, w);
  for (const SparseEntry& e : sparse.entries) {
    if (e.u < 0 || e.u >= w || e.v < 0 || e.v >= h) {
      throw std::invalid_argument("densify: entry outside image bounds");
    }
    if (entry_label(e.v, e.u) >= 0) {
      throw std::invalid_argument("densify: duplicate entries at pixel (" + std::to_string(e.u) +
                                  ", " + std::to_string(e.v) + ")");
    }
    entry_label(e.v, e.u) = e.label;
    entry_depth(e.v, e.u) = e.depth;
  }

  ImageSegmentMap out;
  out.labels = GridI::Constant(h, w, kIgnore);
  const double max_r2 = params.max_radius * params.max_radius;
  const int q_cap = static_cast<int>(std::floor(params.max_radius));

  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < w; ++u) {
      long best_d2 = -1;
      double best_depth = 0;
      int best_label = kIgnore;
      auto consider = [&](int eu, int ev) {
        if (eu < 0 || eu >= w || ev < 0 || ev >= h) return;
        int lbl = entry_label(ev, eu);
        if (lbl < 0) return;
        long du = eu - u, dv = ev - v;
        long d2 = du * du + dv * dv;
        if (static_cast<double>(d2) > max_r2) return;
        double depth = entry_depth(ev, eu);
        if (best_d2 < 0 || d2 < best_d2 || (d2 == best_d2 && (depth < best_depth ||
            (depth == best_depth && lbl < best_label)))) {
          best_d2 = d2;
          best_depth = depth;
          best_label = lbl;
        }
      };
      // Square rings by Chebyshev radius q. A ring's nearest euclidean
      // distance is q, so the scan may stop once q*q passes the best match
      // (equality still scanned: a farther ring can hold an equal distance).
      for (int q = 0; q <= q_cap; ++q) {
        if (best_d2 >= 0 && static_cast<long>(q) * q > best_d2) break;
        if (q == 0) {
          consider(u, v);
          continue;
        }
        for (int du = -q; du <= q; ++du) {
          consider(u + du, v - q);
          consider(u + du, v + q);
        }
        for (int dv = -q + 1; dv <= q - 1; ++dv) {
          consider(u - q, v + dv);
          consider(u + q, v + dv);
        }
      }
      if (best_d2 >= 0) out.labels(v, u) = best_label;
    }
  });
  return out;
}

}  // namespace dseg
