#include "dseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <stdexcept>

namespace dseg {

namespace {

struct Archetype {
  ShapeKind shape;
  Eigen::Vector3d half_size;
  double center_z;  // resting pose; most sit on the ground, the sign floats
  std::array<std::uint8_t, 3> color;
};

// class id = archetype index + 1; class 0 is the ground plane. Base colors
// sit at the centers of 32-wide intensity bins (32c + 16) so the sigma-8
// render noise stays inside one bin for ~95% of pixels, and every pair of
// classes differs in at least two channels' bins.
const Archetype kArchetypes[] = {
    {ShapeKind::box, {2.1, 0.9, 0.7}, 0.7, {48, 80, 208}},       // car
    {ShapeKind::cylinder, {0.35, 0.35, 0.875}, 0.875, {208, 48, 48}},  // pedestrian
    {ShapeKind::cylinder, {0.25, 0.25, 1.6}, 1.6, {208, 208, 208}},  // pole
    {ShapeKind::box, {0.15, 3.5, 1.25}, 1.25, {176, 144, 80}},   // wall
    {ShapeKind::box, {1.1, 1.1, 0.7}, 0.7, {48, 176, 48}},       // bush
    {ShapeKind::box, {0.5, 0.06, 0.4}, 2.2, {240, 208, 48}},     // sign
};
constexpr int kArchetypeCount = static_cast<int>(std::size(kArchetypes));

const std::array<std::uint8_t, 3> kGroundColor{80, 80, 80};
const std::array<std::uint8_t, 3> kSkyColor{80, 144, 240};

// Ground-plane footprint half extents; cylinders use their radius on both
// axes. Everything is axis-aligned, so rectangle separation is exact.
Eigen::Vector2d footprint_half(const Primitive& p) {
  if (p.shape == ShapeKind::cylinder) {
    return {p.half_size.x(), p.half_size.x()};
  }
  return {p.half_size.x(), p.half_size.y()};
}

bool footprints_clear(const Primitive& a, const Primitive& b, double spacing) {
  const Eigen::Vector2d ha = footprint_half(a), hb = footprint_half(b);
  return std::abs(a.center.x() - b.center.x()) >= ha.x() + hb.x() + spacing ||
         std::abs(a.center.y() - b.center.y()) >= ha.y() + hb.y() + spacing;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  if (spec.n_objects < 0) throw std::invalid_argument("generate_scene: n_objects negative");
  if (spec.class_count < 1 || spec.class_count > kArchetypeCount + 1) {
    throw std::invalid_argument("generate_scene: class_count outside 1.." +
                                std::to_string(kArchetypeCount + 1));
  }
  if (spec.n_objects > 0 && spec.class_count < 2) {
    throw std::invalid_argument("generate_scene: objects need at least one non-ground class");
  }
  if (!(spec.max_distance > spec.min_distance) || !(spec.min_distance > 0)) {
    throw std::invalid_argument("generate_scene: bad distance band");
  }

  Scene scene;
  scene.seed = seed;
  scene.class_count = spec.class_count;
  Rng rng(derive_seed(seed, "scene"));
  const int n_arch = spec.class_count - 1;
  double total_weight = 0;
  for (int a = 0; a < n_arch; ++a) {
    if (!(spec.archetype_weights[a] > 0)) {
      throw std::invalid_argument("generate_scene: archetype weights must be positive");
    }
    total_weight += spec.archetype_weights[a];
  }
  auto draw_archetype = [&]() -> const Archetype& {
    double u = rng.next_double() * total_weight;
    int pick = n_arch - 1;
    double cum = 0;
    for (int a = 0; a < n_arch; ++a) {
      cum += spec.archetype_weights[a];
      if (u < cum) {
        pick = a;
        break;
      }
    }
    return kArchetypes[pick];
  };
  for (int i = 0; i < spec.n_objects; ++i) {
    const Archetype& a = draw_archetype();
    double scale = 0.85 + 0.4 * rng.next_double();
    Primitive p;
    p.shape = a.shape;
    p.half_size = a.half_size * scale;
    p.class_id = static_cast<int>(&a - kArchetypes) + 1;
    p.base_color = a.color;
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
      double x = spec.min_distance + rng.next_double() * (spec.max_distance - spec.min_distance);
      double y = (2.0 * rng.next_double() - 1.0) * spec.fov_ratio * x;
      p.center = {x, y, a.center_z * scale};
      bool clear = true;
      for (const Primitive& other : scene.primitives) {
        if (!footprints_clear(p, other, spec.spacing)) {
          clear = false;
          break;
        }
      }
      if (clear) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw std::runtime_error("generate_scene: could not place object " + std::to_string(i) +
                               " after " + std::to_string(spec.max_retries) + " attempts");
    }
    scene.primitives.push_back(p);
  }
  return scene;
}

namespace {

constexpr double kRayEps = 1e-9;

// Slab method; returns the entry distance or nothing.
std::optional<double> ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                              const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  double tmin = kRayEps, tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t1 = (lo[a] - o[a]) / d[a];
    double t2 = (hi[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return std::nullopt;
  }
  return tmin;
}

std::optional<double> ray_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                   const Eigen::Vector3d& center, double radius,
                                   double half_height) {
  const double z0 = center.z() - half_height;
  const double z1 = center.z() + half_height;
  double best = std::numeric_limits<double>::infinity();
  // lateral surface
  double ox = o.x() - center.x(), oy = o.y() - center.y();
  double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-12) {
    double b = 2.0 * (ox * d.x() + oy * d.y());
    double c = ox * ox + oy * oy - radius * radius;
    double disc = b * b - 4.0 * a * c;
    if (disc >= 0) {
      double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t > kRayEps && t < best) {
          double z = o.z() + t * d.z();
          if (z >= z0 && z <= z1) best = t;
        }
      }
    }
  }
  // caps
  if (std::abs(d.z()) > 1e-12) {
    for (double zc : {z0, z1}) {
      double t = (zc - o.z()) / d.z();
      if (t > kRayEps && t < best) {
        double px = o.x() + t * d.x() - center.x();
        double py = o.y() + t * d.y() - center.y();
        if (px * px + py * py <= radius * radius) best = t;
      }
    }
  }
  if (std::isinf(best)) return std::nullopt;
  return best;
}

}  // namespace

std::optional<RayHit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& dir) {
  std::optional<RayHit> best;
  if (dir.z() < -1e-12 && origin.z() > 0) {
    double t = -origin.z() / dir.z();
    if (t > kRayEps) best = RayHit{t, 0, 0};
  }
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    std::optional<double> t;
    if (p.shape == ShapeKind::box) {
      t = ray_box(origin, dir, p.center - p.half_size, p.center + p.half_size);
    } else {
      t = ray_cylinder(origin, dir, p.center, p.half_size.x(), p.half_size.z());
    }
    if (t && (!best || *t < best->t)) {
      best = RayHit{*t, static_cast<int>(i) + 1, p.class_id};
    }
  }
  return best;
}

PointCloud simulate_lidar(const Scene& scene, const LidarSpec& spec, double sensor_height) {
  spec.validate();
  if (!(sensor_height > 0)) {
    throw std::invalid_argument("simulate_lidar: sensor height must be positive");
  }
  PointCloud cloud;
  cloud.points.resize(static_cast<std::size_t>(spec.beams) * spec.azimuth_steps);
  const Eigen::Vector3d origin(0, 0, sensor_height);
  parallel_for(static_cast<std::size_t>(spec.beams), [&](std::size_t row) {
    const int r = static_cast<int>(row);
    const double phi = spec.elevation_angles[r];
    for (int c = 0; c < spec.azimuth_steps; ++c) {
      const double theta = spec.azimuth_angle(c);
      const Eigen::Vector3d dir(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta),
                                std::sin(phi));
      LidarPoint& pt = cloud.points[row * spec.azimuth_steps + c];
      pt.beam_row = r;
      pt.azimuth_col = c;
      auto hit = cast_ray(scene, origin, dir);
      if (hit) {
        // sensor frame shares world axes, so the return is just t * dir
        pt.x = hit->t * dir.x();
        pt.y = hit->t * dir.y();
        pt.z = hit->t * dir.z();
        pt.valid = true;
      }
    }
  });
  return cloud;
}

RenderResult render_camera(const Scene& scene, const CameraCalibration& calib,
                           const Eigen::Matrix4d& world_to_cam, std::uint64_t noise_seed) {
  calib.validate();
  const int w = calib.width;
  const int h = calib.height;
  RenderResult out;
  out.image = Rgb8Image::zero(h, w);
  out.gt_class = GridI::Constant(h, w, kIgnore);
  out.gt_instance = GridI::Constant(h, w, kIgnore);

  const Eigen::Matrix3d r_wc = world_to_cam.topLeftCorner<3, 3>();
  const Eigen::Vector3d t_wc = world_to_cam.topRightCorner<3, 1>();
  const Eigen::Vector3d cam_center = -r_wc.transpose() * t_wc;

  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < w; ++u) {
      Eigen::Vector3d dir_cam((u - calib.cx) / calib.fx, (v - calib.cy) / calib.fy, 1.0);
      Eigen::Vector3d dir = (r_wc.transpose() * dir_cam).normalized();
      auto hit = cast_ray(scene, cam_center, dir);
      std::array<std::uint8_t, 3> base;
      if (hit) {
        base = hit->instance == 0 ? kGroundColor : scene.primitives[hit->instance - 1].base_color;
        out.gt_class(v, u) = hit->class_id;
        out.gt_instance(v, u) = hit->instance;
        const std::uint64_t px = static_cast<std::uint64_t>(v) * w + u;
        for (int ch = 0; ch < 3; ++ch) {
          double noisy = base[ch] + 8.0 * hash_gaussian(noise_seed, px * 3 + ch);
          int q = static_cast<int>(std::lround(noisy));
          base[ch] = static_cast<std::uint8_t>(std::clamp(q, 0, 255));
        }
      } else {
        base = kSkyColor;
      }
      out.image.r(v, u) = base[0];
      out.image.g(v, u) = base[1];
      out.image.b(v, u) = base[2];
    }
  });
  return out;
}

CameraCalibration SensorRig::calibration() const {
  CameraCalibration calib;
  calib.fx = fx;
  calib.fy = fy;
  calib.cx = cx;
  calib.cy = cy;
  calib.width = width;
  calib.height = height;
  Eigen::Matrix4d lidar_to_world = Eigen::Matrix4d::Identity();
  lidar_to_world(2, 3) = lidar_height;
  calib.lidar_to_cam = world_to_cam() * lidar_to_world;
  return calib;
}

Eigen::Matrix4d SensorRig::world_to_cam() const {
  // camera axes in world terms: x_cam = -y, y_cam = -z, z_cam = +x (forward)
  Eigen::Matrix3d r;
  r << 0, -1, 0,
       0, 0, -1,
       1, 0, 0;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = -r * Eigen::Vector3d(0, 0, camera_height);
  return m;
}

SensorRig SensorRig::standard(int width, int height) {
  SensorRig rig;
  rig.width = width;
  rig.height = height;
  rig.fx = width / 2.0;  // 90 degree horizontal field of view
  rig.fy = rig.fx;
  rig.cx = (width - 1) / 2.0;
  rig.cy = (height - 1) / 2.0;
  rig.lidar.beams = 32;
  rig.lidar.azimuth_steps = 360;
  rig.lidar.elevation_angles.resize(32);
  const double lo = -25.0 * std::numbers::pi / 180.0;
  const double hi = 5.0 * std::numbers::pi / 180.0;
  for (int r = 0; r < 32; ++r) {
    rig.lidar.elevation_angles[r] = lo + (hi - lo) * r / 31.0;
  }
  return rig;
}

SimFrame simulate_frame(std::uint64_t seed, const SceneSpec& spec, const SensorRig& rig,
                        const std::string& frame_id) {
  SimFrame frame;
  frame.seed = seed;
  frame.frame_id = frame_id;
  frame.lidar = rig.lidar;
  frame.calib = rig.calibration();
  Scene scene = generate_scene(seed, spec);
  frame.cloud = simulate_lidar(scene, rig.lidar, rig.lidar_height);
  frame.cloud.frame_id = frame_id;
  RenderResult rendered = render_camera(scene, frame.calib, rig.world_to_cam(), derive_seed(seed, "noise"));
  frame.image = std::move(rendered.image);
  frame.gt_class = std::move(rendered.gt_class);
  frame.gt_instance = std::move(rendered.gt_instance);
  return frame;
}

}  // namespace dseg
