#pragma once

#include "dseg/core.hpp"
#include "dseg/image.hpp"
#include "dseg/projection.hpp"
#include "dseg/rangeseg.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dseg {

enum class ShapeKind { box, cylinder };

struct Primitive {
  ShapeKind shape = ShapeKind::box;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // box center / cylinder axis midpoint
  Eigen::Vector3d half_size = Eigen::Vector3d::Zero();  // box half extents; cylinder: x=radius, z=half height
  int class_id = 0;
  std::array<std::uint8_t, 3> base_color{0, 0, 0};
};

// World frame: x forward, y left, z up; ground is the z=0 plane (class 0).
struct Scene {
  std::vector<Primitive> primitives;
  std::uint64_t seed = 0;
  int class_count = 0;
};

struct SceneSpec {
  int n_objects = 8;
  int class_count = 6;  // ground plus up to 5 archetypes
  double min_distance = 4.0;   // placement band along x
  double max_distance = 12.0;
  double fov_ratio = 0.8;      // |y| <= ratio * x keeps objects in camera view
  double spacing = 0.5;        // required gap between footprints
  int max_retries = 500;
  // Draw odds per archetype (car, pedestrian, pole, wall, bush, sign).
  // Small objects are oversampled so every class contributes enough
  // segments for clustering; walls cover many pixels with few instances.
  std::array<double, 6> archetype_weights{2.0, 3.0, 3.0, 1.0, 2.0, 1.5};
};

Scene generate_scene(std::uint64_t seed, const SceneSpec& spec);

struct RayHit {
  double t = 0;         // distance along the unit direction
  int instance = 0;     // 0 = ground, i+1 = primitives[i]
  int class_id = 0;
};

// Nearest intersection of the ray with the ground plane and all primitives;
// empty when the ray escapes to the sky.
std::optional<RayHit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& dir);

// One return per (beam, azimuth) ray from (0, 0, sensor_height); missed rays
// become invalid cells. Point coordinates are in the sensor frame.
PointCloud simulate_lidar(const Scene& scene, const LidarSpec& spec, double sensor_height);

struct RenderResult {
  Rgb8Image image;
  GridI gt_class;     // {kIgnore (sky), 0..class_count-1}
  GridI gt_instance;  // {kIgnore (sky), 0 ground, 1.. primitives}
};

// Per-pixel ray casting. Hit pixels take the surface base color plus
// counter-seeded Gaussian noise (sigma = 8/255, clamped); sky pixels take a
// fixed color and IGNORE ground truth.
RenderResult render_camera(const Scene& scene, const CameraCalibration& calib,
                           const Eigen::Matrix4d& world_to_cam, std::uint64_t noise_seed);

// Sensor rig shared by all synthetic frames: a LiDAR at lidar_height above
// the origin and a forward-looking camera at camera_height.
struct SensorRig {
  LidarSpec lidar;
  double lidar_height = 1.9;
  double camera_height = 1.6;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 192, height = 128;

  CameraCalibration calibration() const;     // lidar frame -> camera frame
  Eigen::Matrix4d world_to_cam() const;
  static SensorRig standard(int width = 192, int height = 128);
};

struct SimFrame {
  PointCloud cloud;
  LidarSpec lidar;
  CameraCalibration calib;
  Rgb8Image image;
  GridI gt_class;
  GridI gt_instance;
  std::string frame_id;
  std::uint64_t seed = 0;
};

SimFrame simulate_frame(std::uint64_t seed, const SceneSpec& spec, const SensorRig& rig,
                        const std::string& frame_id);

}  // namespace dseg
