#include <doctest.h>

#include "dseg/core.hpp"
#include "dseg/rangeseg.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

using namespace dseg;

namespace {

LidarSpec full_circle_spec(int beams, int cols, double elev_lo, double elev_hi) {
  LidarSpec spec;
  spec.beams = beams;
  spec.azimuth_steps = cols;
  spec.elevation_angles = Eigen::VectorXd::LinSpaced(beams, elev_lo, elev_hi);
  return spec;
}

// Sensor-frame point on the ray (beam r, column c) at the given range.
LidarPoint ray_point(const LidarSpec& spec, int r, int c, double range) {
  double phi = spec.elevation_angles[r];
  double theta = spec.azimuth_angle(c);
  LidarPoint p;
  p.x = range * std::cos(phi) * std::cos(theta);
  p.y = range * std::cos(phi) * std::sin(theta);
  p.z = range * std::sin(phi);
  p.beam_row = r;
  p.azimuth_col = c;
  p.valid = true;
  return p;
}

// Union-find over flat cell indices.
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Independent reference labeling: connected components over the edge set
// {(p,q) neighbors: neighbor angle > theta}, then the size filter. Returns a
// grid of kIgnore/kGround/component-representative values (not dense ids).
GridI brute_force_objects(const RangeImage& ri, const GridB& ground, const LidarSpec& spec,
                          const SegParams& params) {
  const int rows = ri.rows();
  const int cols = ri.cols();
  auto object = [&](int r, int c) { return ri.validity(r, c) && !ground(r, c); };
  auto beta = [&](double d1, double d2, double alpha) {
    double dmax = std::max(d1, d2);
    double dmin = std::min(d1, d2);
    return std::atan2(dmin * std::sin(alpha), dmax - dmin * std::cos(alpha));
  };
  DisjointSet ds(rows * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!object(r, c)) continue;
      if (r + 1 < rows && object(r + 1, c)) {
        double alpha = std::abs(spec.elevation_angles[r + 1] - spec.elevation_angles[r]);
        if (beta(ri.ranges(r, c), ri.ranges(r + 1, c), alpha) > params.theta) {
          ds.unite(r * cols + c, (r + 1) * cols + c);
        }
      }
      int c2 = (c + 1) % cols;
      if (c2 != c && object(r, c2)) {
        if (beta(ri.ranges(r, c), ri.ranges(r, c2), spec.azimuth_step()) > params.theta) {
          ds.unite(r * cols + c, r * cols + c2);
        }
      }
    }
  }
  std::map<int, int> component_size;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (object(r, c)) component_size[ds.find(r * cols + c)] += 1;
    }
  }
  GridI out = GridI::Constant(rows, cols, kIgnore);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (ri.validity(r, c) && ground(r, c)) {
        out(r, c) = kGround;
      } else if (object(r, c)) {
        int root = ds.find(r * cols + c);
        out(r, c) = component_size[root] >= params.min_segment_size ? root : kIgnore;
      }
    }
  }
  return out;
}

// Checks that two labelings define the same partition (bijection between the
// id sets), treating kIgnore and kGround as fixed labels.
void check_same_partition(const GridI& got, const GridI& expected) {
  REQUIRE(got.rows() == expected.rows());
  REQUIRE(got.cols() == expected.cols());
  std::map<int, int> fwd, bwd;
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    int g = got.data()[i];
    int e = expected.data()[i];
    if (g == kIgnore || g == kGround || e == kIgnore || e == kGround) {
      CHECK(g == e);
      continue;
    }
    auto [itf, newf] = fwd.emplace(g, e);
    CHECK(itf->second == e);
    auto [itb, newb] = bwd.emplace(e, g);
    CHECK(itb->second == g);
  }
}

RangeImage random_range_image(Rng& rng, int rows, int cols) {
  RangeImage ri;
  ri.ranges = GridD::Zero(rows, cols);
  ri.validity = GridB::Constant(rows, cols, false);
  ri.point_index = GridI::Constant(rows, cols, -1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (rng.next_below(10) < 7) {
        ri.validity(r, c) = true;
        ri.ranges(r, c) = 1.0 + rng.next_double() * 29.0;
      }
    }
  }
  return ri;
}

}  // namespace

TEST_CASE("neighbor_angle equals the direct trig formula") {
  Rng rng(41);
  for (int i = 0; i < 1000; ++i) {
    double d1 = 0.5 + rng.next_double() * 40.0;
    double d2 = 0.5 + rng.next_double() * 40.0;
    double alpha = 1e-4 + rng.next_double() * 0.5;
    double dmax = std::max(d1, d2);
    double dmin = std::min(d1, d2);
    double expected = std::atan2(dmin * std::sin(alpha), dmax - dmin * std::cos(alpha));
    CHECK(std::abs(neighbor_angle(d1, d2, alpha) - expected) <= 1e-12);
  }
}

TEST_CASE("neighbor_angle worked values") {
  // Equal ranges: the triangle is isosceles, so beta = (pi - alpha) / 2.
  double alpha = 0.0175;
  CHECK(neighbor_angle(2.0, 2.0, alpha) ==
        doctest::Approx((std::numbers::pi - alpha) / 2).epsilon(1e-12));
  CHECK(neighbor_angle(10.0, 8.0, 0.00349) == doctest::Approx(0.01396).epsilon(1e-3));
  // alpha -> 0+ limit of the equal-range case approaches pi/2.
  CHECK(std::abs(neighbor_angle(5.0, 5.0, 1e-9) - std::numbers::pi / 2) < 1e-8);
}

TEST_CASE("neighbor_angle is symmetric and rejects bad input") {
  Rng rng(42);
  for (int i = 0; i < 100; ++i) {
    double a = 0.5 + rng.next_double() * 20.0;
    double b = 0.5 + rng.next_double() * 20.0;
    double alpha = 1e-3 + rng.next_double() * 0.3;
    CHECK(neighbor_angle(a, b, alpha) == neighbor_angle(b, a, alpha));
  }
  CHECK_THROWS_AS(neighbor_angle(0.0, 1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(neighbor_angle(1.0, -1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(neighbor_angle(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("build_range_image basics") {
  LidarSpec spec = full_circle_spec(4, 8, -0.4, -0.1);

  PointCloud empty;
  RangeImage ri = build_range_image(empty, spec);
  CHECK(!ri.validity.any());

  PointCloud one;
  LidarPoint p;
  p.x = 3;
  p.y = 4;
  p.z = 0;
  p.beam_row = 2;
  p.azimuth_col = 5;
  p.valid = true;
  one.points.push_back(p);
  ri = build_range_image(one, spec);
  CHECK(ri.ranges(2, 5) == 5.0);
  CHECK(ri.point_index(2, 5) == 0);
  CHECK(ri.validity.count() == 1);

  PointCloud dup = one;
  LidarPoint q = p;
  q.valid = false;  // an invalid record still occupies its cell
  dup.points.push_back(q);
  CHECK_THROWS_AS(build_range_image(dup, spec), std::invalid_argument);

  PointCloud oob = one;
  oob.points[0].beam_row = 4;
  CHECK_THROWS_AS(build_range_image(oob, spec), std::invalid_argument);
}

TEST_CASE("flat ground scan: closed-form ranges, all cells ground") {
  const double h = 1.5;
  LidarSpec spec = full_circle_spec(8, 24, -0.45, -0.1);
  PointCloud cloud;
  for (int r = 0; r < spec.beams; ++r) {
    double phi = spec.elevation_angles[r];
    double range = h / std::sin(-phi);
    for (int c = 0; c < spec.azimuth_steps; ++c) {
      cloud.points.push_back(ray_point(spec, r, c, range));
    }
  }
  RangeImage ri = build_range_image(cloud, spec);
  for (int r = 0; r < spec.beams; ++r) {
    double expected = h / std::sin(-spec.elevation_angles[r]);
    for (int c = 0; c < spec.azimuth_steps; ++c) {
      REQUIRE(ri.validity(r, c));
      CHECK(ri.ranges(r, c) == doctest::Approx(expected).epsilon(1e-12));
      // cell_point reconstructs the original sensor-frame point.
      Eigen::Vector3d rec = cell_point(ri, spec, r, c);
      CHECK(std::abs(rec.x() - cloud.points[r * spec.azimuth_steps + c].x) < 1e-9);
      CHECK(std::abs(rec.y() - cloud.points[r * spec.azimuth_steps + c].y) < 1e-9);
      CHECK(std::abs(rec.z() + h) < 1e-9);
    }
  }
  GridB ground = segment_ground(ri, spec, {});
  CHECK(ground.count() == spec.beams * spec.azimuth_steps);
}

TEST_CASE("vertical wall cells are not ground") {
  // Flat plane everywhere, plus a wall at x = 7.5 m filling an azimuth window;
  // beams steeper than about -11.5 degrees still hit the ground first.
  const double h = 1.5;
  const double wall_x = 7.5;
  LidarSpec spec;
  spec.beams = 8;
  spec.azimuth_steps = 36;
  spec.elevation_angles = Eigen::VectorXd(8);
  spec.elevation_angles << -0.4363, -0.3840, -0.3316, -0.2793, -0.2269, -0.1571, -0.1222,
      -0.0873;  // -25..-16, -13, -9, -7, -5 degrees
  PointCloud cloud;
  GridB is_wall = GridB::Constant(8, 36, false);
  for (int r = 0; r < spec.beams; ++r) {
    double phi = spec.elevation_angles[r];
    double ground_range = h / std::sin(-phi);
    for (int c = 0; c < spec.azimuth_steps; ++c) {
      double theta = spec.azimuth_angle(c);
      bool window = std::abs(theta) <= 0.26;  // about 15 degrees
      double wall_t = window ? wall_x / (std::cos(phi) * std::cos(theta)) : 1e9;
      if (window && wall_t < ground_range) {
        cloud.points.push_back(ray_point(spec, r, c, wall_t));
        is_wall(r, c) = true;
      } else {
        cloud.points.push_back(ray_point(spec, r, c, ground_range));
      }
    }
  }
  RangeImage ri = build_range_image(cloud, spec);
  // Tighter incline than the default: the shallowest beam grazes the ground
  // at 17 m, where the hop onto the wall top subtends just under 5 degrees.
  GroundParams params{0.0524};
  GridB ground = segment_ground(ri, spec, params);
  int wall_cells = 0;
  for (int r = 0; r < spec.beams; ++r) {
    for (int c = 0; c < spec.azimuth_steps; ++c) {
      CHECK(ground(r, c) == !is_wall(r, c));
      wall_cells += is_wall(r, c) ? 1 : 0;
    }
  }
  CHECK(wall_cells > 0);

  // The wall forms one object segment.
  RangeSegmentation seg = segment_objects(ri, ground, spec, {0.1745, 1});
  CHECK(seg.segment_count == 1);
  for (int r = 0; r < spec.beams; ++r) {
    for (int c = 0; c < spec.azimuth_steps; ++c) {
      CHECK(seg.labels(r, c) == (is_wall(r, c) ? 1 : kGround));
    }
  }
}

TEST_CASE("all-invalid range image yields no ground and no segments") {
  LidarSpec spec = full_circle_spec(4, 6, -0.4, -0.1);
  RangeImage ri = build_range_image(PointCloud{}, spec);
  GridB ground = segment_ground(ri, spec, {});
  CHECK(!ground.any());
  RangeSegmentation seg = segment_objects(ri, ground, spec, {});
  CHECK(seg.segment_count == 0);
  CHECK((seg.labels == kIgnore).all());
}

TEST_CASE("two separated clusters become two segments") {
  LidarSpec spec = full_circle_spec(4, 16, -0.4, -0.1);
  RangeImage ri;
  ri.ranges = GridD::Zero(4, 16);
  ri.validity = GridB::Constant(4, 16, false);
  ri.point_index = GridI::Constant(4, 16, -1);
  for (int r = 1; r <= 2; ++r) {
    for (int c : {2, 3, 4, 9, 10, 11}) {
      ri.validity(r, c) = true;
      ri.ranges(r, c) = 5.0;  // equal ranges merge at any reasonable theta
    }
  }
  GridB ground = GridB::Constant(4, 16, false);
  RangeSegmentation seg = segment_objects(ri, ground, spec, {0.1745, 1});
  CHECK(seg.segment_count == 2);
  // Ids are assigned in row-major discovery order.
  CHECK(seg.labels(1, 2) == 1);
  CHECK(seg.labels(1, 9) == 2);
  CHECK(seg.labels(2, 4) == 1);
  CHECK(seg.labels(2, 11) == 2);
}

TEST_CASE("segment size filter drops undersized components") {
  LidarSpec spec = full_circle_spec(3, 8, -0.3, -0.1);
  RangeImage ri;
  ri.ranges = GridD::Zero(3, 8);
  ri.validity = GridB::Constant(3, 8, false);
  ri.point_index = GridI::Constant(3, 8, -1);
  ri.validity(1, 4) = true;
  ri.ranges(1, 4) = 3.0;
  GridB ground = GridB::Constant(3, 8, false);

  RangeSegmentation keep = segment_objects(ri, ground, spec, {0.1745, 1});
  CHECK(keep.segment_count == 1);
  CHECK(keep.labels(1, 4) == 1);

  RangeSegmentation drop = segment_objects(ri, ground, spec, {0.1745, 2});
  CHECK(drop.segment_count == 0);
  CHECK(drop.labels(1, 4) == kIgnore);
}

TEST_CASE("a component spanning the azimuth seam stays connected") {
  LidarSpec spec = full_circle_spec(3, 12, -0.3, -0.1);
  RangeImage ri;
  ri.ranges = GridD::Zero(3, 12);
  ri.validity = GridB::Constant(3, 12, false);
  ri.point_index = GridI::Constant(3, 12, -1);
  for (int c : {10, 11, 0, 1}) {
    ri.validity(1, c) = true;
    ri.ranges(1, c) = 4.0;
  }
  GridB ground = GridB::Constant(3, 12, false);
  RangeSegmentation seg = segment_objects(ri, ground, spec, {0.1745, 1});
  CHECK(seg.segment_count == 1);
  for (int c : {10, 11, 0, 1}) CHECK(seg.labels(1, c) == 1);
}

TEST_CASE("segment_objects equals brute-force connected components on random inputs") {
  Rng rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    int rows = 2 + static_cast<int>(rng.next_below(15));   // <= 16
    int cols = 2 + static_cast<int>(rng.next_below(31));   // <= 32
    LidarSpec spec = full_circle_spec(rows, cols, -0.5, -0.5 + 0.03 * (rows - 1));
    RangeImage ri = random_range_image(rng, rows, cols);
    GridB ground = GridB::Constant(rows, cols, false);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (ri.validity(r, c) && rng.next_below(5) == 0) ground(r, c) = true;
      }
    }
    SegParams params;
    params.theta = rng.next_below(2) == 0 ? 0.1745 : 0.5;
    params.min_segment_size = 1 + static_cast<int>(rng.next_below(5));

    RangeSegmentation seg = segment_objects(ri, ground, spec, params);
    GridI expected = brute_force_objects(ri, ground, spec, params);
    check_same_partition(seg.labels, expected);

    // Partition invariant: ids are dense 1..segment_count, ground/ignore fixed.
    std::vector<bool> seen(static_cast<std::size_t>(seg.segment_count) + 1, false);
    for (Eigen::Index i = 0; i < seg.labels.size(); ++i) {
      int v = seg.labels.data()[i];
      if (!ri.validity.data()[i]) {
        CHECK(v == kIgnore);
      } else if (ground.data()[i]) {
        CHECK(v == kGround);
      } else {
        CHECK((v == kIgnore || (v >= 1 && v <= seg.segment_count)));
        if (v != kIgnore) seen[static_cast<std::size_t>(v)] = true;
      }
    }
    for (int id = 1; id <= seg.segment_count; ++id) CHECK(seen[static_cast<std::size_t>(id)]);
  }
}
