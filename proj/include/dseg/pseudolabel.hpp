#pragma once

#include "dseg/core.hpp"
#include "dseg/image.hpp"
#include "dseg/projection.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dseg {

struct SegmentCrop {
  Rgb8Image pixels;  // tight bbox, zeroed outside mask
  GridB mask;
  int u0 = 0, v0 = 0;  // bbox origin in the source image
  int image_width = 0, image_height = 0;
  std::string frame_id;
  int segment_id = 0;
};

// segment_id may be kGround; the ground region crops like any segment.
SegmentCrop crop_segment(const Rgb8Image& image, const ImageSegmentMap& segmap, int segment_id);

struct FeatureParams {
  int histogram_bins = 8;
  int canonical_size = 64;  // mask resize target (nearest)
  int occupancy_cells = 8;  // occupancy grid is occupancy_cells^2 dims
};

struct SegmentFeature {
  Eigen::VectorXd vector;
  std::string frame_id;
  int segment_id = 0;
};

// 92-dim descriptor: per-channel 8-bin histograms of the masked pixels (24),
// binary occupancy of the canonically resized mask (64), four shape scalars;
// L2-normalized.
SegmentFeature extract_features(const SegmentCrop& crop, const FeatureParams& params = {});

std::vector<SegmentFeature> load_external_features(const std::filesystem::path& path);

struct ClusterModel {
  Eigen::MatrixXd centroids;  // k x D
  int k = 0;
  double inertia = 0;
  std::uint64_t seed = 0;
  // Inertia after each assignment step, final value last; not serialized.
  std::vector<double> inertia_history;
};

struct KMeansParams {
  int max_iter = 300;
  double tol = 1e-6;
};

// k-means++ seeding then Lloyd iterations; empty clusters are re-seeded to
// the point farthest from its assigned centroid. Deterministic given seed
// and independent of thread count.
ClusterModel kmeans_fit(const Eigen::MatrixXd& features, int k, std::uint64_t seed,
                        const KMeansParams& params = {});

// Nearest centroid by Euclidean distance; ties to the smaller id. 1-based.
int kmeans_assign(const ClusterModel& model, const Eigen::VectorXd& feature);

struct PseudoLabelMap {
  GridI labels;  // kIgnore or cluster id in 1..k
};

// assignment: segment label (object id or kGround) -> cluster id in 1..k, or
// kIgnore for segments dropped from clustering. Every non-IGNORE label in
// segmap must have an entry.
PseudoLabelMap assemble_pseudo_labels(const ImageSegmentMap& segmap,
                                      const std::map<int, int>& assignment);

}  // namespace dseg
