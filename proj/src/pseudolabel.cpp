#include "dseg/pseudolabel.hpp"

#include "dseg/io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dseg {

SegmentCrop crop_segment(const Rgb8Image& image, const ImageSegmentMap& segmap, int segment_id) {
  if (image.height() != segmap.height() || image.width() != segmap.width()) {
    throw std::invalid_argument("crop_segment: image and segment map shapes differ");
  }
  if (segment_id == kIgnore) {
    throw std::invalid_argument("crop_segment: cannot crop the ignore label");
  }
  int umin = segmap.width(), umax = -1, vmin = segmap.height(), vmax = -1;
  for (int v = 0; v < segmap.height(); ++v) {
    for (int u = 0; u < segmap.width(); ++u) {
      if (segmap.labels(v, u) == segment_id) {
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    }
  }
  if (umax < 0) {
    throw std::invalid_argument("crop_segment: segment id " + std::to_string(segment_id) +
                                " not present");
  }
  SegmentCrop crop;
  crop.u0 = umin;
  crop.v0 = vmin;
  crop.image_width = segmap.width();
  crop.image_height = segmap.height();
  crop.segment_id = segment_id;
  const int h = vmax - vmin + 1;
  const int w = umax - umin + 1;
  crop.pixels = Rgb8Image::zero(h, w);
  crop.mask = GridB::Constant(h, w, false);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (segmap.labels(vmin + v, umin + u) == segment_id) {
        crop.mask(v, u) = true;
        crop.pixels.r(v, u) = image.r(vmin + v, umin + u);
        crop.pixels.g(v, u) = image.g(vmin + v, umin + u);
        crop.pixels.b(v, u) = image.b(vmin + v, umin + u);
      }
    }
  }
  return crop;
}

SegmentFeature extract_features(const SegmentCrop& crop, const FeatureParams& params) {
  const int h = static_cast<int>(crop.mask.rows());
  const int w = static_cast<int>(crop.mask.cols());
  const long count = crop.mask.count();
  if (count == 0) throw std::invalid_argument("extract_features: empty mask");
  const int bins = params.histogram_bins;
  const int occ = params.occupancy_cells;
  const int dim = 3 * bins + occ * occ + 4;

  SegmentFeature feat;
  feat.frame_id = crop.frame_id;
  feat.segment_id = crop.segment_id;
  feat.vector = Eigen::VectorXd::Zero(dim);

  // Per-channel histograms over the masked pixels, each summing to 1.
  const int shift = 8 - static_cast<int>(std::lround(std::log2(bins)));
  auto histogram = [&](const Rgb8Image::Plane& plane, int offset) {
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        if (crop.mask(v, u)) feat.vector[offset + (plane(v, u) >> shift)] += 1.0;
      }
    }
    for (int b = 0; b < bins; ++b) feat.vector[offset + b] /= static_cast<double>(count);
  };
  histogram(crop.pixels.r, 0);
  histogram(crop.pixels.g, bins);
  histogram(crop.pixels.b, 2 * bins);

  // Occupancy: mask nearest-resized to the canonical square, then reduced to
  // occ x occ blocks; a block is occupied when at least half its cells are.
  const int canon = params.canonical_size;
  const int block = canon / occ;
  int base = 3 * bins;
  for (int bv = 0; bv < occ; ++bv) {
    for (int bu = 0; bu < occ; ++bu) {
      int on = 0;
      for (int v = bv * block; v < (bv + 1) * block; ++v) {
        for (int u = bu * block; u < (bu + 1) * block; ++u) {
          int sv = std::min(h - 1, static_cast<int>((v + 0.5) * h / canon));
          int su = std::min(w - 1, static_cast<int>((u + 0.5) * w / canon));
          if (crop.mask(sv, su)) ++on;
        }
      }
      feat.vector[base + bv * occ + bu] = (2 * on >= block * block) ? 1.0 : 0.0;
    }
  }

  base = 3 * bins + occ * occ;
  const double diag = std::sqrt(static_cast<double>(crop.image_width) * crop.image_width +
                                static_cast<double>(crop.image_height) * crop.image_height);
  feat.vector[base + 0] = std::log(static_cast<double>(w) / h);
  feat.vector[base + 1] = static_cast<double>(count) / (static_cast<double>(w) * h);
  feat.vector[base + 2] = std::sqrt(static_cast<double>(count)) / diag;
  feat.vector[base + 3] = (crop.v0 + 0.5 * h) / crop.image_height;

  double norm = feat.vector.norm();
  if (!(norm > 0.0) || !feat.vector.allFinite()) {
    throw std::runtime_error("extract_features: degenerate descriptor");
  }
  feat.vector /= norm;
  return feat;
}

std::vector<SegmentFeature> load_external_features(const std::filesystem::path& path) {
  return read_features_csv(path);
}

namespace {

// Assignment + distances for every point; parallel over points, no shared
// accumulation, so the result is identical for any thread count.
void assign_all(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids,
                std::vector<int>& assign, std::vector<double>& dist2) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const int k = static_cast<int>(centroids.rows());
  parallel_for(n, [&](std::size_t i) {
    int best = 0;
    double best_d = (x.row(i) - centroids.row(0)).squaredNorm();
    for (int j = 1; j < k; ++j) {
      double d = (x.row(i) - centroids.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    assign[i] = best;
    dist2[i] = best_d;
  });
}

}  // namespace

ClusterModel kmeans_fit(const Eigen::MatrixXd& features, int k, std::uint64_t seed,
                        const KMeansParams& params) {
  const long n = features.rows();
  const long d = features.cols();
  if (k < 1) throw std::invalid_argument("kmeans_fit: k must be at least 1");
  if (n < k) throw std::invalid_argument("kmeans_fit: need at least k points");
  if (!features.allFinite()) throw std::invalid_argument("kmeans_fit: non-finite features");

  Rng rng(derive_seed(seed, "kmeans"));
  Eigen::MatrixXd centroids(k, d);

  // k-means++: first centroid uniform, then D^2-weighted draws.
  centroids.row(0) = features.row(static_cast<long>(rng.next_below(n)));
  std::vector<double> d2(n);
  for (long i = 0; i < n; ++i) d2[i] = (features.row(i) - centroids.row(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    double total = 0;
    for (long i = 0; i < n; ++i) total += d2[i];
    long pick = -1;
    if (total > 0) {
      double target = rng.next_double() * total;
      double cum = 0;
      for (long i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // fp slack: take the last point with positive weight
        for (long i = n - 1; i >= 0; --i) {
          if (d2[i] > 0) {
            pick = i;
            break;
          }
        }
      }
    }
    if (pick < 0) pick = static_cast<long>(rng.next_below(n));
    centroids.row(j) = features.row(pick);
    for (long i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (features.row(i) - centroids.row(j)).squaredNorm());
    }
  }

  std::vector<int> assign(n), prev_assign;
  std::vector<double> dist2(n);
  std::vector<double> history;
  bool finishing = false;
  for (int iter = 0; iter < params.max_iter; ++iter) {
    assign_all(features, centroids, assign, dist2);
    double inertia = 0;
    for (long i = 0; i < n; ++i) inertia += dist2[i];
    history.push_back(inertia);
    if (assign == prev_assign) break;

    // Re-seed empty clusters to the farthest point (ties: smallest index).
    std::vector<long> sizes(k, 0);
    for (long i = 0; i < n; ++i) ++sizes[assign[i]];
    for (int j = 0; j < k; ++j) {
      if (sizes[j] > 0) continue;
      long far = 0;
      double far_d = -1;
      for (long i = 0; i < n; ++i) {
        double di = (features.row(i) - centroids.row(assign[i])).squaredNorm();
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      --sizes[assign[far]];
      assign[far] = j;
      ++sizes[j];
      centroids.row(j) = features.row(far);
    }

    // Means in point-index order for bit-stable sums.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
    for (long i = 0; i < n; ++i) sums.row(assign[i]) += features.row(i);
    double shift = 0;
    for (int j = 0; j < k; ++j) {
      Eigen::RowVectorXd mean = sums.row(j) / static_cast<double>(sizes[j]);
      shift = std::max(shift, (mean - centroids.row(j)).norm());
      centroids.row(j) = mean;
    }
    prev_assign = assign;
    if (finishing) break;
    // Near-converged: run one more assign+mean round so the returned
    // centroids are exactly the means of the final assignment.
    if (shift < params.tol) finishing = true;
  }

  ClusterModel model;
  model.centroids = std::move(centroids);
  model.k = k;
  model.seed = seed;
  assign_all(features, model.centroids, assign, dist2);
  model.inertia = 0;
  for (long i = 0; i < n; ++i) model.inertia += dist2[i];
  history.push_back(model.inertia);
  model.inertia_history = std::move(history);
  return model;
}

int kmeans_assign(const ClusterModel& model, const Eigen::VectorXd& feature) {
  if (feature.size() != model.centroids.cols()) {
    throw std::invalid_argument("kmeans_assign: feature dimension mismatch");
  }
  int best = 0;
  double best_d = (feature.transpose() - model.centroids.row(0)).squaredNorm();
  for (int j = 1; j < model.k; ++j) {
    double dj = (feature.transpose() - model.centroids.row(j)).squaredNorm();
    if (dj < best_d) {
      best_d = dj;
      best = j;
    }
  }
  return best + 1;
}

PseudoLabelMap assemble_pseudo_labels(const ImageSegmentMap& segmap,
                                      const std::map<int, int>& assignment) {
  PseudoLabelMap out;
  out.labels = GridI::Constant(segmap.labels.rows(), segmap.labels.cols(), kIgnore);
  for (int v = 0; v < segmap.height(); ++v) {
    for (int u = 0; u < segmap.width(); ++u) {
      int seg = segmap.labels(v, u);
      if (seg == kIgnore) continue;
      auto it = assignment.find(seg);
      if (it == assignment.end()) {
        throw std::invalid_argument("assemble_pseudo_labels: segment " + std::to_string(seg) +
                                    " has no assignment");
      }
      int cluster = it->second;
      if (cluster == kIgnore) continue;  // dropped segment
      if (cluster < 1 || cluster > kMaxSegmentId) {
        throw std::invalid_argument("assemble_pseudo_labels: cluster id " +
                                    std::to_string(cluster) + " out of range");
      }
      out.labels(v, u) = cluster;
    }
  }
  return out;
}

}  // namespace dseg
