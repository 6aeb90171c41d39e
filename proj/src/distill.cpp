#include "dseg/distill.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace dseg {

PixelFeatureMap pixel_features(const Rgb8Image& image) {
  const int h = image.height();
  const int w = image.width();
  if (h <= 0 || w <= 0) throw std::invalid_argument("pixel_features: empty image");
  PixelFeatureMap out;
  out.height = h;
  out.width = w;
  out.values.resize(static_cast<long>(h) * w, kPixelFeatureDim);

  GridD luma(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      luma(v, u) = (0.299 * image.r(v, u) + 0.587 * image.g(v, u) + 0.114 * image.b(v, u)) / 255.0;
    }
  }
  auto at = [&](int v, int u) {
    return luma(std::clamp(v, 0, h - 1), std::clamp(u, 0, w - 1));
  };
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < w; ++u) {
      long i = static_cast<long>(v) * w + u;
      out.values(i, 0) = image.r(v, u) / 255.0;
      out.values(i, 1) = image.g(v, u) / 255.0;
      out.values(i, 2) = image.b(v, u) / 255.0;
      out.values(i, 3) = static_cast<double>(u) / w;
      out.values(i, 4) = static_cast<double>(v) / h;
      double sum = 0, sum2 = 0;
      for (int dv = -1; dv <= 1; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          double y = at(v + dv, u + du);
          sum += y;
          sum2 += y * y;
        }
      }
      double mean = sum / 9.0;
      out.values(i, 5) = mean;
      out.values(i, 6) = std::sqrt(std::max(0.0, sum2 / 9.0 - mean * mean));
      out.values(i, 7) = std::abs(at(v, u + 1) - at(v, u - 1)) / 2.0;
      out.values(i, 8) = std::abs(at(v + 1, u) - at(v - 1, u)) / 2.0;
    }
  });
  return out;
}

ClassifierParams init_classifier(int input_dim, int hidden, int classes, std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1 || classes < 1) {
    throw std::invalid_argument("init_classifier: dimensions must be positive");
  }
  ClassifierParams p;
  p.seed = seed;
  Rng rng(seed);
  auto u = [&] { return 0.2 * rng.next_double() - 0.1; };
  p.w1.resize(hidden, input_dim);
  for (int r = 0; r < hidden; ++r) {
    for (int c = 0; c < input_dim; ++c) p.w1(r, c) = u();
  }
  p.b1.resize(hidden);
  for (int r = 0; r < hidden; ++r) p.b1[r] = u();
  p.w2.resize(classes, hidden);
  for (int r = 0; r < classes; ++r) {
    for (int c = 0; c < hidden; ++c) p.w2(r, c) = u();
  }
  p.b2.resize(classes);
  for (int r = 0; r < classes; ++r) p.b2[r] = u();
  return p;
}

namespace {

// probs and hidden activations; hidden is kept for backprop
void forward_raw(const ClassifierParams& p, const Eigen::MatrixXd& x, Eigen::MatrixXd& hidden,
                 Eigen::MatrixXd& probs) {
  hidden = ((x * p.w1.transpose()).rowwise() + p.b1.transpose()).array().tanh();
  Eigen::MatrixXd logits = (hidden * p.w2.transpose()).rowwise() + p.b2.transpose();
  Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  probs = (logits.colwise() - row_max).array().exp();
  probs.array().colwise() /= probs.rowwise().sum().array();
}

// Shared cross-entropy core. With masked=true, kIgnore targets are skipped
// and the rest normalize by their count; otherwise every pixel counts.
LossResult ce_loss(const Eigen::MatrixXd& probs, const GridI& labels, int classes, bool masked) {
  const int h = static_cast<int>(labels.rows());
  const int w = static_cast<int>(labels.cols());
  if (static_cast<long>(h) * w != probs.rows()) {
    throw std::invalid_argument("cross-entropy: prediction and label shapes differ");
  }
  LossResult res;
  res.grad_logits = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
  double loss = 0;
  long count = 0;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      int label = labels(v, u);
      if (label == kIgnore) {
        if (masked) continue;
        throw std::invalid_argument("cross-entropy: unmasked loss saw an ignore label");
      }
      if (label < 1 || label > classes) {
        throw std::invalid_argument("cross-entropy: label " + std::to_string(label) +
                                    " outside 1.." + std::to_string(classes));
      }
      long i = static_cast<long>(v) * w + u;
      loss -= std::log(probs(i, label - 1));
      res.grad_logits.row(i) = probs.row(i);
      res.grad_logits(i, label - 1) -= 1.0;
      ++count;
    }
  }
  if (count == 0) {
    res.value = 0;
    return res;  // grad already zero
  }
  res.value = loss / static_cast<double>(count);
  res.grad_logits /= static_cast<double>(count);
  return res;
}

}  // namespace

PixelPredictionMap classifier_forward(const ClassifierParams& params,
                                      const PixelFeatureMap& feats) {
  if (feats.values.cols() != params.input_dim()) {
    throw std::invalid_argument("classifier_forward: feature dimension mismatch");
  }
  if (static_cast<long>(feats.height) * feats.width != feats.values.rows()) {
    throw std::invalid_argument("classifier_forward: feature map shape inconsistent");
  }
  PixelPredictionMap out;
  out.height = feats.height;
  out.width = feats.width;
  Eigen::MatrixXd hidden;
  forward_raw(params, feats.values, hidden, out.probs);
  out.argmax.resize(feats.height, feats.width);
  const int k = params.classes();
  for (int v = 0; v < feats.height; ++v) {
    for (int u = 0; u < feats.width; ++u) {
      long i = static_cast<long>(v) * feats.width + u;
      int best = 0;
      for (int j = 1; j < k; ++j) {
        if (out.probs(i, j) > out.probs(i, best)) best = j;
      }
      out.argmax(v, u) = best + 1;
    }
  }
  return out;
}

LossResult teacher_loss(const PixelPredictionMap& pred, const GridI& pseudo_labels) {
  return ce_loss(pred.probs, pseudo_labels, static_cast<int>(pred.probs.cols()), true);
}

LossResult student_loss(const GridI& refined_labels, const PixelPredictionMap& pred) {
  return ce_loss(pred.probs, refined_labels, static_cast<int>(pred.probs.cols()), false);
}

GridI refine_predictions(const GridI& pred_labels, const ImageSegmentMap& segmap,
                         const RefineParams& params) {
  if (pred_labels.rows() != segmap.labels.rows() || pred_labels.cols() != segmap.labels.cols()) {
    throw std::invalid_argument("refine_predictions: shape mismatch");
  }
  GridI out = pred_labels;
  // region label -> (vote counts per predicted label)
  std::map<int, std::map<int, long>> votes;
  for (int v = 0; v < segmap.height(); ++v) {
    for (int u = 0; u < segmap.width(); ++u) {
      int region = segmap.labels(v, u);
      if (region == kIgnore) continue;
      if (region == kGround && !params.vote_ground) continue;
      int pred = pred_labels(v, u);
      if (pred == kIgnore || pred < 1) {
        throw std::invalid_argument("refine_predictions: prediction map carries ignore labels");
      }
      ++votes[region][pred];
    }
  }
  std::map<int, int> winner;
  for (const auto& [region, counts] : votes) {
    long best_count = -1;
    int best_label = 0;
    for (const auto& [label, count] : counts) {  // ascending label: ties keep the smaller
      if (count > best_count) {
        best_count = count;
        best_label = label;
      }
    }
    winner[region] = best_label;
  }
  for (int v = 0; v < segmap.height(); ++v) {
    for (int u = 0; u < segmap.width(); ++u) {
      int region = segmap.labels(v, u);
      if (region == kIgnore) continue;
      if (region == kGround && !params.vote_ground) continue;
      out(v, u) = winner.at(region);
    }
  }
  return out;
}

namespace {

struct ParamGrads {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
  double loss = 0;

  void set_zero(const ClassifierParams& p) {
    w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
    b1 = Eigen::VectorXd::Zero(p.b1.size());
    w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
    b2 = Eigen::VectorXd::Zero(p.b2.size());
  }
};

void frame_loss_and_grads(const ClassifierParams& p, const Eigen::MatrixXd& x,
                          const GridI& target, bool masked, ParamGrads& g) {
  Eigen::MatrixXd hidden, probs;
  forward_raw(p, x, hidden, probs);
  LossResult lr = ce_loss(probs, target, static_cast<int>(p.w2.rows()), masked);
  g.loss = lr.value;
  g.w2 = lr.grad_logits.transpose() * hidden;
  g.b2 = lr.grad_logits.colwise().sum();
  Eigen::MatrixXd dh = (lr.grad_logits * p.w2).array() * (1.0 - hidden.array().square());
  g.w1 = dh.transpose() * x;
  g.b1 = dh.colwise().sum();
}

}  // namespace

TrainResult train(const std::vector<PixelFeatureMap>& frames, const std::vector<GridI>& targets,
                  LossKind kind, int classes, const TrainHyper& hyper) {
  if (frames.empty()) throw std::invalid_argument("train: need at least one frame");
  if (frames.size() != targets.size()) {
    throw std::invalid_argument("train: frames and targets must pair up");
  }
  if (classes < 1) throw std::invalid_argument("train: classes must be positive");
  if (hyper.batch < 1) throw std::invalid_argument("train: batch must be positive");
  if (!(hyper.lr > 0)) throw std::invalid_argument("train: lr must be positive");
  if (hyper.epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
  const int f_dim = static_cast<int>(frames[0].values.cols());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].values.cols() != f_dim) {
      throw std::invalid_argument("train: inconsistent feature dimensions");
    }
    if (targets[i].rows() != frames[i].height || targets[i].cols() != frames[i].width) {
      throw std::invalid_argument("train: target shape does not match frame " + std::to_string(i));
    }
  }

  TrainResult result;
  result.params =
      init_classifier(f_dim, hyper.hidden, classes, derive_seed(hyper.seed, "init"));
  const long n = static_cast<long>(frames.size());
  const long steps_per_epoch = (n + hyper.batch - 1) / hyper.batch;
  const long total_steps = steps_per_epoch * hyper.epochs;
  if (total_steps == 0) return result;

  Rng order_rng(derive_seed(hyper.seed, "order"));
  Rng augment_rng(derive_seed(hyper.seed, "augment"));
  const bool masked = kind == LossKind::teacher;
  std::vector<std::size_t> order(frames.size());
  long t = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    for (long start = 0; start < n; start += hyper.batch) {
      const long chunk = std::min<long>(hyper.batch, n - start);

      // Augmentation offsets are drawn sequentially before the parallel part
      // so the draw order never depends on scheduling.
      std::vector<Eigen::MatrixXd> xs(chunk);
      std::vector<GridI> ys(chunk);
      for (long b = 0; b < chunk; ++b) {
        const PixelFeatureMap& fm = frames[order[start + b]];
        const GridI& tg = targets[order[start + b]];
        if (!hyper.augment) {
          xs[b] = fm.values;
          ys[b] = tg;
          continue;
        }
        int ch = std::min(hyper.crop, fm.height);
        int cw = std::min(hyper.crop, fm.width);
        int v0 = static_cast<int>(augment_rng.next_below(fm.height - ch + 1));
        int u0 = static_cast<int>(augment_rng.next_below(fm.width - cw + 1));
        xs[b].resize(static_cast<long>(ch) * cw, f_dim);
        for (int v = 0; v < ch; ++v) {
          for (int u = 0; u < cw; ++u) {
            xs[b].row(static_cast<long>(v) * cw + u) =
                fm.values.row(static_cast<long>(v0 + v) * fm.width + (u0 + u));
          }
        }
        ys[b] = tg.block(v0, u0, ch, cw);
      }

      std::vector<ParamGrads> grads(chunk);
      parallel_for(static_cast<std::size_t>(chunk), [&](std::size_t b) {
        frame_loss_and_grads(result.params, xs[b], ys[b], masked, grads[b]);
      });

      ParamGrads total;
      total.set_zero(result.params);
      double loss = 0;
      for (long b = 0; b < chunk; ++b) {  // fixed order, bit-stable sums
        total.w1 += grads[b].w1;
        total.b1 += grads[b].b1;
        total.w2 += grads[b].w2;
        total.b2 += grads[b].b2;
        loss += grads[b].loss;
      }
      const double inv = 1.0 / static_cast<double>(chunk);
      loss *= inv;
      double lr_t = hyper.lr * std::pow(1.0 - static_cast<double>(t) / total_steps, 0.9);
      result.trajectory.push_back({static_cast<int>(t), loss, lr_t});
      if (!std::isfinite(loss) || !total.w1.allFinite() || !total.w2.allFinite() ||
          !total.b1.allFinite() || !total.b2.allFinite()) {
        throw TrainingDiverged("train: non-finite loss or gradient at step " + std::to_string(t),
                               result.trajectory);
      }
      result.params.w1 -= (lr_t * inv) * total.w1;
      result.params.b1 -= (lr_t * inv) * total.b1;
      result.params.w2 -= (lr_t * inv) * total.w2;
      result.params.b2 -= (lr_t * inv) * total.b2;
      ++t;
    }
  }
  return result;
}

}  // namespace dseg
