#pragma once

#include "dseg/core.hpp"
#include "dseg/image.hpp"
#include "dseg/projection.hpp"
#include "dseg/pseudolabel.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace dseg {

inline constexpr int kPixelFeatureDim = 9;

// Per-pixel inputs, one row per pixel in row-major (v * W + u) order:
// r, g, b (scaled to [0,1]), u/W, v/H, 3x3 luma mean, 3x3 luma std,
// horizontal and vertical luma gradient magnitudes.
struct PixelFeatureMap {
  int height = 0, width = 0;
  Eigen::MatrixXd values;  // (H*W) x F
};

PixelFeatureMap pixel_features(const Rgb8Image& image);

struct ClassifierParams {
  Eigen::MatrixXd w1;  // hidden x F
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // k x hidden
  Eigen::VectorXd b2;  // k
  std::uint64_t seed = 0;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int classes() const { return static_cast<int>(w2.rows()); }
};

// All weights uniform(-0.1, 0.1), drawn in storage order (w1, b1, w2, b2).
ClassifierParams init_classifier(int input_dim, int hidden, int classes, std::uint64_t seed);

struct PixelPredictionMap {
  int height = 0, width = 0;
  Eigen::MatrixXd probs;  // (H*W) x k, rows sum to 1
  GridI argmax;           // H x W, labels in 1..k (ties to the smaller label)
};

// affine -> tanh -> affine -> softmax per pixel.
PixelPredictionMap classifier_forward(const ClassifierParams& params,
                                      const PixelFeatureMap& feats);

struct LossResult {
  double value = 0;
  Eigen::MatrixXd grad_logits;  // (H*W) x k, d loss / d logit
};

// Masked mean cross-entropy: pixels labeled kIgnore contribute nothing and
// the rest are normalized by their own count. All-ignore maps give loss 0.
LossResult teacher_loss(const PixelPredictionMap& pred, const GridI& pseudo_labels);

// Plain mean cross-entropy between the refined target map and the prediction.
LossResult student_loss(const GridI& refined_labels, const PixelPredictionMap& pred);

struct RefineParams {
  bool vote_ground = true;  // kGround pixels form a voting region too
};

// Majority vote per segment region (ties to the smallest label); pixels
// outside any segment keep their own prediction. Output has no kIgnore.
GridI refine_predictions(const GridI& pred_labels, const ImageSegmentMap& segmap,
                         const RefineParams& params = {});

enum class LossKind { teacher, student };

struct TrainHyper {
  double lr = 2e-4;
  int batch = 32;   // frames per step
  int epochs = 20;
  std::uint64_t seed = 0;
  int hidden = 32;
  bool augment = false;  // random target/feature crops
  int crop = 512;        // crop side when augmenting, clamped to the frame
};

struct TrainStep {
  int step = 0;
  double loss = 0;
  double lr = 0;
};

struct TrainResult {
  ClassifierParams params;
  std::vector<TrainStep> trajectory;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& msg, std::vector<TrainStep> traj)
      : std::runtime_error(msg), trajectory(std::move(traj)) {}
  std::vector<TrainStep> trajectory;
};

// Mini-batch SGD with polynomial decay lr * (1 - t/T)^0.9. Per-frame losses
// are averaged uniformly within a batch. targets[i] pairs with frames[i]:
// pseudo-label maps for the teacher loss, refined maps for the student loss.
TrainResult train(const std::vector<PixelFeatureMap>& frames, const std::vector<GridI>& targets,
                  LossKind kind, int classes, const TrainHyper& hyper);

}  // namespace dseg
