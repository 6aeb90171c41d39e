#pragma once

#include "dseg/core.hpp"

#include <cstdint>
#include <vector>

namespace dseg {

struct ConfusionMatrix {
  // counts(c, j) = pixels with gt class c predicted as pseudo-label j+1
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  std::int64_t total_labeled = 0;

  int classes() const { return static_cast<int>(counts.rows()); }
  int pseudo_classes() const { return static_cast<int>(counts.cols()); }
};

// gt in {kIgnore, 0..classes-1}, pred in 1..pseudo_classes; gt-ignore pixels
// are excluded entirely.
ConfusionMatrix confusion_matrix(const GridI& gt, const GridI& pred, int classes,
                                 int pseudo_classes);

void accumulate_confusion(ConfusionMatrix& acc, const GridI& gt, const GridI& pred);

struct ClassMapping {
  // assignment[c] = matched pseudo-class column in [0, k); injective
  std::vector<int> assignment;
};

// Injective gt-class -> pseudo-class matching maximizing matched confusion
// mass; among optima, the lexicographically smallest assignment vector.
// Requires k >= C.
ClassMapping hungarian_match(const ConfusionMatrix& conf);

struct EvalReport {
  Eigen::VectorXd per_class_iou;   // C entries; 0 where undefined
  std::vector<bool> class_present; // gt row sum > 0
  double miou = 0;
  bool miou_defined = false;
  double pixel_accuracy = 0;
  ClassMapping mapping;
  std::int64_t unmapped_pixel_count = 0;
  std::int64_t total_labeled = 0;
};

// Pixels predicted in unmapped pseudo-classes count as false negatives for
// their gt class. Classes absent from GT are excluded from the mIoU mean.
EvalReport evaluate(const ConfusionMatrix& conf, const ClassMapping& mapping);

struct NormalizedConfusion {
  Eigen::MatrixXd rows;           // C x k, L1-normalized per row (zero rows stay zero)
  std::vector<int> column_order;  // source column of each output column
};

// Matched pseudo-class of gt c sits at column c; unmatched columns follow in
// ascending id.
NormalizedConfusion normalized_confusion_report(const ConfusionMatrix& conf,
                                                const ClassMapping& mapping);

// Majority label among the k_nn nearest training features (Euclidean);
// ties broken by the label of the nearest member among the tied labels.
std::vector<int> knn_pixel_classify(const Eigen::MatrixXd& train_features,
                                    const std::vector<int>& train_labels,
                                    const Eigen::MatrixXd& queries, int k_nn);

}  // namespace dseg
