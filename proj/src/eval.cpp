#include "dseg/eval.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace dseg {

ConfusionMatrix confusion_matrix(const GridI& gt, const GridI& pred, int classes,
                                 int pseudo_classes) {
  if (classes < 1 || pseudo_classes < 1) {
    throw std::invalid_argument("confusion_matrix: class counts must be positive");
  }
  ConfusionMatrix conf;
  conf.counts.setZero(classes, pseudo_classes);
  accumulate_confusion(conf, gt, pred);
  return conf;
}

void accumulate_confusion(ConfusionMatrix& acc, const GridI& gt, const GridI& pred) {
  if (gt.rows() != pred.rows() || gt.cols() != pred.cols()) {
    throw std::invalid_argument("confusion_matrix: gt and pred shapes differ");
  }
  const int classes = acc.classes();
  const int k = acc.pseudo_classes();
  for (int v = 0; v < gt.rows(); ++v) {
    for (int u = 0; u < gt.cols(); ++u) {
      int g = gt(v, u);
      if (g == kIgnore) continue;
      int p = pred(v, u);
      if (g < 0 || g >= classes) {
        throw std::invalid_argument("confusion_matrix: gt label " + std::to_string(g) +
                                    " outside 0.." + std::to_string(classes - 1));
      }
      if (p < 1 || p > k) {
        throw std::invalid_argument("confusion_matrix: prediction " + std::to_string(p) +
                                    " outside 1.." + std::to_string(k));
      }
      ++acc.counts(g, p - 1);
      ++acc.total_labeled;
    }
  }
}

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

// Potentials-based assignment on an n x m cost matrix (n <= m), minimizing.
// Returns the optimal total cost.
std::int64_t solve_min_cost(const std::vector<std::vector<std::int64_t>>& a) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0;
  const int m = static_cast<int>(a[0].size());
  std::vector<std::int64_t> u(n + 1, 0), v(m + 1, 0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<std::int64_t> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = 0;
      std::int64_t delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        std::int64_t cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::int64_t cost = 0;
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) cost += a[p[j] - 1][j - 1];
  }
  return cost;
}

// Maximum matched mass over injective row -> column maps, restricted to the
// given rows and columns of the counts matrix.
std::int64_t solve_max_profit(const ConfusionMatrix& conf, const std::vector<int>& rows,
                              const std::vector<int>& cols) {
  if (rows.empty()) return 0;
  std::vector<std::vector<std::int64_t>> cost(rows.size(),
                                              std::vector<std::int64_t>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      cost[i][j] = -conf.counts(rows[i], cols[j]);
    }
  }
  return -solve_min_cost(cost);
}

}  // namespace

ClassMapping hungarian_match(const ConfusionMatrix& conf) {
  const int classes = conf.classes();
  const int k = conf.pseudo_classes();
  if (k < classes) {
    throw std::invalid_argument("hungarian_match: need at least as many pseudo-classes (" +
                                std::to_string(k) + ") as gt classes (" +
                                std::to_string(classes) + ")");
  }
  std::vector<int> all_rows(classes);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::vector<int> free_cols(k);
  std::iota(free_cols.begin(), free_cols.end(), 0);

  // Fix rows in order, choosing for each the smallest column that keeps the
  // remaining subproblem able to reach the global optimum; this yields the
  // lexicographically smallest optimal assignment.
  std::int64_t remaining = solve_max_profit(conf, all_rows, free_cols);
  ClassMapping mapping;
  mapping.assignment.resize(classes, -1);
  for (int c = 0; c < classes; ++c) {
    std::vector<int> tail_rows(all_rows.begin() + c + 1, all_rows.end());
    for (std::size_t ji = 0; ji < free_cols.size(); ++ji) {
      int j = free_cols[ji];
      std::vector<int> rest_cols;
      rest_cols.reserve(free_cols.size() - 1);
      for (std::size_t jj = 0; jj < free_cols.size(); ++jj) {
        if (jj != ji) rest_cols.push_back(free_cols[jj]);
      }
      std::int64_t with_j = conf.counts(c, j) + solve_max_profit(conf, tail_rows, rest_cols);
      if (with_j == remaining) {
        mapping.assignment[c] = j;
        remaining -= conf.counts(c, j);
        free_cols = std::move(rest_cols);
        break;
      }
    }
    if (mapping.assignment[c] < 0) {
      throw std::logic_error("hungarian_match: no column preserved the optimum");
    }
  }
  return mapping;
}

EvalReport evaluate(const ConfusionMatrix& conf, const ClassMapping& mapping) {
  const int classes = conf.classes();
  const int k = conf.pseudo_classes();
  if (static_cast<int>(mapping.assignment.size()) != classes) {
    throw std::invalid_argument("evaluate: mapping size does not match class count");
  }
  std::vector<bool> used(k, false);
  for (int j : mapping.assignment) {
    if (j < 0 || j >= k) throw std::invalid_argument("evaluate: mapping column out of range");
    if (used[j]) throw std::invalid_argument("evaluate: mapping is not injective");
    used[j] = true;
  }

  EvalReport report;
  report.mapping = mapping;
  report.total_labeled = conf.total_labeled;
  report.per_class_iou = Eigen::VectorXd::Zero(classes);
  report.class_present.assign(classes, false);

  std::int64_t tp_sum = 0;
  double iou_sum = 0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    const int m = mapping.assignment[c];
    std::int64_t tp = conf.counts(c, m);
    std::int64_t fp = conf.counts.col(m).sum() - tp;
    std::int64_t fn = conf.counts.row(c).sum() - tp;
    tp_sum += tp;
    report.class_present[c] = conf.counts.row(c).sum() > 0;
    if (tp + fp + fn > 0) {
      report.per_class_iou[c] =
          static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    }
    if (report.class_present[c]) {
      iou_sum += report.per_class_iou[c];
      ++present;
    }
  }
  report.miou_defined = present > 0;
  report.miou = present > 0 ? iou_sum / present : 0.0;
  report.pixel_accuracy =
      conf.total_labeled > 0 ? static_cast<double>(tp_sum) / conf.total_labeled : 0.0;
  for (int j = 0; j < k; ++j) {
    if (!used[j]) report.unmapped_pixel_count += conf.counts.col(j).sum();
  }
  return report;
}

NormalizedConfusion normalized_confusion_report(const ConfusionMatrix& conf,
                                                const ClassMapping& mapping) {
  const int classes = conf.classes();
  const int k = conf.pseudo_classes();
  NormalizedConfusion out;
  out.column_order = mapping.assignment;
  std::vector<bool> used(k, false);
  for (int j : mapping.assignment) used[j] = true;
  for (int j = 0; j < k; ++j) {
    if (!used[j]) out.column_order.push_back(j);
  }
  out.rows.setZero(classes, k);
  for (int c = 0; c < classes; ++c) {
    double row_sum = static_cast<double>(conf.counts.row(c).sum());
    if (row_sum == 0) continue;
    for (int jo = 0; jo < k; ++jo) {
      out.rows(c, jo) = conf.counts(c, out.column_order[jo]) / row_sum;
    }
  }
  return out;
}

std::vector<int> knn_pixel_classify(const Eigen::MatrixXd& train_features,
                                    const std::vector<int>& train_labels,
                                    const Eigen::MatrixXd& queries, int k_nn) {
  const long n = train_features.rows();
  if (n == 0) throw std::invalid_argument("knn_pixel_classify: empty training set");
  if (static_cast<long>(train_labels.size()) != n) {
    throw std::invalid_argument("knn_pixel_classify: label count mismatch");
  }
  if (k_nn < 1 || k_nn > n) {
    throw std::invalid_argument("knn_pixel_classify: k_nn outside 1..train size");
  }
  if (queries.cols() != train_features.cols()) {
    throw std::invalid_argument("knn_pixel_classify: feature dimension mismatch");
  }
  std::vector<int> result(queries.rows());
  parallel_for(static_cast<std::size_t>(queries.rows()), [&](std::size_t q) {
    std::vector<std::pair<double, long>> dist(n);
    for (long i = 0; i < n; ++i) {
      dist[i] = {(train_features.row(i) - queries.row(q)).squaredNorm(), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + k_nn, dist.end());
    std::map<int, int> votes;
    for (int i = 0; i < k_nn; ++i) ++votes[train_labels[dist[i].second]];
    int best_count = 0;
    for (const auto& [label, count] : votes) best_count = std::max(best_count, count);
    for (int i = 0; i < k_nn; ++i) {  // nearest member among tied labels
      int label = train_labels[dist[i].second];
      if (votes[label] == best_count) {
        result[q] = label;
        return;
      }
    }
  });
  return result;
}

}  // namespace dseg
