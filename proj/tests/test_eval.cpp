#include <doctest.h>

#include "dseg/eval.hpp"
#include "test_helpers.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

using namespace dseg;

namespace {

ConfusionMatrix conf_from(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  ConfusionMatrix conf;
  int r = static_cast<int>(rows.size());
  int c = static_cast<int>(rows.begin()->size());
  conf.counts.setZero(r, c);
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (std::int64_t v : row) {
      conf.counts(i, j++) = v;
      conf.total_labeled += v;
    }
    ++i;
  }
  return conf;
}

void enumerate(const ConfusionMatrix& conf, int row, std::vector<int>& cur,
               std::vector<bool>& used, std::int64_t mass, std::int64_t& best_mass,
               std::vector<int>& best_vec) {
  const int classes = conf.classes();
  if (row == classes) {
    if (mass > best_mass || (mass == best_mass && cur < best_vec)) {
      best_mass = mass;
      best_vec = cur;
    }
    return;
  }
  for (int j = 0; j < conf.pseudo_classes(); ++j) {
    if (used[j]) continue;
    used[j] = true;
    cur.push_back(j);
    enumerate(conf, row + 1, cur, used, mass + conf.counts(row, j), best_mass, best_vec);
    cur.pop_back();
    used[j] = false;
  }
}

// Exhaustive-permutation oracle: the maximum matched mass and, among optima,
// the lexicographically smallest assignment vector.
std::pair<std::int64_t, std::vector<int>> exhaustive_best(const ConfusionMatrix& conf) {
  std::vector<int> cur, best_vec(conf.classes(), conf.pseudo_classes());
  std::vector<bool> used(conf.pseudo_classes(), false);
  std::int64_t best_mass = -1;
  enumerate(conf, 0, cur, used, 0, best_mass, best_vec);
  return {best_mass, best_vec};
}

std::int64_t matched_mass(const ConfusionMatrix& conf, const ClassMapping& mapping) {
  std::int64_t mass = 0;
  for (int c = 0; c < conf.classes(); ++c) mass += conf.counts(c, mapping.assignment[c]);
  return mass;
}

}  // namespace

TEST_CASE("confusion_matrix counts labeled pixels and skips gt ignores") {
  GridI gt(2, 3);
  gt << 0, 1, kIgnore,
        1, 1, 0;
  GridI pred(2, 3);
  pred << 1, 2, 3,
          2, 1, 1;
  ConfusionMatrix conf = confusion_matrix(gt, pred, 2, 3);
  CHECK(conf.total_labeled == 5);
  CHECK(conf.counts(0, 0) == 2);  // gt 0 predicted pseudo 1
  CHECK(conf.counts(0, 1) == 0);
  CHECK(conf.counts(1, 0) == 1);
  CHECK(conf.counts(1, 1) == 2);
  CHECK(conf.counts.sum() == 5);

  accumulate_confusion(conf, gt, pred);
  CHECK(conf.total_labeled == 10);
  CHECK(conf.counts(1, 1) == 4);

  GridI bad_gt = gt;
  bad_gt(0, 0) = 2;  // outside 0..1
  CHECK_THROWS_AS(confusion_matrix(bad_gt, pred, 2, 3), std::invalid_argument);
  GridI bad_pred = pred;
  bad_pred(0, 0) = 0;  // predictions are 1-based
  CHECK_THROWS_AS(confusion_matrix(gt, bad_pred, 2, 3), std::invalid_argument);
  bad_pred(0, 0) = 4;
  CHECK_THROWS_AS(confusion_matrix(gt, bad_pred, 2, 3), std::invalid_argument);
  GridI narrow(2, 2);
  narrow.setConstant(1);
  CHECK_THROWS_AS(confusion_matrix(gt, narrow, 2, 3), std::invalid_argument);
  CHECK_THROWS_AS(confusion_matrix(gt, pred, 0, 3), std::invalid_argument);
}

TEST_CASE("hungarian_match worked examples") {
  ConfusionMatrix diag = conf_from({{5, 0}, {0, 3}});
  CHECK(hungarian_match(diag).assignment == std::vector<int>{0, 1});

  ConfusionMatrix anti = conf_from({{0, 4}, {6, 0}});
  CHECK(hungarian_match(anti).assignment == std::vector<int>{1, 0});

  ConfusionMatrix one = conf_from({{7}});
  CHECK(hungarian_match(one).assignment == std::vector<int>{0});

  // All-zero mass: every assignment ties, the smallest vector wins.
  ConfusionMatrix zero = conf_from({{0, 0, 0}, {0, 0, 0}});
  CHECK(hungarian_match(zero).assignment == std::vector<int>{0, 1});

  ConfusionMatrix wide = conf_from({{1, 2}, {3, 4}, {5, 6}});
  CHECK_THROWS_AS(hungarian_match(wide), std::invalid_argument);
}

TEST_CASE("hungarian_match equals the exhaustive optimum with lexicographic ties") {
  Rng rng(81);
  for (int trial = 0; trial < 200; ++trial) {
    int classes = 1 + static_cast<int>(rng.next_below(5));
    int k = classes + static_cast<int>(rng.next_below(8 - classes));
    ConfusionMatrix conf;
    conf.counts.setZero(classes, k);
    for (int c = 0; c < classes; ++c) {
      for (int j = 0; j < k; ++j) {
        // Small value pool makes optimum ties common.
        conf.counts(c, j) = static_cast<std::int64_t>(rng.next_below(6));
        conf.total_labeled += conf.counts(c, j);
      }
    }
    ClassMapping got = hungarian_match(conf);
    auto [best_mass, best_vec] = exhaustive_best(conf);
    CHECK(matched_mass(conf, got) == best_mass);
    CHECK(got.assignment == best_vec);
  }
}

TEST_CASE("evaluate reproduces the two-class worked example") {
  GridI gt(1, 4);
  gt << 0, 0, 1, 1;
  GridI pred(1, 4);
  pred << 1, 3, 2, 2;
  ConfusionMatrix conf = confusion_matrix(gt, pred, 2, 3);
  ClassMapping mapping = hungarian_match(conf);
  CHECK(mapping.assignment == std::vector<int>{0, 1});
  EvalReport report = evaluate(conf, mapping);
  CHECK(report.per_class_iou[0] == 0.5);
  CHECK(report.per_class_iou[1] == 1.0);
  CHECK(report.miou == 0.75);
  CHECK(report.pixel_accuracy == 0.75);
  CHECK(report.miou_defined);
  CHECK(report.unmapped_pixel_count == 1);  // the pixel sent to pseudo 3
  CHECK(report.total_labeled == 4);
  CHECK(report.class_present == std::vector<bool>{true, true});
}

TEST_CASE("evaluate validates the mapping") {
  ConfusionMatrix conf = conf_from({{3, 1}, {0, 2}});
  ClassMapping short_map;
  short_map.assignment = {0};
  CHECK_THROWS_AS(evaluate(conf, short_map), std::invalid_argument);
  ClassMapping oob;
  oob.assignment = {0, 2};
  CHECK_THROWS_AS(evaluate(conf, oob), std::invalid_argument);
  ClassMapping repeated;
  repeated.assignment = {1, 1};
  CHECK_THROWS_AS(evaluate(conf, repeated), std::invalid_argument);
}

TEST_CASE("evaluate metric invariants on random confusions") {
  Rng rng(82);
  for (int trial = 0; trial < 50; ++trial) {
    int classes = 1 + static_cast<int>(rng.next_below(5));
    int k = classes + static_cast<int>(rng.next_below(4));
    ConfusionMatrix conf;
    conf.counts.setZero(classes, k);
    for (int c = 0; c < classes; ++c) {
      if (rng.next_below(5) == 0) continue;  // leave some classes absent
      for (int j = 0; j < k; ++j) {
        conf.counts(c, j) = static_cast<std::int64_t>(rng.next_below(40));
      }
    }
    conf.total_labeled = conf.counts.sum();
    ClassMapping mapping = hungarian_match(conf);
    EvalReport report = evaluate(conf, mapping);

    // Per-class tp + fn always recovers the row sum, so they total the mass.
    std::int64_t tp_sum = 0;
    for (int c = 0; c < classes; ++c) {
      std::int64_t tp = conf.counts(c, mapping.assignment[c]);
      std::int64_t fn = conf.counts.row(c).sum() - tp;
      CHECK(tp + fn == conf.counts.row(c).sum());
      tp_sum += tp;
      CHECK(report.per_class_iou[c] >= 0.0);
      CHECK(report.per_class_iou[c] <= 1.0);
      CHECK(report.class_present[c] == (conf.counts.row(c).sum() > 0));
      if (!report.class_present[c] && conf.counts.col(mapping.assignment[c]).sum() > 0) {
        CHECK(report.per_class_iou[c] == 0.0);  // tp 0 with nonzero fp
      }
    }
    if (conf.total_labeled > 0) {
      CHECK(report.pixel_accuracy ==
            static_cast<double>(tp_sum) / static_cast<double>(conf.total_labeled));
    }

    // Doubling every count changes nothing.
    ConfusionMatrix doubled = conf;
    doubled.counts *= 2;
    doubled.total_labeled *= 2;
    EvalReport twice = evaluate(doubled, mapping);
    CHECK(twice.miou == report.miou);
    CHECK(twice.pixel_accuracy == report.pixel_accuracy);
    CHECK(twice.miou_defined == report.miou_defined);

    // Relabeling pseudo classes with the mapping moved along changes nothing.
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    ConfusionMatrix permuted;
    permuted.counts.setZero(classes, k);
    for (int c = 0; c < classes; ++c) {
      for (int j = 0; j < k; ++j) permuted.counts(c, perm[j]) = conf.counts(c, j);
    }
    permuted.total_labeled = conf.total_labeled;
    ClassMapping moved;
    moved.assignment.resize(classes);
    for (int c = 0; c < classes; ++c) moved.assignment[c] = perm[mapping.assignment[c]];
    EvalReport same = evaluate(permuted, moved);
    CHECK(same.miou == report.miou);
    CHECK(same.pixel_accuracy == report.pixel_accuracy);
    CHECK(same.unmapped_pixel_count == report.unmapped_pixel_count);
    for (int c = 0; c < classes; ++c) {
      CHECK(same.per_class_iou[c] == report.per_class_iou[c]);
    }
  }

  // Entirely empty ground truth: mIoU undefined, accuracy zero.
  ConfusionMatrix empty = conf_from({{0, 0}, {0, 0}});
  ClassMapping identity;
  identity.assignment = {0, 1};
  EvalReport report = evaluate(empty, identity);
  CHECK(!report.miou_defined);
  CHECK(report.miou == 0.0);
  CHECK(report.pixel_accuracy == 0.0);
}

TEST_CASE("normalized_confusion_report orders matched columns first") {
  ConfusionMatrix conf = conf_from({{2, 0, 6, 0},
                                    {0, 0, 0, 0},
                                    {1, 0, 1, 8}});
  ClassMapping mapping = hungarian_match(conf);
  CHECK(mapping.assignment == std::vector<int>{2, 0, 3});
  NormalizedConfusion norm = normalized_confusion_report(conf, mapping);
  CHECK(norm.column_order == std::vector<int>{2, 0, 3, 1});
  CHECK(norm.rows(0, 0) == 0.75);  // 6 of 8 in the matched column
  CHECK(norm.rows(0, 1) == 0.25);
  CHECK(norm.rows(0, 2) == 0.0);
  CHECK(norm.rows(1, 0) == 0.0);  // empty gt row stays zero
  CHECK(norm.rows(2, 1) == 0.1);
  CHECK(norm.rows(2, 2) == 0.8);
  for (int c = 0; c < 3; ++c) {
    double sum = norm.rows.row(c).sum();
    CHECK((sum == 0.0 || sum == doctest::Approx(1.0).epsilon(1e-12)));
  }
}

TEST_CASE("knn_pixel_classify majority vote with nearest-member ties") {
  Eigen::MatrixXd train(4, 1);
  train << 0, 1, 3, 4;
  std::vector<int> labels = {1, 1, 2, 2};
  Eigen::MatrixXd queries(3, 1);
  queries << -1, 3.4, 2.0;

  std::vector<int> got = knn_pixel_classify(train, labels, queries, 1);
  CHECK(got == std::vector<int>{1, 2, 1});  // 2.0 ties 1 vs 3, index order wins

  got = knn_pixel_classify(train, labels, queries, 4);
  // Full vote is 2-2; the nearest of the tied labels decides.
  CHECK(got[0] == 1);
  CHECK(got[1] == 2);
  CHECK(got[2] == 1);

  got = knn_pixel_classify(train, labels, queries, 3);
  CHECK(got[0] == 1);  // neighbors 0,1,3: votes 2-1
  CHECK(got[1] == 2);

  CHECK_THROWS_AS(knn_pixel_classify(Eigen::MatrixXd(0, 1), {}, queries, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(knn_pixel_classify(train, {1, 2}, queries, 1), std::invalid_argument);
  CHECK_THROWS_AS(knn_pixel_classify(train, labels, queries, 0), std::invalid_argument);
  CHECK_THROWS_AS(knn_pixel_classify(train, labels, queries, 5), std::invalid_argument);
  Eigen::MatrixXd wide(1, 2);
  wide << 0, 0;
  CHECK_THROWS_AS(knn_pixel_classify(train, labels, wide, 1), std::invalid_argument);
}

TEST_CASE("knn_pixel_classify matches a full-sort reference on random data") {
  Rng rng(83);
  int n = 40, d = 3;
  Eigen::MatrixXd train(n, d);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = 1 + static_cast<int>(rng.next_below(4));
    for (int j = 0; j < d; ++j) train(i, j) = rng.next_gaussian();
  }
  Eigen::MatrixXd queries(60, d);
  for (int q = 0; q < 60; ++q) {
    for (int j = 0; j < d; ++j) queries(q, j) = rng.next_gaussian();
  }
  for (int k_nn : {1, 3, 7, 40}) {
    std::vector<int> got = knn_pixel_classify(train, labels, queries, k_nn);
    for (int q = 0; q < 60; ++q) {
      std::vector<std::pair<double, long>> dist(n);
      for (long i = 0; i < n; ++i) {
        dist[i] = {(train.row(i) - queries.row(q)).squaredNorm(), i};
      }
      std::sort(dist.begin(), dist.end());
      std::map<int, int> votes;
      for (int i = 0; i < k_nn; ++i) ++votes[labels[dist[i].second]];
      int best_count = 0;
      for (const auto& [label, count] : votes) best_count = std::max(best_count, count);
      int want = 0;
      for (int i = 0; i < k_nn; ++i) {
        int label = labels[dist[i].second];
        if (votes[label] == best_count) {
          want = label;
          break;
        }
      }
      CHECK(got[q] == want);
    }
  }
}
