// SPDX-License-Identifier: Apache-2.0
//
// Moving-instance formation (DBSCAN + centroids) and optimal one-to-one
// association of predicted and ground-truth instances.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace egoseg {

struct ClusterConfig {
  double eps = 2.0;    // m, neighborhood radius (inclusive)
  int min_pts = 2;     // neighbors incl. the point itself for a core point
  double gate = 2.5;   // m, max centroid distance of a true positive
};

inline constexpr int kNoise = -1;

/// DBSCAN over 2 x n positions. Cluster ids follow first-core-point order.
/// A border point joins the cluster of its nearest core neighbor, so the
/// partition does not depend on input order.
template <typename Derived>
std::vector<int> dbscan(const Eigen::MatrixBase<Derived>& points, const ClusterConfig& config) {
  static_assert(Derived::RowsAtCompileTime == 2 || Derived::RowsAtCompileTime == Eigen::Dynamic);
  if (!(config.eps > 0.0) || config.min_pts < 1) throw std::invalid_argument("dbscan: invalid config");
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = points.cols();
  const Scalar eps2 = static_cast<Scalar>(config.eps * config.eps);

  std::vector<std::vector<Eigen::Index>> neighbors(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if ((points.col(i) - points.col(j)).squaredNorm() <= eps2)
        neighbors[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  std::vector<char> core(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    core[static_cast<std::size_t>(i)] =
        static_cast<int>(neighbors[static_cast<std::size_t>(i)].size()) >= config.min_pts;

  std::vector<int> labels(static_cast<std::size_t>(n), kNoise);
  int next_id = 0;
  std::vector<Eigen::Index> stack;
  for (Eigen::Index seed = 0; seed < n; ++seed) {
    const auto s = static_cast<std::size_t>(seed);
    if (!core[s] || labels[s] != kNoise) continue;
    labels[s] = next_id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const auto cur = static_cast<std::size_t>(stack.back());
      stack.pop_back();
      for (Eigen::Index nb : neighbors[cur]) {
        const auto k = static_cast<std::size_t>(nb);
        if (core[k] && labels[k] == kNoise) {
          labels[k] = next_id;
          stack.push_back(nb);
        }
      }
    }
    ++next_id;
  }

  // Border points: nearest core neighbor, ties broken by core position.
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    if (core[si]) continue;
    Eigen::Index best = -1;
    Scalar best_d2 = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index nb : neighbors[si]) {
      if (!core[static_cast<std::size_t>(nb)]) continue;
      const Scalar d2 = (points.col(i) - points.col(nb)).squaredNorm();
      const bool closer = d2 < best_d2;
      const bool tie_wins =
          d2 == best_d2 && best >= 0 &&
          std::make_pair(points(0, nb), points(1, nb)) < std::make_pair(points(0, best), points(1, best));
      if (closer || tie_wins) {
        best = nb;
        best_d2 = d2;
      }
    }
    if (best >= 0) labels[si] = labels[static_cast<std::size_t>(best)];
  }
  return labels;
}

/// Mean position of each cluster (2 x cluster_count); noise is ignored.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 2, Eigen::Dynamic> clusters_to_centroids(
    const Eigen::MatrixBase<Derived>& points, const std::vector<int>& labels) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<Eigen::Index>(labels.size()) != points.cols())
    throw std::invalid_argument("clusters_to_centroids: label count differs from point count");
  const int clusters = labels.empty() ? 0 : std::max(0, *std::max_element(labels.begin(), labels.end()) + 1);
  Eigen::Matrix<Scalar, 2, Eigen::Dynamic> sums = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>::Zero(2, clusters);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> counts = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) continue;
    sums.col(labels[i]) += points.col(static_cast<Eigen::Index>(i));
    counts(labels[i]) += Scalar(1);
  }
  return sums.array().rowwise() / counts.array();
}

/// Minimum-cost one-to-one assignment on a rectangular cost matrix
/// (shortest augmenting paths with dual potentials, Jonker-Volgenant style).
/// Returns, per row, the assigned column or -1 when rows outnumber columns.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

struct MatchedPair {
  int gt = -1;
  int pred = -1;
  double distance = 0.0;
};

/// TP/FP/FN of one frame. Invariants: tp + fp = |pred|, tp + fn = |gt|.
struct InstanceReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::vector<MatchedPair> matches;  // assigned pairs within the gate
  double assigned_cost = 0.0;        // total L2 cost of the optimal assignment, before gating
};

InstanceReport associate(const Eigen::Matrix2Xd& gt_centroids, const Eigen::Matrix2Xd& pred_centroids,
                         double gate);

}  // namespace egoseg
