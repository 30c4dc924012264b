// SPDX-License-Identifier: Apache-2.0
// Slow, obviously-correct reference implementations used as test oracles.
#pragma once

#include "egoseg/instance.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

namespace egoseg::testing {

/// Minimum total cost over every injective matching of the smaller side.
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
  const bool wide = cost.rows() <= cost.cols();
  const Eigen::MatrixXd c = wide ? cost : Eigen::MatrixXd(cost.transpose());
  const auto rows = static_cast<int>(c.rows());
  std::vector<int> cols(static_cast<std::size_t>(c.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // Every permutation of the columns; the first `rows` entries form a matching.
  do {
    double total = 0.0;
    for (int r = 0; r < rows; ++r) total += c(r, cols[static_cast<std::size_t>(r)]);
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return rows == 0 ? 0.0 : best;
}

/// DBSCAN by O(n^3) transitive closure of the core-core eps graph. Border
/// points take the cluster of their nearest core neighbor. Ids are arbitrary.
inline std::vector<int> closure_dbscan(const Eigen::Matrix2Xd& pts, double eps, int min_pts) {
  const auto n = static_cast<int>(pts.cols());
  auto near = [&](int i, int j) { return (pts.col(i) - pts.col(j)).norm() <= eps; };
  std::vector<char> core(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int count = 0;
    for (int j = 0; j < n; ++j) count += near(i, j);
    core[static_cast<std::size_t>(i)] = count >= min_pts;
  }
  std::vector<std::vector<char>> reach(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) reach[i][j] = core[i] && core[j] && near(i, j);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = 1;

  std::vector<int> label(static_cast<std::size_t>(n), kNoise);
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    int root = i;
    for (int j = 0; j < i; ++j)
      if (reach[i][j]) {
        root = j;
        break;
      }
    label[i] = root;
  }
  for (int i = 0; i < n; ++i) {
    if (core[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (!core[j] || !near(i, j)) continue;
      const double d = (pts.col(i) - pts.col(j)).norm();
      if (d < best) {
        best = d;
        label[i] = label[j];
      }
    }
  }
  return label;
}

/// True when two labelings describe the same partition with the same noise set.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == kNoise) != (b[i] == kNoise)) return false;
    if (a[i] == kNoise) continue;
    const auto it = ab.emplace(a[i], b[i]).first;
    const auto jt = ba.emplace(b[i], a[i]).first;
    if (it->second != b[i] || jt->second != a[i]) return false;
  }
  return true;
}

}  // namespace egoseg::testing
