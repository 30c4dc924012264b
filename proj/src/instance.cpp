// SPDX-License-Identifier: Apache-2.0
#include "egoseg/instance.hpp"

#include <cmath>
#include <limits>

namespace egoseg {

namespace {

// rows <= cols. Dual potentials u (rows) and v (cols); each row is inserted by
// a Dijkstra-like search for the cheapest augmenting path in reduced costs.
std::vector<int> assign_wide(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Index 0 is a virtual column/row; real ones are 1-based.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  std::vector<double> min_slack(m + 1);
  std::vector<char> used(m + 1);

  for (std::size_t row = 1; row <= n; ++row) {
    owner[0] = row;
    std::size_t col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = owner[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= m; ++c) {
        if (used[c]) continue;
        const double reduced = cost(static_cast<Eigen::Index>(r0 - 1), static_cast<Eigen::Index>(c - 1)) - u[r0] - v[c];
        if (reduced < min_slack[c]) {
          min_slack[c] = reduced;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= m; ++c) {
        if (used[c]) {
          u[owner[c]] += delta;
          v[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (owner[col0] != 0);
    // Flip the augmenting path.
    do {
      const std::size_t col1 = way[col0];
      owner[col0] = owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<int> row_to_col(n, -1);
  for (std::size_t c = 1; c <= m; ++c)
    if (owner[c] != 0) row_to_col[owner[c] - 1] = static_cast<int>(c - 1);
  return row_to_col;
}

}  // namespace

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw std::invalid_argument("solve_assignment: costs must be finite");
  if (cost.rows() == 0 || cost.cols() == 0) return std::vector<int>(static_cast<std::size_t>(cost.rows()), -1);
  if (cost.rows() <= cost.cols()) return assign_wide(cost);

  const std::vector<int> col_to_row = assign_wide(cost.transpose());
  std::vector<int> row_to_col(static_cast<std::size_t>(cost.rows()), -1);
  for (std::size_t c = 0; c < col_to_row.size(); ++c)
    if (col_to_row[c] >= 0) row_to_col[static_cast<std::size_t>(col_to_row[c])] = static_cast<int>(c);
  return row_to_col;
}

InstanceReport associate(const Eigen::Matrix2Xd& gt_centroids, const Eigen::Matrix2Xd& pred_centroids,
                         double gate) {
  const Eigen::Index g = gt_centroids.cols();
  const Eigen::Index p = pred_centroids.cols();
  Eigen::MatrixXd cost(g, p);
  for (Eigen::Index i = 0; i < g; ++i)
    for (Eigen::Index j = 0; j < p; ++j) cost(i, j) = (gt_centroids.col(i) - pred_centroids.col(j)).norm();

  InstanceReport report;
  const std::vector<int> assignment = solve_assignment(cost);
  for (Eigen::Index i = 0; i < g; ++i) {
    const int j = assignment[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    const double d = cost(i, j);
    report.assigned_cost += d;
    if (d <= gate) report.matches.push_back({static_cast<int>(i), j, d});
  }
  report.tp = report.matches.size();
  report.fp = static_cast<std::size_t>(p) - report.tp;
  report.fn = static_cast<std::size_t>(g) - report.tp;
  return report;
}

}  // namespace egoseg
