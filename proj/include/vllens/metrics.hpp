#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "vllens/dump.hpp"
#include "vllens/error.hpp"
#include "vllens/registry.hpp"

namespace vllens {

/// Fractional ranks (1-based); tied entries share the average of their ranks.
template <typename Derived>
Eigen::Matrix<double, Eigen::Dynamic, 1> average_ranks(const Eigen::DenseBase<Derived>& x) {
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a) < x(b); });

  Eigen::Matrix<double, Eigen::Dynamic, 1> ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i + 1;
    while (j < n && !(x(order[i]) < x(order[j]))) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (Eigen::Index k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

/// Spearman rank correlation: Pearson correlation of average ranks.
/// Throws LengthMismatch; returns nullopt (degenerate) when either input is
/// constant or shorter than two.
template <typename DerivedX, typename DerivedY>
std::optional<double> spearman(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  if (x.size() != y.size()) throw LengthMismatch("spearman: inputs have different lengths");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = 0.5 * static_cast<double>(x.size() + 1);
  const Eigen::VectorXd dx = rx.array() - mean;
  const Eigen::VectorXd dy = ry.array() - mean;
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  const double r = dx.dot(dy) / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

/// Fraction of each patch's pixels inside the mask. Patch (r, c) covers pixel
/// rows [floor(r*H/R), floor((r+1)*H/R)) and the analogous columns.
Eigen::MatrixXd mask_to_patch_grid(const BitImage& mask, int grid_rows, int grid_cols);

/// Mean Spearman correlation, over masked LANGUAGE tokens, between each mask's
/// patch fractions and the vision-query attention column of that token.
std::optional<double> person_alignment_metric(const ExampleRecord& ex, int layer, int head);

inline constexpr const char* kPersonAlignmentMetric = "spearman_person_alignment";

/// Built-in block means plus the mask-alignment metric.
MetricRegistry standard_registry();

}  // namespace vllens
