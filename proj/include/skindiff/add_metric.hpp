#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "skindiff/geometry.hpp"

namespace skindiff {

inline constexpr std::size_t kModelPoints = 512;

/// Average distance of model points: (1/M) sum_j |T(q_est) p_j - T(q_gt) p_j|.
inline double add_error(const std::vector<Vec2>& points, const PlanarPose& q_est, const PlanarPose& q_gt) {
  if (points.empty()) throw std::invalid_argument("add_error: no model points");
  // Equal headings: every point moves by the same vector, so the mean is its length exactly.
  if (q_est.c == q_gt.c && q_est.s == q_gt.s) return std::hypot(q_est.x - q_gt.x, q_est.y - q_gt.y);
  double sum = 0.0;
  for (const auto& p : points) sum += (transform_point(q_est, p) - transform_point(q_gt, p)).norm();
  return sum / static_cast<double>(points.size());
}

}  // namespace skindiff
