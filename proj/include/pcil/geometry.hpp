#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pcil/errors.hpp"

namespace pcil {

using Point = std::array<double, 3>;

inline double squared_dist(const Point& a, const Point& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

inline double norm(const Point& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

struct PointCloud {
  std::vector<Point> points;
  int label = -1;

  std::size_t size() const { return points.size(); }
};

// Mean-center and scale so the farthest point sits on the unit sphere.
// Idempotent and invariant to translation plus uniform scaling.
inline PointCloud normalize(const PointCloud& cloud) {
  if (cloud.points.empty()) throw NormalizationError("normalize: empty cloud");
  for (const Point& p : cloud.points) {
    for (double c : p) {
      if (!std::isfinite(c)) throw NormalizationError("normalize: non-finite coordinate");
    }
  }
  Point mean{0.0, 0.0, 0.0};
  for (const Point& p : cloud.points) {
    mean[0] += p[0];
    mean[1] += p[1];
    mean[2] += p[2];
  }
  const double inv = 1.0 / static_cast<double>(cloud.points.size());
  mean[0] *= inv;
  mean[1] *= inv;
  mean[2] *= inv;
  PointCloud out;
  out.label = cloud.label;
  out.points.resize(cloud.points.size());
  double max_norm = 0.0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    out.points[i] = {cloud.points[i][0] - mean[0], cloud.points[i][1] - mean[1],
                     cloud.points[i][2] - mean[2]};
    max_norm = std::max(max_norm, norm(out.points[i]));
  }
  if (max_norm <= 0.0) throw NormalizationError("normalize: degenerate cloud, all points identical");
  const double scale = 1.0 / max_norm;
  for (Point& p : out.points) {
    p[0] *= scale;
    p[1] *= scale;
    p[2] *= scale;
  }
  return out;
}

inline bool is_normalized(const PointCloud& cloud, double tol = 1e-3) {
  double max_norm = 0.0;
  for (const Point& p : cloud.points) max_norm = std::max(max_norm, norm(p));
  return max_norm <= 1.0 + tol;
}

namespace detail {

inline bool lex_less(const Point& a, const Point& b) {
  if (a[0] != b[0]) return a[0] < b[0];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[2] < b[2];
}

// (score, point) argmax with deterministic ties: higher score wins, then the
// lexicographically smaller coordinate, then the lower index. The coordinate
// tie step makes the choice independent of the input point order.
inline bool argmax_improves(double score, const Point& p, double best_score, const Point& best_p) {
  if (score != best_score) return score > best_score;
  return lex_less(p, best_p);
}

}  // namespace detail

// Farthest point sampling with a canonical start: the point farthest from the
// cloud mean seeds the selection, then each pick maximizes the minimum squared
// distance to the chosen set. The mean is accumulated in lexicographic point
// order so the result is a permutation-invariant set of coordinates.
inline std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t count) {
  const std::size_t u = cloud.size();
  if (count < 1 || count > u) {
    throw SamplingError("farthest_point_sampling: requested " + std::to_string(count) +
                        " of " + std::to_string(u) + " points");
  }
  std::vector<std::size_t> order(u);
  for (std::size_t i = 0; i < u; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (detail::lex_less(cloud.points[a], cloud.points[b])) return true;
    if (detail::lex_less(cloud.points[b], cloud.points[a])) return false;
    return a < b;
  });
  Point mean{0.0, 0.0, 0.0};
  for (std::size_t i : order) {
    mean[0] += cloud.points[i][0];
    mean[1] += cloud.points[i][1];
    mean[2] += cloud.points[i][2];
  }
  const double inv = 1.0 / static_cast<double>(u);
  mean[0] *= inv;
  mean[1] *= inv;
  mean[2] *= inv;

  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  std::size_t best = 0;
  bool have_best = false;
  for (std::size_t i = 0; i < u; ++i) {
    const double score = squared_dist(cloud.points[i], mean);
    if (!have_best ||
        detail::argmax_improves(score, cloud.points[i], squared_dist(cloud.points[best], mean),
                                cloud.points[best])) {
      best = i;
      have_best = true;
    }
  }
  chosen.push_back(best);

  std::vector<bool> used(u, false);
  used[best] = true;
  std::vector<double> min_dist(u);
  for (std::size_t i = 0; i < u; ++i) min_dist[i] = squared_dist(cloud.points[i], cloud.points[best]);
  while (chosen.size() < count) {
    std::size_t pick = 0;
    bool have_pick = false;
    for (std::size_t i = 0; i < u; ++i) {
      if (used[i]) continue;
      if (!have_pick || detail::argmax_improves(min_dist[i], cloud.points[i], min_dist[pick],
                                                cloud.points[pick])) {
        pick = i;
        have_pick = true;
      }
    }
    chosen.push_back(pick);
    used[pick] = true;
    for (std::size_t i = 0; i < u; ++i) {
      min_dist[i] = std::min(min_dist[i], squared_dist(cloud.points[i], cloud.points[pick]));
    }
  }
  return chosen;
}

// Indices of the k nearest points to an arbitrary query location, sorted by
// (squared distance, index). Exhaustive scan; clouds stay small at this scale.
inline std::vector<std::size_t> knn(const PointCloud& cloud, const Point& query, std::size_t k) {
  const std::size_t u = cloud.size();
  if (k < 1 || k > u) {
    throw NeighborhoodError("knn: requested " + std::to_string(k) + " of " + std::to_string(u) +
                            " points");
  }
  std::vector<std::pair<double, std::size_t>> ranked(u);
  for (std::size_t i = 0; i < u; ++i) ranked[i] = {squared_dist(cloud.points[i], query), i};
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = ranked[i].second;
  return out;
}

}  // namespace pcil
