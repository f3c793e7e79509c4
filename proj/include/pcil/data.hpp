#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "pcil/errors.hpp"
#include "pcil/geometry.hpp"
#include "pcil/rng.hpp"
#include "pcil/textio.hpp"

namespace pcil {

inline constexpr std::size_t kShapeClassCount = 10;

inline const char* shape_class_name(int cls) {
  static const char* names[kShapeClassCount] = {
      "sphere", "box",     "cylinder",  "cone",    "torus",
      "ring_plane", "capsule", "ellipsoid", "pyramid", "helix"};
  if (cls < 0 || cls >= static_cast<int>(kShapeClassCount)) {
    throw GenerationError("no shape class " + std::to_string(cls));
  }
  return names[cls];
}

namespace detail {

inline Point unit_dir(Rng& rng) {
  while (true) {
    Point d{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(d);
    if (n > 1e-9) return {d[0] / n, d[1] / n, d[2] / n};
  }
}

inline Point tri_point(const Point& a, const Point& b, const Point& c, Rng& rng) {
  double u = rng.uniform();
  double v = rng.uniform();
  if (u + v > 1.0) {
    u = 1.0 - u;
    v = 1.0 - v;
  }
  return {a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]),
          a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1]),
          a[2] + u * (b[2] - a[2]) + v * (c[2] - a[2])};
}

// Each sampler draws one point on the surface of its primitive; shape
// parameters are drawn per cloud from the class's jitter range.

inline Point sample_sphere(Rng& rng, double r) {
  Point d = unit_dir(rng);
  return {r * d[0], r * d[1], r * d[2]};
}

inline Point sample_ellipsoid(Rng& rng, double a, double b, double c) {
  // Rejection on the area distortion of scaling a sphere sample.
  const double wmax = std::max({a * b, b * c, a * c});
  while (true) {
    Point d = unit_dir(rng);
    const double w = std::sqrt(d[0] * b * c * d[0] * b * c + d[1] * a * c * d[1] * a * c +
                               d[2] * a * b * d[2] * a * b);
    if (rng.uniform() * wmax <= w) return {a * d[0], b * d[1], c * d[2]};
  }
}

inline Point sample_box(Rng& rng, double a, double b, double c) {
  const double fx = b * c, fy = a * c, fz = a * b;  // face areas up to a factor
  const double total = 2.0 * (fx + fy + fz);
  double pick = rng.uniform(0.0, total);
  const double sgn = (rng.uniform() < 0.5) ? -1.0 : 1.0;
  if (pick < 2.0 * fx) {
    return {sgn * a, rng.uniform(-b, b), rng.uniform(-c, c)};
  }
  pick -= 2.0 * fx;
  if (pick < 2.0 * fy) {
    return {rng.uniform(-a, a), sgn * b, rng.uniform(-c, c)};
  }
  return {rng.uniform(-a, a), rng.uniform(-b, b), sgn * c};
}

inline Point sample_cylinder(Rng& rng, double r, double h) {
  const double lateral = 2.0 * std::numbers::pi * r * h;
  const double caps = 2.0 * std::numbers::pi * r * r;
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (rng.uniform(0.0, lateral + caps) < lateral) {
    return {r * std::cos(theta), r * std::sin(theta), rng.uniform(-h / 2, h / 2)};
  }
  const double rad = r * std::sqrt(rng.uniform());
  const double z = (rng.uniform() < 0.5) ? -h / 2 : h / 2;
  return {rad * std::cos(theta), rad * std::sin(theta), z};
}

inline Point sample_cone(Rng& rng, double r, double h) {
  const double slant = std::sqrt(r * r + h * h);
  const double lateral = std::numbers::pi * r * slant;
  const double base = std::numbers::pi * r * r;
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (rng.uniform(0.0, lateral + base) < lateral) {
    const double s = std::sqrt(rng.uniform());  // area grows toward the base rim
    return {r * s * std::cos(theta), r * s * std::sin(theta), h * (1.0 - s)};
  }
  const double rad = r * std::sqrt(rng.uniform());
  return {rad * std::cos(theta), rad * std::sin(theta), 0.0};
}

inline Point sample_torus(Rng& rng, double R, double r) {
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  while (true) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (rng.uniform() * (R + r) <= R + r * std::cos(phi)) {
      const double ring = R + r * std::cos(phi);
      return {ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi)};
    }
  }
}

inline Point sample_ring_plane(Rng& rng, double a, double hole) {
  while (true) {
    const double x = rng.uniform(-a, a);
    const double y = rng.uniform(-a, a);
    if (x * x + y * y >= hole * hole) return {x, y, 0.0};
  }
}

inline Point sample_capsule(Rng& rng, double r, double h) {
  const double lateral = 2.0 * std::numbers::pi * r * h;
  const double hemis = 4.0 * std::numbers::pi * r * r;
  if (rng.uniform(0.0, lateral + hemis) < lateral) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {r * std::cos(theta), r * std::sin(theta), rng.uniform(-h / 2, h / 2)};
  }
  Point d = unit_dir(rng);
  const double zc = (rng.uniform() < 0.5) ? -h / 2 : h / 2;
  const double dz = (zc > 0) ? std::abs(d[2]) : -std::abs(d[2]);
  return {r * d[0], r * d[1], zc + r * dz};
}

inline Point sample_pyramid(Rng& rng, double a, double h) {
  const Point apex{0.0, 0.0, h};
  const Point c0{a, a, 0.0}, c1{-a, a, 0.0}, c2{-a, -a, 0.0}, c3{a, -a, 0.0};
  const double face = a * std::sqrt(h * h + a * a);  // triangle area
  const double base = 4.0 * a * a;
  double pick = rng.uniform(0.0, 4.0 * face + base);
  if (pick < 4.0 * face) {
    const int f = static_cast<int>(pick / face);
    const Point* corners[4][2] = {{&c0, &c1}, {&c1, &c2}, {&c2, &c3}, {&c3, &c0}};
    return tri_point(*corners[f][0], *corners[f][1], apex, rng);
  }
  return {rng.uniform(-a, a), rng.uniform(-a, a), 0.0};
}

inline Point sample_helix(Rng& rng, double R, double pitch, double tube) {
  const double turns = 2.0;
  const double t = rng.uniform(0.0, 2.0 * std::numbers::pi * turns);
  const double alpha = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double speed = std::sqrt(R * R + pitch * pitch);
  // Frame around the curve: inward normal and the tangent-orthogonal binormal.
  const Point n{-std::cos(t), -std::sin(t), 0.0};
  const Point bvec{pitch * std::sin(t) / speed, -pitch * std::cos(t) / speed, R / speed};
  const double cx = R * std::cos(t), cy = R * std::sin(t), cz = pitch * t;
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  return {cx + tube * (ca * n[0] + sa * bvec[0]), cy + tube * (ca * n[1] + sa * bvec[1]),
          cz + tube * (ca * n[2] + sa * bvec[2])};
}

}  // namespace detail

inline PointCloud rotate_z(const PointCloud& cloud, double angle);

// One surface-sampled instance of a shape class, normalized. Parameter jitter
// ranges are pinned per class so instances vary while classes stay separable;
// every instance also gets a random heading about the vertical axis. `clutter`
// replaces that fraction of the points with uniform debris inside the shape's
// own bounding ball, which mimics scan noise without hinting at the class.
inline PointCloud sample_shape(int cls, std::size_t points, std::uint64_t seed,
                               double clutter = 0.0) {
  if (points == 0) throw GenerationError("sample_shape: zero points requested");
  if (!(clutter >= 0.0 && clutter <= 0.5))
    throw GenerationError("sample_shape: clutter fraction must be in [0, 0.5]");
  shape_class_name(cls);  // validates the class id
  Rng rng(seed);
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  PointCloud cloud;
  cloud.label = cls;
  cloud.points.reserve(points);
  switch (cls) {
    case 0: {
      const double r = rng.uniform(0.8, 1.0);
      for (std::size_t i = 0; i < points; ++i) cloud.points.push_back(detail::sample_sphere(rng, r));
      break;
    }
    case 1: {
      const double b = rng.uniform(0.5, 0.62), c = rng.uniform(0.24, 0.34);
      for (std::size_t i = 0; i < points; ++i)
        cloud.points.push_back(detail::sample_box(rng, 1.0, b, c));
      break;
    }
    case 2: {
      const double r = rng.uniform(0.32, 0.4), h = rng.uniform(1.8, 2.1);
      for (std::size_t i = 0; i < points; ++i)
        cloud.points.push_back(detail::sample_cylinder(rng, r, h));
      break;
    }
    case 3: {
      const double r = rng.uniform(0.55, 0.7), h = rng.uniform(1.3, 1.6);
      for (std::size_t i = 0; i < points; ++i) cloud.points.push_back(detail::sample_cone(rng, r, h));
      break;
    }
    case 4: {
      const double R = rng.uniform(0.72, 0.85), r = rng.uniform(0.2, 0.28);
      for (std::size_t i = 0; i < points; ++i) cloud.points.push_back(detail::sample_torus(rng, R, r));
      break;
    }
    case 5: {
      const double hole = rng.uniform(0.35, 0.48);
      for (std::size_t i = 0; i < points; ++i)
        cloud.points.push_back(detail::sample_ring_plane(rng, 1.0, hole));
      break;
    }
    case 6: {
      const double r = rng.uniform(0.42, 0.5), h = rng.uniform(0.7, 0.9);
      for (std::size_t i = 0; i < points; ++i)
        cloud.points.push_back(detail::sample_capsule(rng, r, h));
      break;
    }
    case 7: {
      const double b = rng.uniform(0.68, 0.8), c = rng.uniform(0.45, 0.55);
      for (std::size_t i = 0; i < points; ++i)
        cloud.points.push_back(detail::sample_ellipsoid(rng, 1.0, b, c));
      break;
    }
    case 8: {
      const double a = rng.uniform(0.55, 0.68), h = rng.uniform(1.0, 1.25);
      for (std::size_t i = 0; i < points; ++i)
        cloud.points.push_back(detail::sample_pyramid(rng, a, h));
      break;
    }
    case 9: {
      const double R = rng.uniform(0.5, 0.6), pitch = rng.uniform(0.12, 0.16),
                   tube = rng.uniform(0.06, 0.09);
      for (std::size_t i = 0; i < points; ++i)
        cloud.points.push_back(detail::sample_helix(rng, R, pitch, tube));
      break;
    }
  }
  const auto debris = static_cast<std::size_t>(clutter * static_cast<double>(points) + 0.5);
  if (debris > 0) {
    double rmax = 0.0;
    for (const Point& p : cloud.points) rmax = std::max(rmax, norm(p));
    for (std::size_t i = 0; i < debris; ++i) {
      const Point dir = detail::unit_dir(rng);
      const double r = rmax * std::cbrt(rng.uniform());
      cloud.points[points - debris + i] = {dir[0] * r, dir[1] * r, dir[2] * r};
    }
  }
  return normalize(rotate_z(cloud, heading));
}

struct DatasetSplit {
  std::vector<std::vector<PointCloud>> train;  // [class][instance]
  std::vector<std::vector<PointCloud>> test;
  std::size_t points_per_cloud = 0;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return train.size(); }
};

inline constexpr std::uint64_t kStreamTrain = 0x7261696e;
inline constexpr std::uint64_t kStreamTest = 0x74657374;
inline constexpr std::uint64_t kStreamSchedule = 0x73636564;

// Build the benchmark: `num_classes` shape classes, disjoint train/test
// instance pools, U surface samples per cloud. Fully determined by the seed;
// each cloud gets its own derived stream so counts can change without
// reshuffling earlier clouds.
inline DatasetSplit generate(std::size_t num_classes, std::size_t train_per_class,
                             std::size_t test_per_class, std::size_t points, std::uint64_t seed,
                             double clutter = 0.0) {
  if (num_classes < 1 || num_classes > kShapeClassCount) {
    throw GenerationError("generate: class count must be 1.." +
                          std::to_string(kShapeClassCount) + ", got " +
                          std::to_string(num_classes));
  }
  if (train_per_class < 1 || test_per_class < 1) {
    throw GenerationError("generate: per-class counts must be at least 1");
  }
  if (points < 64) {
    throw GenerationError("generate: at least 64 points per cloud required, got " +
                          std::to_string(points));
  }
  DatasetSplit split;
  split.points_per_cloud = points;
  split.seed = seed;
  split.train.resize(num_classes);
  split.test.resize(num_classes);
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    const std::uint64_t train_base = derive_seed(derive_seed(seed, kStreamTrain), cls);
    const std::uint64_t test_base = derive_seed(derive_seed(seed, kStreamTest), cls);
    for (std::size_t i = 0; i < train_per_class; ++i) {
      split.train[cls].push_back(sample_shape(static_cast<int>(cls), points,
                                              derive_seed(train_base, i), clutter));
    }
    for (std::size_t i = 0; i < test_per_class; ++i) {
      split.test[cls].push_back(sample_shape(static_cast<int>(cls), points,
                                             derive_seed(test_base, i), clutter));
    }
  }
  return split;
}

inline PointCloud rotate_z(const PointCloud& cloud, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  PointCloud out;
  out.label = cloud.label;
  out.points.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    out.points.push_back({c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]});
  }
  return out;
}

inline PointCloud jitter_points(const PointCloud& cloud, double sigma, double clip, Rng& rng) {
  PointCloud out;
  out.label = cloud.label;
  out.points.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    Point q = p;
    for (int c = 0; c < 3; ++c) {
      q[c] += std::clamp(sigma * rng.normal(), -clip, clip);
    }
    out.points.push_back(q);
  }
  return out;
}

// Training-time augmentation: uniform rotation about the vertical axis plus
// clipped Gaussian jitter, then back onto the unit sphere.
inline PointCloud augment(const PointCloud& cloud, std::uint64_t seed) {
  if (!is_normalized(cloud)) throw PreconditionError("augment: cloud must be normalized first");
  Rng rng(seed);
  PointCloud out = rotate_z(cloud, rng.uniform(0.0, 2.0 * std::numbers::pi));
  out = jitter_points(out, 0.01, 0.05, rng);
  return normalize(out);
}

// Assign classes to incremental states: a seeded shuffle of the class ids cut
// into consecutive groups of the scheduled sizes.
inline std::vector<std::vector<int>> incremental_split(const DatasetSplit& split,
                                                       const std::vector<std::size_t>& schedule) {
  if (schedule.empty()) throw ScheduleError("incremental_split: empty schedule");
  std::size_t total = 0;
  for (std::size_t c : schedule) {
    if (c == 0) throw ScheduleError("incremental_split: a state must introduce at least one class");
    total += c;
  }
  if (total != split.num_classes()) {
    throw ScheduleError("incremental_split: schedule covers " + std::to_string(total) +
                        " classes, dataset has " + std::to_string(split.num_classes()));
  }
  std::vector<int> order(split.num_classes());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(derive_seed(split.seed, kStreamSchedule));
  rng.shuffle(order);
  std::vector<std::vector<int>> states;
  std::size_t at = 0;
  for (std::size_t c : schedule) {
    states.emplace_back(order.begin() + at, order.begin() + at + c);
    at += c;
  }
  return states;
}

// ---- rotation-invariant per-cloud statistics and the generator self-test ----

// Eigenvalues of a symmetric 3x3 matrix, descending (trigonometric method).
inline std::array<double, 3> sym3_eigenvalues(double a11, double a22, double a33, double a12,
                                              double a13, double a23) {
  const double p1 = a12 * a12 + a13 * a13 + a23 * a23;
  std::array<double, 3> eig;
  if (p1 == 0.0) {
    eig = {a11, a22, a33};
  } else {
    const double q = (a11 + a22 + a33) / 3.0;
    const double p2 =
        (a11 - q) * (a11 - q) + (a22 - q) * (a22 - q) + (a33 - q) * (a33 - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const double b11 = (a11 - q) / p, b22 = (a22 - q) / p, b33 = (a33 - q) / p;
    const double b12 = a12 / p, b13 = a13 / p, b23 = a23 / p;
    const double detb = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13) +
                        b13 * (b12 * b23 - b22 * b13);
    const double r = std::clamp(detb / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    eig[0] = q + 2.0 * p * std::cos(phi);
    eig[2] = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    eig[1] = 3.0 * q - eig[0] - eig[2];
  }
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

inline constexpr std::size_t kCloudStatCount = 9;

// Summary features that ignore point order and rotation about the vertical
// axis; covariance eigenvalue ratios ignore rotation entirely.
inline std::array<double, kCloudStatCount> cloud_statistics(const PointCloud& cloud) {
  if (cloud.points.empty()) throw GenerationError("cloud_statistics: empty cloud");
  const double n = static_cast<double>(cloud.points.size());
  double sum_norm = 0, sum_norm2 = 0, sum_rxy = 0, sum_rxy2 = 0, sum_z = 0, sum_z2 = 0;
  double min_rxy = std::numeric_limits<double>::infinity();
  double shell = 0;
  Point mean{0, 0, 0};
  for (const Point& p : cloud.points) {
    const double r = norm(p);
    const double rxy = std::hypot(p[0], p[1]);
    sum_norm += r;
    sum_norm2 += r * r;
    sum_rxy += rxy;
    sum_rxy2 += rxy * rxy;
    sum_z += p[2];
    sum_z2 += p[2] * p[2];
    min_rxy = std::min(min_rxy, rxy);
    if (r > 0.95) shell += 1.0;
    mean[0] += p[0];
    mean[1] += p[1];
    mean[2] += p[2];
  }
  mean[0] /= n;
  mean[1] /= n;
  mean[2] /= n;
  double cxx = 0, cyy = 0, czz = 0, cxy = 0, cxz = 0, cyz = 0;
  for (const Point& p : cloud.points) {
    const double dx = p[0] - mean[0], dy = p[1] - mean[1], dz = p[2] - mean[2];
    cxx += dx * dx;
    cyy += dy * dy;
    czz += dz * dz;
    cxy += dx * dy;
    cxz += dx * dz;
    cyz += dy * dz;
  }
  const auto eig = sym3_eigenvalues(cxx / n, cyy / n, czz / n, cxy / n, cxz / n, cyz / n);
  const double lead = std::max(eig[0], 1e-12);
  const auto var = [](double s2, double s, double cnt) {
    return std::max(0.0, s2 / cnt - (s / cnt) * (s / cnt));
  };
  return {sum_norm / n,
          std::sqrt(var(sum_norm2, sum_norm, n)),
          sum_rxy / n,
          std::sqrt(var(sum_rxy2, sum_rxy, n)),
          std::sqrt(var(sum_z2, sum_z, n)),
          min_rxy,
          shell / n,
          eig[1] / lead,
          eig[2] / lead};
}

// Nearest-centroid reference classifier over the statistics above. Good enough
// to certify that the generated classes are separable, and cheap enough to run
// inside the generator self-test.
class StatsOracle {
public:
  static StatsOracle fit(const DatasetSplit& split) {
    StatsOracle o;
    o.mu_.fill(0.0);
    o.sigma_.fill(0.0);
    std::size_t total = 0;
    for (const auto& cls : split.train) total += cls.size();
    if (total == 0) throw GenerationError("oracle fit: empty training split");
    std::vector<std::array<double, kCloudStatCount>> all;
    all.reserve(total);
    for (const auto& cls : split.train) {
      for (const auto& cloud : cls) all.push_back(cloud_statistics(cloud));
    }
    for (const auto& s : all) {
      for (std::size_t d = 0; d < kCloudStatCount; ++d) o.mu_[d] += s[d];
    }
    for (double& m : o.mu_) m /= static_cast<double>(total);
    for (const auto& s : all) {
      for (std::size_t d = 0; d < kCloudStatCount; ++d) {
        o.sigma_[d] += (s[d] - o.mu_[d]) * (s[d] - o.mu_[d]);
      }
    }
    for (double& v : o.sigma_) v = std::max(std::sqrt(v / static_cast<double>(total)), 1e-9);
    o.centroids_.assign(split.num_classes(), {});
    std::size_t at = 0;
    for (std::size_t cls = 0; cls < split.num_classes(); ++cls) {
      auto& c = o.centroids_[cls];
      c.fill(0.0);
      for (std::size_t i = 0; i < split.train[cls].size(); ++i, ++at) {
        for (std::size_t d = 0; d < kCloudStatCount; ++d) {
          c[d] += (all[at][d] - o.mu_[d]) / o.sigma_[d];
        }
      }
      for (double& v : c) v /= static_cast<double>(split.train[cls].size());
    }
    return o;
  }

  int classify(const PointCloud& cloud) const {
    const auto s = cloud_statistics(cloud);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t cls = 0; cls < centroids_.size(); ++cls) {
      double d2 = 0;
      for (std::size_t d = 0; d < kCloudStatCount; ++d) {
        const double z = (s[d] - mu_[d]) / sigma_[d] - centroids_[cls][d];
        d2 += z * z;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = static_cast<int>(cls);
      }
    }
    return best;
  }

  double test_accuracy(const DatasetSplit& split) const {
    std::size_t hits = 0, total = 0;
    for (std::size_t cls = 0; cls < split.num_classes(); ++cls) {
      for (const auto& cloud : split.test[cls]) {
        hits += (classify(cloud) == static_cast<int>(cls)) ? 1 : 0;
        ++total;
      }
    }
    if (total == 0) throw GenerationError("oracle accuracy: empty test split");
    return static_cast<double>(hits) / static_cast<double>(total);
  }

private:
  std::array<double, kCloudStatCount> mu_{}, sigma_{};
  std::vector<std::array<double, kCloudStatCount>> centroids_;
};

// ---- plain-text cloud files and the dataset manifest ----

inline void save_cloud(std::ostream& out, const PointCloud& cloud) {
  out << "pcd " << cloud.points.size() << ' ' << cloud.label << '\n';
  for (const Point& p : cloud.points) {
    out << detail::fmt_double(p[0]) << ' ' << detail::fmt_double(p[1]) << ' '
        << detail::fmt_double(p[2]) << '\n';
  }
}

inline void save_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  save_cloud(out, cloud);
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

inline PointCloud load_cloud(std::istream& in) {
  detail::LineReader r{in};
  std::vector<std::string> tok;
  if (!r.next(tok)) throw ParseError("line 1: empty cloud file");
  if (tok.size() != 3 || tok[0] != "pcd") r.fail("expected header 'pcd <count> <label>'");
  const long count = detail::parse_long(tok[1], r.line_no);
  if (count < 1) r.fail("point count must be positive");
  PointCloud cloud;
  cloud.label = static_cast<int>(detail::parse_long(tok[2], r.line_no));
  cloud.points.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    if (!r.next(tok)) {
      throw ParseError("line " + std::to_string(r.line_no + 1) + ": expected point " +
                       std::to_string(i + 1) + " of " + std::to_string(count) +
                       ", found end of file");
    }
    if (tok.size() != 3) r.fail("expected three coordinates");
    cloud.points.push_back({detail::parse_double(tok[0], r.line_no),
                            detail::parse_double(tok[1], r.line_no),
                            detail::parse_double(tok[2], r.line_no)});
  }
  if (r.next(tok)) r.fail("trailing content after the declared " + std::to_string(count) + " points");
  return cloud;
}

inline PointCloud load_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return load_cloud(in);
}

// The manifest lists every cloud file with its class and split so a dataset
// written to a directory can be reloaded (or swapped for externally converted
// data in the same format).
inline void save_dataset(const std::string& dir, const DatasetSplit& split) {
  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw IoError("cannot write " + dir + "/manifest.txt");
  manifest << "pcd-manifest 1\n";
  manifest << "classes " << split.num_classes() << '\n';
  manifest << "points " << split.points_per_cloud << '\n';
  manifest << "seed " << split.seed << '\n';
  for (std::size_t cls = 0; cls < split.num_classes(); ++cls) {
    for (std::size_t which = 0; which < 2; ++which) {
      const auto& pool = which == 0 ? split.train[cls] : split.test[cls];
      const char* tag = which == 0 ? "train" : "test";
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const std::string name = std::string(shape_class_name(static_cast<int>(cls))) + "_" + tag +
                                 "_" + std::to_string(i) + ".pcd";
        save_cloud(dir + "/" + name, pool[i]);
        manifest << cls << ' ' << tag << ' ' << name << '\n';
      }
    }
  }
  manifest.flush();
  if (!manifest) throw IoError("write failed for " + dir + "/manifest.txt");
}

inline DatasetSplit load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot read " + manifest_path);
  const std::string dir = manifest_path.substr(0, manifest_path.find_last_of('/') + 1);
  detail::LineReader r{in};
  std::vector<std::string> tok;
  if (!r.next(tok) || tok.size() != 2 || tok[0] != "pcd-manifest" || tok[1] != "1") {
    throw ParseError("line 1: not a dataset manifest");
  }
  DatasetSplit split;
  if (!r.next(tok) || tok.size() != 2 || tok[0] != "classes") r.fail("expected classes record");
  const long classes = detail::parse_long(tok[1], r.line_no);
  if (classes < 1) r.fail("class count must be positive");
  if (!r.next(tok) || tok.size() != 2 || tok[0] != "points") r.fail("expected points record");
  split.points_per_cloud = static_cast<std::size_t>(detail::parse_long(tok[1], r.line_no));
  if (!r.next(tok) || tok.size() != 2 || tok[0] != "seed") r.fail("expected seed record");
  split.seed = static_cast<std::uint64_t>(detail::parse_long(tok[1], r.line_no));
  split.train.resize(static_cast<std::size_t>(classes));
  split.test.resize(static_cast<std::size_t>(classes));
  while (r.next(tok)) {
    if (tok.size() != 3) r.fail("expected '<class> <train|test> <file>'");
    const long cls = detail::parse_long(tok[0], r.line_no);
    if (cls < 0 || cls >= classes) r.fail("class id out of range");
    PointCloud cloud = load_cloud(dir + tok[2]);
    if (cloud.points.size() != split.points_per_cloud) {
      r.fail("cloud " + tok[2] + " has " + std::to_string(cloud.points.size()) +
             " points, manifest declares " + std::to_string(split.points_per_cloud));
    }
    if (tok[1] == "train") {
      split.train[static_cast<std::size_t>(cls)].push_back(std::move(cloud));
    } else if (tok[1] == "test") {
      split.test[static_cast<std::size_t>(cls)].push_back(std::move(cloud));
    } else {
      r.fail("split must be 'train' or 'test', got '" + tok[1] + "'");
    }
  }
  for (long cls = 0; cls < classes; ++cls) {
    if (split.train[static_cast<std::size_t>(cls)].empty() ||
        split.test[static_cast<std::size_t>(cls)].empty()) {
      throw ParseError("manifest is missing train or test clouds for class " + std::to_string(cls));
    }
  }
  return split;
}

}  // namespace pcil
