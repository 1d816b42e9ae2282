#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "dloc/geometry.hpp"
#include "dloc/mapstore.hpp"

namespace dloc::test {

using mapstore::RawCloud;

/// Points sampled on the inside faces of an axis-aligned box [lo, hi],
/// `spacing` apart. Walls only by default; floor/ceiling optional.
inline std::vector<Vec3> box_shell_points(const Vec3& lo, const Vec3& hi, double spacing,
                                          bool with_floor = true, bool with_ceiling = true) {
  std::vector<Vec3> pts;
  auto steps = [&](double a, double b) { return int(std::floor((b - a) / spacing + 1e-9)); };
  int nx = steps(lo.x(), hi.x()), ny = steps(lo.y(), hi.y()), nz = steps(lo.z(), hi.z());
  for (int i = 0; i <= nx; ++i)
    for (int k = 0; k <= nz; ++k) {
      double x = lo.x() + i * spacing, z = lo.z() + k * spacing;
      pts.emplace_back(x, lo.y(), z);
      pts.emplace_back(x, hi.y(), z);
    }
  for (int j = 0; j <= ny; ++j)
    for (int k = 0; k <= nz; ++k) {
      double y = lo.y() + j * spacing, z = lo.z() + k * spacing;
      pts.emplace_back(lo.x(), y, z);
      pts.emplace_back(hi.x(), y, z);
    }
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j) {
      double x = lo.x() + i * spacing, y = lo.y() + j * spacing;
      if (with_floor) pts.emplace_back(x, y, lo.z());
      if (with_ceiling) pts.emplace_back(x, y, hi.z());
    }
  return pts;
}

inline RawCloud as_cloud(std::vector<Vec3> pts) {
  RawCloud c;
  c.points = std::move(pts);
  return c;
}

/// Exact brute-force first-occupied-voxel walker: enumerates every voxel the
/// segment passes through by collecting all axis-plane crossings, visiting
/// intervals in order. Completely independent of the octree traversal.
struct VoxelWalkOracle {
  double res;
  Vec3 origin;  // voxel grid origin (multiples of res)

  std::array<int, 3> voxel_at(const Vec3& p) const {
    return {int(std::floor((p.x() - origin.x()) / res)),
            int(std::floor((p.y() - origin.y()) / res)),
            int(std::floor((p.z() - origin.z()) / res))};
  }

  struct Hit {
    std::array<int, 3> voxel;
    double entry;
  };

  template <typename OccupiedFn>
  std::optional<Hit> first_occupied(const Vec3& o, const Vec3& dir, double max_range,
                                    OccupiedFn occupied) const {
    std::vector<double> ts{0.0, max_range};
    for (int a = 0; a < 3; ++a) {
      if (dir[a] == 0.0) continue;
      double lo = o[a], hi = o[a] + dir[a] * max_range;
      if (lo > hi) std::swap(lo, hi);
      int k0 = int(std::ceil((lo - origin[a]) / res));
      int k1 = int(std::floor((hi - origin[a]) / res));
      for (int k = k0; k <= k1; ++k) {
        double t = (origin[a] + k * res - o[a]) / dir[a];
        if (t > 0.0 && t < max_range) ts.push_back(t);
      }
    }
    std::sort(ts.begin(), ts.end());
    for (size_t i = 0; i + 1 < ts.size(); ++i) {
      if (ts[i + 1] - ts[i] < 1e-15) continue;
      double mid = 0.5 * (ts[i] + ts[i + 1]);
      auto v = voxel_at(o + dir * mid);
      if (occupied(v)) {
        if (i == 0) return Hit{v, 0.0};  // origin voxel itself
        return Hit{v, ts[i]};
      }
    }
    return std::nullopt;
  }
};

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

}  // namespace dloc::test
