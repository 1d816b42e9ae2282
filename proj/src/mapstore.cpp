#include "dloc/mapstore.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "dloc/kdtree.hpp"

namespace dloc::mapstore {

namespace {

std::vector<Vec3> reject_outliers(const std::vector<Vec3>& pts, int k, double mult) {
  if (pts.size() <= static_cast<size_t>(k) + 1) return pts;
  KdTree3 tree(pts);
  std::vector<double> mean_dist(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    auto nn = tree.knearest(pts[i], static_cast<size_t>(k) + 1);  // first is self
    double sum = 0.0;
    size_t n = 0;
    for (const auto& h : nn) {
      if (h.index == i) continue;
      sum += std::sqrt(h.dist2);
      ++n;
    }
    mean_dist[i] = n ? sum / double(n) : 0.0;
  }
  double mu = 0.0;
  for (double d : mean_dist) mu += d;
  mu /= double(mean_dist.size());
  double var = 0.0;
  for (double d : mean_dist) var += (d - mu) * (d - mu);
  var /= double(mean_dist.size());
  double limit = mu + mult * std::sqrt(var);
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (size_t i = 0; i < pts.size(); ++i)
    if (mean_dist[i] <= limit) out.push_back(pts[i]);
  return out;
}

std::vector<Vec3> median_smooth(const std::vector<Vec3>& pts, int k, double max_shift) {
  if (pts.size() <= static_cast<size_t>(k)) return pts;
  KdTree3 tree(pts);
  std::vector<Vec3> out(pts.size());
  std::vector<double> vals;
  for (size_t i = 0; i < pts.size(); ++i) {
    auto nn = tree.knearest(pts[i], static_cast<size_t>(k) + 1);  // neighborhood incl. self
    Vec3 med;
    for (int a = 0; a < 3; ++a) {
      vals.clear();
      for (const auto& h : nn) vals.push_back(tree.point(h.index)[a]);
      size_t mid = vals.size() / 2;
      std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
      med[a] = vals[mid];
    }
    // Large shifts mean the median jumped across a structural edge; keep the
    // original point there so smoothing only eats noise.
    out[i] = (med - pts[i]).norm() <= max_shift ? med : pts[i];
  }
  return out;
}

std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& pts, double cell) {
  if (pts.empty()) return pts;
  Vec3 mn = pts[0];
  for (const Vec3& p : pts) mn = mn.cwiseMin(p);
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = std::floor(mn[a] / cell) * cell;
  struct Accum {
    Vec3 sum = Vec3::Zero();
    uint32_t count = 0;
  };
  std::unordered_map<uint64_t, Accum> cells;
  cells.reserve(pts.size());
  std::vector<uint64_t> order;
  order.reserve(pts.size());
  for (const Vec3& p : pts) {
    Eigen::Vector3i idx;
    for (int a = 0; a < 3; ++a)
      idx[a] = static_cast<int>(std::max(0.0, std::floor((p[a] - origin[a]) / cell)));
    uint64_t key = morton::encode(idx.x(), idx.y(), idx.z());
    auto [it, fresh] = cells.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.sum += p;
    it->second.count += 1;
  }
  std::vector<Vec3> out;
  out.reserve(order.size());
  for (uint64_t key : order) {
    const Accum& a = cells[key];
    out.push_back(a.sum / double(a.count));
  }
  return out;
}

}  // namespace

RawCloud preprocess(const RawCloud& raw, const FilterConfig& cfg) {
  if (raw.empty()) throw std::invalid_argument("preprocess: empty input cloud");
  std::vector<Vec3> pts = raw.points;
  if (cfg.outlier_rejection) pts = reject_outliers(pts, cfg.outlier_k, cfg.outlier_stddev_mult);
  if (cfg.median_smoothing) pts = median_smooth(pts, cfg.median_k, cfg.median_max_shift);
  if (cfg.voxel_downsample) pts = voxel_downsample(pts, cfg.voxel_size);
  if (pts.empty()) throw EmptyAfterFilter("preprocess: all points rejected");
  RawCloud out;
  out.points = std::move(pts);
  out.scanner_pose_count = raw.scanner_pose_count;
  out.granularity = raw.granularity;
  return out;
}

PlaneCoefficients fit_ground_plane(const RawCloud& raw, const RansacConfig& cfg) {
  if (raw.empty()) throw DegenerateGround("ground fit: empty cloud");
  double z_min = raw.points[0].z(), z_max = z_min;
  for (const Vec3& p : raw.points) {
    z_min = std::min(z_min, p.z());
    z_max = std::max(z_max, p.z());
  }
  double band = std::max(cfg.band_fraction * (z_max - z_min), cfg.band_min_height);
  std::vector<Vec3> low;
  for (const Vec3& p : raw.points)
    if (p.z() <= z_min + band) low.push_back(p);
  if (low.size() < 3) throw DegenerateGround("ground fit: fewer than 3 points in undermost band");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick(0, low.size() - 1);
  size_t best_count = 0;
  Vec3 best_n = Vec3::UnitZ();
  double best_d = 0.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    Vec3 n = (low[j] - low[i]).cross(low[k] - low[i]);
    double norm = n.norm();
    if (norm < 1e-12) continue;
    n /= norm;
    double d = -n.dot(low[i]);
    size_t count = 0;
    for (const Vec3& p : low)
      if (std::abs(n.dot(p) + d) <= cfg.threshold) ++count;
    if (count > best_count) {
      best_count = count;
      best_n = n;
      best_d = d;
    }
  }
  if (double(best_count) < cfg.min_inlier_ratio * double(low.size()))
    throw DegenerateGround("ground fit: inlier ratio below threshold");

  // Least-squares refit on the consensus set.
  Vec3 centroid = Vec3::Zero();
  std::vector<Vec3> inliers;
  for (const Vec3& p : low)
    if (std::abs(best_n.dot(p) + best_d) <= cfg.threshold) {
      inliers.push_back(p);
      centroid += p;
    }
  centroid /= double(inliers.size());
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& p : inliers) {
    Vec3 q = p - centroid;
    scatter += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  Vec3 n = eig.eigenvectors().col(0);  // smallest eigenvalue
  if (n.z() < 0) n = -n;
  n.normalize();
  PlaneCoefficients plane;
  plane.a = n.x();
  plane.b = n.y();
  plane.c = n.z();
  plane.d = -n.dot(centroid);
  return plane;
}

GlobalMap::GlobalMap(VoxelOctree octree, std::optional<PlaneCoefficients> ground)
    : octree_(std::move(octree)), ground_(ground) {
  if (ground_) {
    double cos_tilt = ground_->normal().normalized().dot(Vec3::UnitZ());
    if (cos_tilt < std::cos(30.0 * M_PI / 180.0))
      throw DegenerateGround("ground plane tilted more than 30 degrees from world z");
  }
}

std::optional<Vec3> GlobalMap::nearest_occupied(const Vec3& p) const {
  const VoxelOctree::Leaf* leaf = octree_.nearest_occupied(p);
  if (!leaf) return std::nullopt;
  return octree_.leaf_center(leaf->key);
}

RayHit GlobalMap::cast_ray(const Vec3& origin, const Vec3& dir, double max_range) const {
  if (std::abs(dir.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("cast_ray: direction must be unit length");
  if (!(max_range > 0.0)) throw std::invalid_argument("cast_ray: max_range must be > 0");
  VoxelOctree::RayResult r = octree_.cast_ray(origin, dir, max_range);
  RayHit hit;
  switch (r.outcome) {
    case VoxelOctree::RayOutcome::hit:
      hit.status = RayHit::Status::hit;
      hit.range = r.range;
      hit.point = origin + dir * r.range;
      break;
    case VoxelOctree::RayOutcome::origin_occupied:
      hit.status = RayHit::Status::origin_occupied;
      break;
    case VoxelOctree::RayOutcome::miss:
      hit.status = RayHit::Status::miss;
      break;
  }
  return hit;
}

MapSlab GlobalMap::extract_slab(const Pose& sensor_pose, double d_pla) const {
  if (!(d_pla > 0.0)) throw std::invalid_argument("extract_slab: d_pla must be > 0");
  MapSlab slab;
  slab.source_pose = sensor_pose;
  slab.half_width = d_pla;
  slab.center_height = sensor_pose.position.z();
  Vec3 n = euler_to_rotation(sensor_pose.attitude) * Vec3::UnitZ();
  for (const auto& leaf : octree_.leaves()) {
    Vec3 c = octree_.leaf_center(leaf.key);
    double dist = n.dot(c - sensor_pose.position);
    if (dist >= -d_pla && dist <= d_pla) {
      slab.points.push_back(leaf.mean.cast<double>());
      slab.keys.push_back(leaf.key);
    }
  }
  return slab;
}

MapSlab GlobalMap::cull_occluded(const MapSlab& slab, const Pose& sensor_pose) const {
  MapSlab out;
  out.source_pose = slab.source_pose;
  out.half_width = slab.half_width;
  out.center_height = slab.center_height;
  const Vec3& o = sensor_pose.position;
  const double tol = 1.5 * resolution();
  for (size_t i = 0; i < slab.points.size(); ++i) {
    const Vec3& q = slab.points[i];
    Vec3 delta = q - o;
    double dist = delta.norm();
    if (dist < 1e-9) continue;
    Vec3 dir = delta / dist;
    VoxelOctree::RayResult r = octree_.cast_ray(o, dir, dist + 3.0 * resolution());
    bool visible = false;
    if (r.outcome == VoxelOctree::RayOutcome::hit) {
      visible = r.key == slab.keys[i] || ((o + dir * r.range) - q).norm() <= tol;
    }
    if (visible) {
      out.points.push_back(q);
      out.keys.push_back(slab.keys[i]);
    }
  }
  return out;
}

GlobalMap build_octree(const RawCloud& cloud, double resolution) {
  VoxelOctree::Builder builder(resolution);
  for (const Vec3& p : cloud.points) builder.insert(p, kLeafScanned);
  return GlobalMap(std::move(builder).build(), std::nullopt);
}

GlobalMap inject_ground(const GlobalMap& map, const PlaneCoefficients& plane, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("inject_ground: spacing must be > 0");
  const VoxelOctree& tree = map.octree();
  const double res = map.resolution();
  VoxelOctree::Builder builder(res);
  builder.expand_bounds(map.bbox_min(), map.bbox_max());
  for (const auto& leaf : tree.leaves()) builder.insert(leaf.mean.cast<double>(), leaf.flags);

  const Vec3& lo = map.bbox_min();
  const Vec3& hi = map.bbox_max();
  auto scanned_nearby = [&](const Vec3& g) {
    Eigen::Vector3i c = tree.voxel_of(g);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          Eigen::Vector3i idx = c + Eigen::Vector3i(dx, dy, dz);
          if ((idx.array() < 0).any()) continue;
          const VoxelOctree::Leaf* leaf = tree.find_leaf(idx);
          if (leaf && (leaf->flags & kLeafScanned) &&
              (leaf->mean.cast<double>() - g).norm() <= res)
            return true;
        }
    return false;
  };

  int nx = static_cast<int>(std::floor((hi.x() - lo.x()) / spacing + 1e-9)) + 1;
  int ny = static_cast<int>(std::floor((hi.y() - lo.y()) / spacing + 1e-9)) + 1;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      Vec3 g(lo.x() + ix * spacing, lo.y() + iy * spacing, 0.0);
      g.z() = plane.z_at(g.x(), g.y());
      if (g.z() < lo.z() - res || g.z() > hi.z() + res) continue;
      if (tree.occupied(g)) continue;  // never overwrite an existing leaf
      if (scanned_nearby(g)) continue;
      builder.insert(g, kLeafInjectedGround);
    }
  return GlobalMap(std::move(builder).build(), plane);
}

GlobalMap build_global_map(const RawCloud& raw, const MapBuildConfig& cfg) {
  if (cfg.resolution < 0.02 || cfg.resolution > 0.5)
    throw std::invalid_argument("map resolution out of range [0.02, 0.5]");
  FilterConfig filter = cfg.filter;
  filter.voxel_size = cfg.resolution;
  RawCloud clean = preprocess(raw, filter);

  RansacConfig ransac = cfg.ransac;
  ransac.threshold = cfg.resolution / 2.0;
  if (!cfg.ground_injection) {
    return build_octree(clean, cfg.resolution);
  }
  PlaneCoefficients plane = fit_ground_plane(clean, ransac);
  GlobalMap scanned = build_octree(clean, cfg.resolution);
  double spacing = cfg.ground_spacing > 0.0 ? cfg.ground_spacing : cfg.resolution;
  return inject_ground(scanned, plane, spacing);
}

// --- serialization -----------------------------------------------------

namespace {
constexpr char kMagic[8] = {'D', 'L', 'O', 'C', 'M', 'A', 'P', '1'};

template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void GlobalMap::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open map file for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put(os, resolution());
  for (int a = 0; a < 3; ++a) put(os, bbox_min()[a]);
  for (int a = 0; a < 3; ++a) put(os, bbox_max()[a]);
  put(os, static_cast<uint64_t>(leaf_count()));
  for (const auto& leaf : octree_.leaves()) {
    put(os, leaf.key);
    put(os, leaf.flags);
    for (int a = 0; a < 3; ++a) put(os, leaf.mean[a]);
  }
  if (!os) throw std::runtime_error("failed writing map file: " + path);
}

GlobalMap GlobalMap::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open map file: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a DLOCMAP1 file: " + path);
  double res = get<double>(is);
  Vec3 lo, hi;
  for (int a = 0; a < 3; ++a) lo[a] = get<double>(is);
  for (int a = 0; a < 3; ++a) hi[a] = get<double>(is);
  uint64_t count = get<uint64_t>(is);
  std::vector<VoxelOctree::Leaf> leaves(count);
  for (auto& leaf : leaves) {
    leaf.key = get<uint64_t>(is);
    leaf.flags = get<uint8_t>(is);
    for (int a = 0; a < 3; ++a) leaf.mean[a] = get<float>(is);
  }
  if (!is) throw std::runtime_error("truncated map file: " + path);
  return GlobalMap(VoxelOctree::from_leaves(res, lo, hi, std::move(leaves)), std::nullopt);
}

}  // namespace dloc::mapstore
