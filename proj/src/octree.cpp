#include "dloc/octree.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace dloc::mapstore {

namespace morton {

namespace {
uint64_t spread(uint64_t v) {
  v &= 0x1fffff;  // 21 bits
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

uint32_t compact(uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v | v >> 2) & 0x10c30c30c30c30c3ULL;
  v = (v | v >> 4) & 0x100f00f00f00f00fULL;
  v = (v | v >> 8) & 0x1f0000ff0000ffULL;
  v = (v | v >> 16) & 0x1f00000000ffffULL;
  v = (v | v >> 32) & 0x1fffffULL;
  return static_cast<uint32_t>(v);
}
}  // namespace

uint64_t encode(uint32_t x, uint32_t y, uint32_t z) {
  return spread(x) | spread(y) << 1 | spread(z) << 2;
}

void decode(uint64_t code, uint32_t& x, uint32_t& y, uint32_t& z) {
  x = compact(code);
  y = compact(code >> 1);
  z = compact(code >> 2);
}

}  // namespace morton

VoxelOctree::Builder::Builder(double resolution) : resolution_(resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("octree resolution must be > 0");
}

void VoxelOctree::Builder::expand_bounds(const Vec3& lo, const Vec3& hi) {
  if (!has_bounds_) {
    bbox_min_ = lo;
    bbox_max_ = hi;
    has_bounds_ = true;
  } else {
    bbox_min_ = bbox_min_.cwiseMin(lo);
    bbox_max_ = bbox_max_.cwiseMax(hi);
  }
}

void VoxelOctree::Builder::insert(const Vec3& p, uint8_t flags) {
  if (!p.allFinite()) throw std::invalid_argument("non-finite point inserted into octree");
  expand_bounds(p, p);
  points_.push_back(p);
  flags_.push_back(flags);
}

VoxelOctree VoxelOctree::Builder::build() && {
  VoxelOctree tree;
  tree.resolution_ = resolution_;
  if (points_.empty()) {
    if (has_bounds_) {
      tree.bbox_min_ = bbox_min_;
      tree.bbox_max_ = bbox_max_;
      for (int a = 0; a < 3; ++a)
        tree.origin_[a] = std::floor(bbox_min_[a] / resolution_) * resolution_;
    }
    return tree;
  }
  tree.bbox_min_ = bbox_min_;
  tree.bbox_max_ = bbox_max_;
  for (int a = 0; a < 3; ++a)
    tree.origin_[a] = std::floor(bbox_min_[a] / resolution_) * resolution_;

  struct Accum {
    Vec3 sum = Vec3::Zero();
    uint32_t count = 0;
    uint8_t flags = 0;
  };
  std::unordered_map<uint64_t, Accum> cells;
  cells.reserve(points_.size());
  for (size_t i = 0; i < points_.size(); ++i) {
    Eigen::Vector3i idx = tree.voxel_of(points_[i]);
    uint64_t key = morton::encode(idx.x(), idx.y(), idx.z());
    Accum& a = cells[key];
    a.sum += points_[i];
    a.count += 1;
    a.flags |= flags_[i];
  }
  tree.leaves_.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    Leaf leaf;
    leaf.key = key;
    leaf.mean = (acc.sum / static_cast<double>(acc.count)).cast<float>();
    leaf.flags = acc.flags;
    tree.leaves_.push_back(leaf);
  }
  std::sort(tree.leaves_.begin(), tree.leaves_.end(),
            [](const Leaf& a, const Leaf& b) { return a.key < b.key; });
  tree.finalize();
  return tree;
}

VoxelOctree VoxelOctree::from_leaves(double resolution, const Vec3& bbox_min,
                                     const Vec3& bbox_max, std::vector<Leaf> leaves) {
  VoxelOctree tree;
  tree.resolution_ = resolution;
  tree.bbox_min_ = bbox_min;
  tree.bbox_max_ = bbox_max;
  for (int a = 0; a < 3; ++a)
    tree.origin_[a] = std::floor(bbox_min[a] / resolution) * resolution;
  std::sort(leaves.begin(), leaves.end(),
            [](const Leaf& a, const Leaf& b) { return a.key < b.key; });
  tree.leaves_ = std::move(leaves);
  if (!tree.leaves_.empty()) tree.finalize();
  return tree;
}

void VoxelOctree::finalize() {
  index_.clear();
  index_.reserve(leaves_.size());
  grid_min_ = Eigen::Vector3i::Constant(INT32_MAX);
  grid_max_ = Eigen::Vector3i::Constant(INT32_MIN);
  uint32_t max_coord = 0;
  for (uint32_t i = 0; i < leaves_.size(); ++i) {
    index_.emplace(leaves_[i].key, i);
    uint32_t x, y, z;
    morton::decode(leaves_[i].key, x, y, z);
    grid_min_ = grid_min_.cwiseMin(Eigen::Vector3i(x, y, z));
    grid_max_ = grid_max_.cwiseMax(Eigen::Vector3i(x, y, z));
    max_coord = std::max({max_coord, x, y, z});
  }
  depth_ = 1;
  while ((1u << depth_) <= max_coord) ++depth_;

  levels_.assign(static_cast<size_t>(depth_) + 1, {});
  for (const Leaf& l : leaves_)
    for (int lv = 1; lv <= depth_; ++lv) levels_[lv].insert(l.key >> (3 * lv));

  // Dense bitmap over the occupied bounding grid if it is reasonably small.
  Eigen::Vector3i ext = grid_max_ - grid_min_ + Eigen::Vector3i::Ones();
  uint64_t cells = uint64_t(ext.x()) * uint64_t(ext.y()) * uint64_t(ext.z());
  dense_ok_ = cells > 0 && cells <= (uint64_t(1) << 28);  // <= 32 MiB of bits
  if (dense_ok_) {
    dense_.assign((cells + 63) / 64, 0);
    for (const Leaf& l : leaves_) {
      uint32_t x, y, z;
      morton::decode(l.key, x, y, z);
      uint64_t lin = (uint64_t(z - grid_min_.z()) * ext.y() + (y - grid_min_.y())) * ext.x() +
                     (x - grid_min_.x());
      dense_[lin >> 6] |= uint64_t(1) << (lin & 63);
    }
  }
}

Eigen::Vector3i VoxelOctree::voxel_of(const Vec3& p) const {
  Eigen::Vector3i idx;
  for (int a = 0; a < 3; ++a) {
    double v = std::floor((p[a] - origin_[a]) / resolution_);
    idx[a] = static_cast<int>(std::max(0.0, v));
  }
  return idx;
}

Vec3 VoxelOctree::voxel_min_corner(const Eigen::Vector3i& idx) const {
  return origin_ + idx.cast<double>() * resolution_;
}

Vec3 VoxelOctree::leaf_center(uint64_t key) const {
  uint32_t x, y, z;
  morton::decode(key, x, y, z);
  return origin_ + (Vec3(x, y, z) + Vec3::Constant(0.5)) * resolution_;
}

bool VoxelOctree::occupied_idx(const Eigen::Vector3i& idx) const {
  if ((idx.array() < grid_min_.array()).any() || (idx.array() > grid_max_.array()).any())
    return false;
  if (dense_ok_) {
    Eigen::Vector3i ext = grid_max_ - grid_min_ + Eigen::Vector3i::Ones();
    uint64_t lin = (uint64_t(idx.z() - grid_min_.z()) * ext.y() + (idx.y() - grid_min_.y())) *
                       ext.x() +
                   (idx.x() - grid_min_.x());
    return (dense_[lin >> 6] >> (lin & 63)) & 1;
  }
  return index_.count(morton::encode(idx.x(), idx.y(), idx.z())) != 0;
}

bool VoxelOctree::occupied(const Vec3& p) const {
  if (leaves_.empty()) return false;
  for (int a = 0; a < 3; ++a)
    if (p[a] < origin_[a]) return false;
  return occupied_idx(voxel_of(p));
}

const VoxelOctree::Leaf* VoxelOctree::find_leaf(uint64_t key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &leaves_[it->second];
}

const VoxelOctree::Leaf* VoxelOctree::find_leaf(const Eigen::Vector3i& idx) const {
  return find_leaf(morton::encode(idx.x(), idx.y(), idx.z()));
}

const VoxelOctree::Leaf* VoxelOctree::nearest_occupied(const Vec3& q) const {
  if (leaves_.empty()) return nullptr;
  // Best-first search over the level hierarchy; priority = squared distance
  // from q to the cell cube.
  struct Entry {
    double d2;
    int level;
    uint64_t code;
    bool operator<(const Entry& o) const { return d2 > o.d2; }
  };
  auto cell_dist2 = [&](int level, uint64_t code) {
    uint32_t x, y, z;
    morton::decode(code, x, y, z);
    double size = resolution_ * double(1u << level);
    double d2 = 0.0;
    Vec3 lo = origin_ + Vec3(x, y, z) * size;
    for (int a = 0; a < 3; ++a) {
      double d = std::max({lo[a] - q[a], q[a] - (lo[a] + size), 0.0});
      d2 += d * d;
    }
    return d2;
  };
  std::priority_queue<Entry> pq;
  pq.push({cell_dist2(depth_, 0), depth_, 0});
  while (!pq.empty()) {
    Entry e = pq.top();
    pq.pop();
    if (e.level == 0) return find_leaf(e.code);
    for (uint64_t child = e.code << 3; child < (e.code << 3) + 8; ++child) {
      bool present = e.level - 1 == 0 ? index_.count(child) != 0
                                      : levels_[e.level - 1].count(child) != 0;
      if (present) pq.push({cell_dist2(e.level - 1, child), e.level - 1, child});
    }
  }
  return nullptr;
}

VoxelOctree::RayResult VoxelOctree::cast_ray(const Vec3& origin, const Vec3& dir,
                                             double max_range) const {
  RayResult res;
  if (leaves_.empty() || !(max_range > 0.0)) return res;

  // Clip to the occupied bounding grid.
  Vec3 lo = voxel_min_corner(grid_min_);
  Vec3 hi = voxel_min_corner(grid_max_) + Vec3::Constant(resolution_);
  double t0 = 0.0, t1 = max_range;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] != 0.0) {
      double ta = (lo[a] - origin[a]) / dir[a];
      double tb = (hi[a] - origin[a]) / dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    } else if (origin[a] < lo[a] || origin[a] > hi[a]) {
      return res;
    }
  }
  if (t0 > t1) return res;

  Vec3 start = origin + dir * t0;
  Eigen::Vector3i idx = voxel_of(start);
  idx = idx.cwiseMax(grid_min_).cwiseMin(grid_max_);

  Eigen::Vector3i step;
  Vec3 t_max, t_delta;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) {
      step[a] = 1;
      t_max[a] = (voxel_min_corner(idx)[a] + resolution_ - origin[a]) / dir[a];
      t_delta[a] = resolution_ / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      t_max[a] = (voxel_min_corner(idx)[a] - origin[a]) / dir[a];
      t_delta[a] = -resolution_ / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  double t_entry = t0;
  bool first = true;
  while (true) {
    if (occupied_idx(idx)) {
      if (first && t0 == 0.0) {
        res.outcome = RayOutcome::origin_occupied;
        return res;
      }
      res.outcome = RayOutcome::hit;
      res.key = morton::encode(idx.x(), idx.y(), idx.z());
      res.range = t_entry;
      return res;
    }
    first = false;
    int a = 0;
    if (t_max.y() < t_max.x()) a = 1;
    if (t_max.z() < t_max[a]) a = 2;
    t_entry = t_max[a];
    if (t_entry > t1) return res;
    idx[a] += step[a];
    if (idx[a] < grid_min_[a] || idx[a] > grid_max_[a]) return res;
    t_max[a] += t_delta[a];
  }
}

}  // namespace dloc::mapstore
