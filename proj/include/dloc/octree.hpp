#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dloc/geometry.hpp"

namespace dloc::mapstore {

/// Leaf provenance flags.
inline constexpr uint8_t kLeafScanned = 0x01;
inline constexpr uint8_t kLeafInjectedGround = 0x02;

namespace morton {
uint64_t encode(uint32_t x, uint32_t y, uint32_t z);
void decode(uint64_t code, uint32_t& x, uint32_t& y, uint32_t& z);
}  // namespace morton

/// Sparse voxel octree over occupied leaves at a fixed resolution.
///
/// Leaves are keyed by the morton code of their voxel index relative to the
/// grid origin (the world bounding-box minimum snapped down to a multiple of
/// the resolution, so voxel boundaries sit on multiples of the resolution in
/// world coordinates). Internal levels are kept as hashed occupancy sets,
/// parent code = child code >> 3. Iteration order is canonical (ascending
/// morton), which makes builds and serializations deterministic.
class VoxelOctree {
 public:
  struct Leaf {
    uint64_t key = 0;
    Eigen::Vector3f mean = Eigen::Vector3f::Zero();  // mean of inserted points
    uint8_t flags = 0;
  };

  class Builder {
   public:
    explicit Builder(double resolution);
    /// Grows the bounding box without inserting points.
    void expand_bounds(const Vec3& lo, const Vec3& hi);
    void insert(const Vec3& p, uint8_t flags);
    size_t point_count() const { return points_.size(); }
    VoxelOctree build() &&;

   private:
    double resolution_;
    std::vector<Vec3> points_;
    std::vector<uint8_t> flags_;
    Vec3 bbox_min_, bbox_max_;
    bool has_bounds_ = false;
    friend class VoxelOctree;
  };

  VoxelOctree() = default;

  double resolution() const { return resolution_; }
  const Vec3& bbox_min() const { return bbox_min_; }
  const Vec3& bbox_max() const { return bbox_max_; }
  const Vec3& grid_origin() const { return origin_; }
  int depth() const { return depth_; }
  const std::vector<Leaf>& leaves() const { return leaves_; }
  bool empty() const { return leaves_.empty(); }

  Eigen::Vector3i voxel_of(const Vec3& p) const;
  Vec3 leaf_center(uint64_t key) const;
  Vec3 voxel_min_corner(const Eigen::Vector3i& idx) const;

  /// True iff the voxel containing p is an occupied leaf.
  bool occupied(const Vec3& p) const;
  const Leaf* find_leaf(uint64_t key) const;
  const Leaf* find_leaf(const Eigen::Vector3i& idx) const;

  /// Nearest occupied leaf to q by distance to the leaf's voxel cube
  /// (best-first descent through the internal levels). nullptr if empty.
  const Leaf* nearest_occupied(const Vec3& q) const;

  enum class RayOutcome { hit, miss, origin_occupied };
  struct RayResult {
    RayOutcome outcome = RayOutcome::miss;
    uint64_t key = 0;     // hit leaf
    double range = 0.0;   // distance along dir to the leaf-entry point
  };

  /// Walks the ray through the leaf grid and reports the first occupied
  /// leaf, at leaf-entry distance. `dir` must be unit length.
  RayResult cast_ray(const Vec3& origin, const Vec3& dir, double max_range) const;

  /// Rebuilds internal state from raw leaf data (deserialization path).
  static VoxelOctree from_leaves(double resolution, const Vec3& bbox_min,
                                 const Vec3& bbox_max, std::vector<Leaf> leaves);

 private:
  void finalize();

  double resolution_ = 0.0;
  Vec3 bbox_min_ = Vec3::Zero(), bbox_max_ = Vec3::Zero();
  Vec3 origin_ = Vec3::Zero();
  int depth_ = 0;

  std::vector<Leaf> leaves_;  // ascending key
  std::unordered_map<uint64_t, uint32_t> index_;
  std::vector<std::unordered_set<uint64_t>> levels_;  // [1..depth_] coarse sets

  // Dense occupancy bitmap over the occupied-voxel bounding grid; used on
  // the ray-cast hot path when the grid is small enough.
  Eigen::Vector3i grid_min_ = Eigen::Vector3i::Zero();
  Eigen::Vector3i grid_max_ = Eigen::Vector3i::Constant(-1);
  std::vector<uint64_t> dense_;
  bool dense_ok_ = false;

  bool occupied_idx(const Eigen::Vector3i& idx) const;
};

}  // namespace dloc::mapstore
