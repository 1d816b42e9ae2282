#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dloc/geometry.hpp"
#include "dloc/octree.hpp"

namespace dloc::mapstore {

/// Unordered point cloud plus source metadata.
struct RawCloud {
  std::vector<Vec3> points;
  std::vector<float> intensity;  // empty, or one value per point
  int scanner_pose_count = 0;
  double granularity = 0.0;  // meters, informational

  bool empty() const { return points.empty(); }
  size_t size() const { return points.size(); }
};

/// ASCII PLY with vertex properties x y z [intensity].
RawCloud load_ply(const std::string& path);
/// Minimal ASCII PCD: FIELDS x y z, DATA ascii.
RawCloud load_pcd(const std::string& path);
/// Dispatch by extension (.ply / .pcd).
RawCloud load_cloud(const std::string& path);

struct FilterConfig {
  bool outlier_rejection = true;
  int outlier_k = 8;
  double outlier_stddev_mult = 2.0;
  bool median_smoothing = true;
  int median_k = 8;
  double median_max_shift = 0.1;  // keep the original point beyond this shift
  bool voxel_downsample = true;
  double voxel_size = 0.1;
};

struct RansacConfig {
  double threshold = 0.05;  // inlier distance to the candidate plane
  int iterations = 500;
  double min_inlier_ratio = 0.5;
  double band_fraction = 0.05;    // undermost band as fraction of z extent
  double band_min_height = 0.2;   // and never thinner than this
  uint64_t seed = 1;
};

/// Unit-normal plane ax + by + cz + d = 0.
struct PlaneCoefficients {
  double a = 0.0, b = 0.0, c = 1.0, d = 0.0;

  Vec3 normal() const { return {a, b, c}; }
  double signed_distance(const Vec3& p) const { return a * p.x() + b * p.y() + c * p.z() + d; }
  /// z on the plane at (x, y); requires |c| > 0.
  double z_at(double x, double y) const { return -(a * x + b * y + d) / c; }
};

struct EmptyAfterFilter : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateGround : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ordered filter pipeline: statistical outlier rejection, median smoothing,
/// voxel-grid uniform sampling. Output count never exceeds input count.
RawCloud preprocess(const RawCloud& raw, const FilterConfig& cfg);

/// RANSAC plane fit on the undermost band of the cloud, least-squares refit
/// on the inliers, normal flipped into the +z hemisphere.
PlaneCoefficients fit_ground_plane(const RawCloud& raw, const RansacConfig& cfg);

struct RayHit {
  enum class Status { hit, miss, origin_occupied };
  Status status = Status::miss;
  Vec3 point = Vec3::Zero();  // leaf-entry point (valid iff hit)
  double range = 0.0;

  bool hit() const { return status == Status::hit; }
};

/// Map points between two planes parallel to the sensor's x-y plane.
struct MapSlab {
  std::vector<Vec3> points;     // leaf means, world frame
  std::vector<uint64_t> keys;   // matching leaf keys
  double center_height = 0.0;   // sensor z at extraction
  double half_width = 0.0;      // d_pla
  Pose source_pose;

  bool empty() const { return points.empty(); }
  size_t size() const { return points.size(); }
};

/// Filtered octree of the building interior; the single read-only geometry
/// oracle for every estimator. Immutable after construction.
class GlobalMap {
 public:
  GlobalMap() = default;
  GlobalMap(VoxelOctree octree, std::optional<PlaneCoefficients> ground);

  double resolution() const { return octree_.resolution(); }
  const Vec3& bbox_min() const { return octree_.bbox_min(); }
  const Vec3& bbox_max() const { return octree_.bbox_max(); }
  const VoxelOctree& octree() const { return octree_; }
  const std::optional<PlaneCoefficients>& ground_plane() const { return ground_; }
  size_t leaf_count() const { return octree_.leaves().size(); }
  bool empty() const { return octree_.empty(); }

  bool occupied(const Vec3& p) const { return octree_.occupied(p); }
  /// Center of the nearest occupied leaf; nullopt on an empty map.
  std::optional<Vec3> nearest_occupied(const Vec3& p) const;

  /// First occupied leaf along the ray, reported at leaf-entry distance.
  /// `dir` must be unit length.
  RayHit cast_ray(const Vec3& origin, const Vec3& dir, double max_range) const;

  /// Occupied leaves whose center lies within +-d_pla of the sensor's x-y
  /// plane. Empty result signals an out-of-map pose.
  MapSlab extract_slab(const Pose& sensor_pose, double d_pla) const;

  /// Keeps the slab points visible from the sensor position: a point is kept
  /// iff a ray toward it reaches its own leaf, or first hits within 1.5x
  /// resolution of it.
  MapSlab cull_occluded(const MapSlab& slab, const Pose& sensor_pose) const;

  void save(const std::string& path) const;
  static GlobalMap load(const std::string& path);

 private:
  VoxelOctree octree_;
  std::optional<PlaneCoefficients> ground_;
};

/// Octree construction: leaf occupied iff at least one point in its voxel.
GlobalMap build_octree(const RawCloud& cloud, double resolution);

/// Uniform plane samples across the map's x-y bounding box wherever no
/// scanned point lies within one resolution of the plane; injected leaves are
/// flagged and never overwrite scanned ones. Returns the augmented map.
GlobalMap inject_ground(const GlobalMap& map, const PlaneCoefficients& plane, double spacing);

struct MapBuildConfig {
  double resolution = 0.1;  // valid range [0.02, 0.5]
  FilterConfig filter;
  RansacConfig ransac;
  bool ground_injection = true;
  double ground_spacing = 0.0;  // 0 = use resolution
};

/// Full map pipeline: preprocess, fit ground, build octree, inject ground.
GlobalMap build_global_map(const RawCloud& raw, const MapBuildConfig& cfg);

}  // namespace dloc::mapstore
