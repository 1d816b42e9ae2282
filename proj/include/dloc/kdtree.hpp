#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include "dloc/geometry.hpp"

namespace dloc {

/// Static 3-D kd-tree over a point set, median split, queries by index.
/// Built once, then read-only; safe to query from concurrent tasks.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(std::vector<Vec3> points) { build(std::move(points)); }

  void build(std::vector<Vec3> points) {
    pts_ = std::move(points);
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), uint32_t{0});
    nodes_.clear();
    nodes_.reserve(pts_.size());
    if (!pts_.empty()) root_ = build_rec(0, static_cast<int>(pts_.size()));
  }

  bool empty() const { return pts_.empty(); }
  size_t size() const { return pts_.size(); }
  const Vec3& point(uint32_t i) const { return pts_[i]; }

  struct Hit {
    uint32_t index = 0;
    double dist2 = std::numeric_limits<double>::infinity();
  };

  /// Nearest neighbor; invalid Hit (infinite dist2) on an empty tree.
  Hit nearest(const Vec3& q) const {
    Hit best;
    if (root_ >= 0) nn_rec(root_, q, best);
    return best;
  }

  /// k nearest neighbors sorted by ascending distance.
  std::vector<Hit> knearest(const Vec3& q, size_t k) const {
    if (k == 0 || pts_.empty()) return {};
    std::priority_queue<std::pair<double, uint32_t>> heap;  // max-heap on dist2
    knn_rec(root_, q, k, heap);
    std::vector<Hit> out(heap.size());
    for (size_t i = heap.size(); i-- > 0;) {
      out[i] = {heap.top().second, heap.top().first};
      heap.pop();
    }
    return out;
  }

 private:
  struct Node {
    uint32_t point = 0;
    int32_t left = -1;
    int32_t right = -1;
    uint8_t axis = 0;
  };

  int32_t build_rec(int lo, int hi) {
    if (lo >= hi) return -1;
    Vec3 mn = pts_[order_[lo]], mx = mn;
    for (int i = lo + 1; i < hi; ++i) {
      mn = mn.cwiseMin(pts_[order_[i]]);
      mx = mx.cwiseMax(pts_[order_[i]]);
    }
    int axis = 0;
    Vec3 ext = mx - mn;
    if (ext.y() > ext.x()) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    int mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](uint32_t a, uint32_t b) { return pts_[a][axis] < pts_[b][axis]; });
    Node n;
    n.point = order_[mid];
    n.axis = static_cast<uint8_t>(axis);
    int32_t self = static_cast<int32_t>(nodes_.size());
    nodes_.push_back(n);
    int32_t l = build_rec(lo, mid);
    int32_t r = build_rec(mid + 1, hi);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void nn_rec(int32_t ni, const Vec3& q, Hit& best) const {
    const Node& n = nodes_[ni];
    double d2 = (pts_[n.point] - q).squaredNorm();
    if (d2 < best.dist2) best = {n.point, d2};
    double delta = q[n.axis] - pts_[n.point][n.axis];
    int32_t near = delta < 0 ? n.left : n.right;
    int32_t far = delta < 0 ? n.right : n.left;
    if (near >= 0) nn_rec(near, q, best);
    if (far >= 0 && delta * delta < best.dist2) nn_rec(far, q, best);
  }

  void knn_rec(int32_t ni, const Vec3& q, size_t k,
               std::priority_queue<std::pair<double, uint32_t>>& heap) const {
    const Node& n = nodes_[ni];
    double d2 = (pts_[n.point] - q).squaredNorm();
    if (heap.size() < k) {
      heap.emplace(d2, n.point);
    } else if (d2 < heap.top().first) {
      heap.pop();
      heap.emplace(d2, n.point);
    }
    double delta = q[n.axis] - pts_[n.point][n.axis];
    int32_t near = delta < 0 ? n.left : n.right;
    int32_t far = delta < 0 ? n.right : n.left;
    if (near >= 0) knn_rec(near, q, k, heap);
    if (far >= 0 && (heap.size() < k || delta * delta < heap.top().first))
      knn_rec(far, q, k, heap);
  }

  std::vector<Vec3> pts_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
  int32_t root_ = -1;
};

}  // namespace dloc
