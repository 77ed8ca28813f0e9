#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "xformtree/mat4.hpp"

namespace xformtree::detail {

/// Exact nearest-neighbor search over a fixed 3D point set.
/// Median-split k-d tree, axis cycling with depth.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) root_ = build(0, order_.size(), 0);
  }

  std::size_t size() const { return points_.size(); }

  struct Hit {
    std::size_t index = static_cast<std::size_t>(-1);
    double distance_sq = std::numeric_limits<double>::infinity();
    bool found() const { return index != static_cast<std::size_t>(-1); }
  };

  /// Closest stored point to `q`. With `max_distance` set, only points
  /// strictly within that radius qualify.
  Hit nearest(const Vec3& q,
              double max_distance = std::numeric_limits<double>::infinity()) const {
    Hit best;
    if (max_distance < std::numeric_limits<double>::infinity())
      best.distance_sq = max_distance * max_distance;
    if (root_ >= 0) search(root_, q, best);
    if (best.index == static_cast<std::size_t>(-1)) return {};
    return best;
  }

  const Vec3& point(std::size_t index) const { return points_[index]; }

 private:
  struct Node {
    std::size_t point = 0;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  static double axis_value(const Vec3& p, int axis) {
    return axis == 0 ? p.x : axis == 1 ? p.y : p.z;
  }

  int build(std::size_t begin, std::size_t end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % 3;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end, [&](std::size_t a, std::size_t b) {
                       return axis_value(points_[a], axis) <
                              axis_value(points_[b], axis);
                     });
    Node n;
    n.point = order_[mid];
    n.axis = axis;
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid + 1, end, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search(int idx, const Vec3& q, Hit& best) const {
    const Node& n = nodes_[idx];
    const Vec3& p = points_[n.point];
    const Vec3 d = p - q;
    const double dist_sq = dot(d, d);
    if (dist_sq < best.distance_sq) {
      best.distance_sq = dist_sq;
      best.index = n.point;
    }
    const double delta = axis_value(q, n.axis) - axis_value(p, n.axis);
    const int near = delta < 0 ? n.left : n.right;
    const int far = delta < 0 ? n.right : n.left;
    if (near >= 0) search(near, q, best);
    if (far >= 0 && delta * delta < best.distance_sq) search(far, q, best);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace xformtree::detail
