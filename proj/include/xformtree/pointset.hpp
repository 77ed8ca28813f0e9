#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "xformtree/mat4.hpp"

namespace xformtree {

/// Ordered set of 3D points with homogeneous coordinate fixed at 1.
/// Each point carries an optional source tag (the node id it came from)
/// so flattened scenes keep their provenance.
class PointSet {
 public:
  static constexpr std::int64_t kNoTag = -1;

  PointSet() = default;
  explicit PointSet(std::vector<Vec3> points)
      : points_(std::move(points)), tags_(points_.size(), kNoTag) {}
  PointSet(std::vector<Vec3> points, std::vector<std::int64_t> tags)
      : points_(std::move(points)), tags_(std::move(tags)) {
    if (points_.size() != tags_.size())
      throw SizeMismatch("point and tag counts differ");
  }
  PointSet(std::initializer_list<Vec3> points)
      : points_(points), tags_(points_.size(), kNoTag) {}

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  std::int64_t tag(std::size_t i) const { return tags_[i]; }

  const std::vector<Vec3>& points() const { return points_; }
  const std::vector<std::int64_t>& tags() const { return tags_; }

  void push_back(const Vec3& p, std::int64_t tag = kNoTag) {
    points_.push_back(p);
    tags_.push_back(tag);
  }

  void append(const PointSet& other) {
    points_.insert(points_.end(), other.points_.begin(), other.points_.end());
    tags_.insert(tags_.end(), other.tags_.begin(), other.tags_.end());
  }

  /// Copy with every point tagged `tag`.
  PointSet retagged(std::int64_t tag) const {
    PointSet out;
    out.points_ = points_;
    out.tags_.assign(points_.size(), tag);
    return out;
  }

  bool operator==(const PointSet&) const = default;

 private:
  std::vector<Vec3> points_;
  std::vector<std::int64_t> tags_;
};

/// Transforms every point: column i of the result is p * column i.
/// Affine p keeps the homogeneous coordinate at exactly 1.
inline PointSet apply(const Mat4& p, const PointSet& m) {
  std::vector<Vec3> out;
  out.reserve(m.size());
  for (const Vec3& v : m.points()) out.push_back(transform_point(p, v));
  return PointSet(std::move(out), m.tags());
}

/// Appends the parts in order; empty sets act as the identity.
inline PointSet concat(std::span<const PointSet> parts) {
  PointSet out;
  for (const PointSet& p : parts) out.append(p);
  return out;
}

inline PointSet concat(std::initializer_list<PointSet> parts) {
  PointSet out;
  for (const PointSet& p : parts) out.append(p);
  return out;
}

/// Root mean square distance between corresponding points (pairing by
/// index). Throws SizeMismatch / EmptySet.
inline double rms_distance(const PointSet& a, const PointSet& b) {
  if (a.size() != b.size()) throw SizeMismatch("point sets have different sizes");
  if (a.empty()) throw EmptySet("rms_distance needs at least one point");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 d = a[i] - b[i];
    sum += d.dot(d);
  }
  return std::sqrt(sum / static_cast<double>(a.size()));
}

/// Arithmetic mean of the 3D coordinates. Throws EmptySet.
inline Vec3 centroid(const PointSet& m) {
  if (m.empty()) throw EmptySet("centroid of an empty set");
  Vec3 sum;
  for (const Vec3& p : m.points()) sum += p;
  return sum / static_cast<double>(m.size());
}

}  // namespace xformtree
