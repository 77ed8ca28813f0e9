#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "xformtree/errors.hpp"

namespace xformtree {

// Default tolerances for the homogeneous-transform algebra. The determinant
// test is relative to the size of the 3x3 block, the others are absolute.
inline constexpr double kDetEps = 1e-12;
inline constexpr double kOrthEps = 1e-9;
inline constexpr double kShearEps = 1e-9;
inline constexpr double kMatEps = 1e-9;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double px, double py, double pz) : x(px), y(py), z(pz) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    if (n == 0.0) throw InvalidArgument("cannot normalize a zero vector");
    return *this / n;
  }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline constexpr double dot(const Vec3& a, const Vec3& b) { return a.dot(b); }
inline constexpr Vec3 cross(const Vec3& a, const Vec3& b) { return a.cross(b); }

/// 3x3 matrix, row-major. Support type for rotation blocks.
struct Mat3 {
  std::array<double, 9> e{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static constexpr Mat3 identity() { return Mat3{}; }

  constexpr double& at(int r, int c) { return e[static_cast<std::size_t>(r * 3 + c)]; }
  constexpr double at(int r, int c) const { return e[static_cast<std::size_t>(r * 3 + c)]; }

  constexpr bool operator==(const Mat3&) const = default;

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
        r.at(i, j) = s;
      }
    return r;
  }

  Vec3 operator*(const Vec3& v) const {
    return {at(0, 0) * v.x + at(0, 1) * v.y + at(0, 2) * v.z,
            at(1, 0) * v.x + at(1, 1) * v.y + at(1, 2) * v.z,
            at(2, 0) * v.x + at(2, 1) * v.y + at(2, 2) * v.z};
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
    return r;
  }

  double det() const {
    return at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
           at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
           at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
  }

  double frobenius() const {
    double s = 0.0;
    for (double v : e) s += v * v;
    return std::sqrt(s);
  }

  Vec3 column(int c) const { return {at(0, c), at(1, c), at(2, c)}; }
  void set_column(int c, const Vec3& v) { at(0, c) = v.x; at(1, c) = v.y; at(2, c) = v.z; }
  Vec3 row(int r) const { return {at(r, 0), at(r, 1), at(r, 2)}; }

  /// Adjugate-based inverse. Throws SingularMatrix on (near-)zero determinant.
  Mat3 inverse() const {
    const double d = det();
    const double scale = frobenius() / std::sqrt(3.0);
    if (std::abs(d) <= kDetEps * scale * scale * scale)
      throw SingularMatrix("3x3 block is singular (det " + std::to_string(d) + ")");
    Mat3 r;
    r.at(0, 0) = (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) / d;
    r.at(0, 1) = (at(0, 2) * at(2, 1) - at(0, 1) * at(2, 2)) / d;
    r.at(0, 2) = (at(0, 1) * at(1, 2) - at(0, 2) * at(1, 1)) / d;
    r.at(1, 0) = (at(1, 2) * at(2, 0) - at(1, 0) * at(2, 2)) / d;
    r.at(1, 1) = (at(0, 0) * at(2, 2) - at(0, 2) * at(2, 0)) / d;
    r.at(1, 2) = (at(0, 2) * at(1, 0) - at(0, 0) * at(1, 2)) / d;
    r.at(2, 0) = (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0)) / d;
    r.at(2, 1) = (at(0, 1) * at(2, 0) - at(0, 0) * at(2, 1)) / d;
    r.at(2, 2) = (at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0)) / d;
    return r;
  }
};

inline double max_abs_diff(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < 9; ++i) m = std::max(m, std::abs(a.e[i] - b.e[i]));
  return m;
}

/// 4x4 homogeneous transformation matrix, row-major, column-vector
/// convention: points transform as m * (x, y, z, 1)^T. Translation lives in
/// the fourth column. Default-constructs to identity.
struct Mat4 {
  std::array<double, 16> e{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  constexpr Mat4() = default;
  explicit constexpr Mat4(const std::array<double, 16>& elems) : e(elems) {}

  static constexpr Mat4 identity() { return Mat4{}; }

  static Mat4 translation(const Vec3& t) {
    Mat4 m;
    m.at(0, 3) = t.x;
    m.at(1, 3) = t.y;
    m.at(2, 3) = t.z;
    return m;
  }
  static Mat4 translation(double x, double y, double z) { return translation(Vec3{x, y, z}); }

  /// Rotation by `angle` radians about `axis` (right-handed). Axis need not
  /// be unit length but must be nonzero.
  static Mat4 rotation(const Vec3& axis, double angle);

  static Mat4 scaling(double sx, double sy, double sz) {
    Mat4 m;
    m.at(0, 0) = sx;
    m.at(1, 1) = sy;
    m.at(2, 2) = sz;
    return m;
  }
  static Mat4 scaling(double s) { return scaling(s, s, s); }

  static Mat4 from_blocks(const Mat3& linear, const Vec3& t) {
    Mat4 m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m.at(i, j) = linear.at(i, j);
    m.at(0, 3) = t.x;
    m.at(1, 3) = t.y;
    m.at(2, 3) = t.z;
    return m;
  }

  constexpr double& at(int r, int c) { return e[static_cast<std::size_t>(r * 4 + c)]; }
  constexpr double at(int r, int c) const { return e[static_cast<std::size_t>(r * 4 + c)]; }

  constexpr bool operator==(const Mat4&) const = default;

  Mat3 linear() const {
    Mat3 b;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b.at(i, j) = at(i, j);
    return b;
  }

  Vec3 translation_part() const { return {at(0, 3), at(1, 3), at(2, 3)}; }

  /// True iff the bottom row is exactly (0, 0, 0, 1).
  constexpr bool is_affine() const {
    return at(3, 0) == 0.0 && at(3, 1) == 0.0 && at(3, 2) == 0.0 && at(3, 3) == 1.0;
  }

  double det3() const { return linear().det(); }

  /// Characteristic magnitude of the 3x3 block, used to make the determinant
  /// test scale-independent.
  double block_scale() const { return linear().frobenius() / std::sqrt(3.0); }

  bool is_invertible() const {
    const double s = block_scale();
    return std::abs(det3()) > kDetEps * s * s * s;
  }
};

inline Mat4 compose(const Mat4& a, const Mat4& b) {
  Mat4 r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      r.at(i, j) = s;
    }
  return r;
}

inline Mat4 operator*(const Mat4& a, const Mat4& b) { return compose(a, b); }

/// Applies the transform to a 3D point (homogeneous coordinate 1).
inline Vec3 transform_point(const Mat4& m, const Vec3& p) {
  return {m.at(0, 0) * p.x + m.at(0, 1) * p.y + m.at(0, 2) * p.z + m.at(0, 3),
          m.at(1, 0) * p.x + m.at(1, 1) * p.y + m.at(1, 2) * p.z + m.at(1, 3),
          m.at(2, 0) * p.x + m.at(2, 1) * p.y + m.at(2, 2) * p.z + m.at(2, 3)};
}

/// Applies only the 3x3 block (directions, no translation).
inline Vec3 transform_direction(const Mat4& m, const Vec3& v) {
  return m.linear() * v;
}

inline double max_abs_diff(const Mat4& a, const Mat4& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < 16; ++i) m = std::max(m, std::abs(a.e[i] - b.e[i]));
  return m;
}

inline bool approx_equal(const Mat4& a, const Mat4& b, double tol = kMatEps) {
  return max_abs_diff(a, b) <= tol;
}

/// Inverts an affine transform via the adjugate of its 3x3 block.
/// Throws NotAffine for non-affine input, SingularMatrix below the
/// determinant threshold.
inline Mat4 invert(const Mat4& m) {
  if (!m.is_affine()) throw NotAffine("invert expects an affine matrix");
  if (!m.is_invertible())
    throw SingularMatrix("matrix is singular (det " + std::to_string(m.det3()) + ")");
  const Mat3 inv = m.linear().inverse();
  const Vec3 t = m.translation_part();
  return Mat4::from_blocks(inv, -(inv * t));
}

inline Mat4 Mat4::rotation(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double t = 1.0 - c;
  Mat4 m;
  m.at(0, 0) = c + a.x * a.x * t;
  m.at(0, 1) = a.x * a.y * t - a.z * s;
  m.at(0, 2) = a.x * a.z * t + a.y * s;
  m.at(1, 0) = a.y * a.x * t + a.z * s;
  m.at(1, 1) = c + a.y * a.y * t;
  m.at(1, 2) = a.y * a.z * t - a.x * s;
  m.at(2, 0) = a.z * a.x * t - a.y * s;
  m.at(2, 1) = a.z * a.y * t + a.x * s;
  m.at(2, 2) = c + a.z * a.z * t;
  return m;
}

/// Rotation about an arbitrary line in space: T(p) * R(d, angle) * T(-p).
inline Mat4 rotation_about_line(const Vec3& point, const Vec3& direction, double angle) {
  return Mat4::translation(point) * Mat4::rotation(direction, angle) *
         Mat4::translation(-point);
}

struct AxisAngle {
  Vec3 axis{0, 0, 1};
  double angle = 0.0;  // in [0, pi]
};

/// Extracts axis and angle from the rotation block of a rigid transform.
/// Near angle pi the skew part vanishes, so the axis is recovered from the
/// dominant column of R + I instead.
inline AxisAngle rotation_axis_angle(const Mat3& r) {
  const Vec3 skew{r.at(2, 1) - r.at(1, 2), r.at(0, 2) - r.at(2, 0),
                  r.at(1, 0) - r.at(0, 1)};
  const double sin_t = 0.5 * skew.norm();
  const double cos_t = 0.5 * (r.at(0, 0) + r.at(1, 1) + r.at(2, 2) - 1.0);
  const double angle = std::atan2(sin_t, cos_t);
  AxisAngle out;
  out.angle = angle;
  if (angle < 1e-12) {
    out.axis = Vec3{0, 0, 1};
    return out;
  }
  if (angle < M_PI - 1e-4) {
    out.axis = skew / (2.0 * sin_t);
    return out;
  }
  // Near pi: R + I ~ 2 * axis * axis^T.
  Mat3 b = r;
  b.at(0, 0) += 1.0;
  b.at(1, 1) += 1.0;
  b.at(2, 2) += 1.0;
  int best = 0;
  for (int c = 1; c < 3; ++c)
    if (b.column(c).norm() > b.column(best).norm()) best = c;
  Vec3 axis = b.column(best).normalized();
  if (sin_t > 1e-12 && axis.dot(skew) < 0.0) axis = -axis;
  out.axis = axis;
  return out;
}

inline AxisAngle rotation_axis_angle(const Mat4& m) {
  return rotation_axis_angle(m.linear());
}

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quaternion normalized() const {
    const double n = norm();
    if (n == 0.0) throw InvalidArgument("cannot normalize a zero quaternion");
    return {w / n, x / n, y / n, z / n};
  }
};

inline Mat3 rotation_from_quaternion(const Quaternion& q0) {
  const Quaternion q = q0.normalized();
  Mat3 r;
  r.at(0, 0) = 1 - 2 * (q.y * q.y + q.z * q.z);
  r.at(0, 1) = 2 * (q.x * q.y - q.z * q.w);
  r.at(0, 2) = 2 * (q.x * q.z + q.y * q.w);
  r.at(1, 0) = 2 * (q.x * q.y + q.z * q.w);
  r.at(1, 1) = 1 - 2 * (q.x * q.x + q.z * q.z);
  r.at(1, 2) = 2 * (q.y * q.z - q.x * q.w);
  r.at(2, 0) = 2 * (q.x * q.z - q.y * q.w);
  r.at(2, 1) = 2 * (q.y * q.z + q.x * q.w);
  r.at(2, 2) = 1 - 2 * (q.x * q.x + q.y * q.y);
  return r;
}

/// Shepperd's method: picks the numerically largest of the four candidate
/// pivots. Returns the representative with non-negative w.
inline Quaternion quaternion_from_rotation(const Mat3& r) {
  Quaternion q;
  const double tr = r.at(0, 0) + r.at(1, 1) + r.at(2, 2);
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (r.at(2, 1) - r.at(1, 2)) / s;
    q.y = (r.at(0, 2) - r.at(2, 0)) / s;
    q.z = (r.at(1, 0) - r.at(0, 1)) / s;
  } else if (r.at(0, 0) > r.at(1, 1) && r.at(0, 0) > r.at(2, 2)) {
    double s = std::sqrt(1.0 + r.at(0, 0) - r.at(1, 1) - r.at(2, 2)) * 2.0;
    q.w = (r.at(2, 1) - r.at(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (r.at(0, 1) + r.at(1, 0)) / s;
    q.z = (r.at(0, 2) + r.at(2, 0)) / s;
  } else if (r.at(1, 1) > r.at(2, 2)) {
    double s = std::sqrt(1.0 + r.at(1, 1) - r.at(0, 0) - r.at(2, 2)) * 2.0;
    q.w = (r.at(0, 2) - r.at(2, 0)) / s;
    q.x = (r.at(0, 1) + r.at(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (r.at(1, 2) + r.at(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r.at(2, 2) - r.at(0, 0) - r.at(1, 1)) * 2.0;
    q.w = (r.at(1, 0) - r.at(0, 1)) / s;
    q.x = (r.at(0, 2) + r.at(2, 0)) / s;
    q.y = (r.at(1, 2) + r.at(2, 1)) / s;
    q.z = 0.25 * s;
  }
  if (q.w < 0.0) { q.w = -q.w; q.x = -q.x; q.y = -q.y; q.z = -q.z; }
  return q.normalized();
}

inline Mat4 rigid_from_quaternion(const Vec3& t, const Quaternion& q) {
  return Mat4::from_blocks(rotation_from_quaternion(q), t);
}

namespace detail {

/// Higham's polar iteration; converges quadratically to the nearest
/// orthogonal factor of an invertible matrix.
inline Mat3 polar_rotation(const Mat3& b) {
  Mat3 x = b;
  for (int iter = 0; iter < 60; ++iter) {
    Mat3 next;
    const Mat3 inv_t = x.inverse().transposed();
    for (std::size_t i = 0; i < 9; ++i) next.e[i] = 0.5 * (x.e[i] + inv_t.e[i]);
    const double delta = max_abs_diff(next, x);
    x = next;
    if (delta < 1e-15) break;
  }
  return x;
}

inline double orthonormality_error(const Mat3& r) {
  const Mat3 g = r.transposed() * r;
  return max_abs_diff(g, Mat3::identity());
}

}  // namespace detail

/// Translation / rotation / uniform-per-axis scale factorization of an
/// affine transform: m = T * R * S.
struct TrsDecomposition {
  Vec3 translation;
  Mat3 rotation;
  Vec3 scale{1, 1, 1};
};

/// Builds T * R * S. Throws InvalidRotation unless the rotation block is
/// orthonormal with det +1 within kOrthEps; InvalidArgument for non-positive
/// scales.
inline Mat4 from_trs(const TrsDecomposition& d) {
  if (detail::orthonormality_error(d.rotation) > kOrthEps)
    throw InvalidRotation("rotation block is not orthonormal");
  if (std::abs(d.rotation.det() - 1.0) > kOrthEps)
    throw InvalidRotation("rotation block must have determinant +1");
  if (d.scale.x <= 0.0 || d.scale.y <= 0.0 || d.scale.z <= 0.0)
    throw InvalidArgument("scale components must be positive");
  Mat3 rs = d.rotation;
  for (int i = 0; i < 3; ++i) {
    rs.at(i, 0) *= d.scale.x;
    rs.at(i, 1) *= d.scale.y;
    rs.at(i, 2) *= d.scale.z;
  }
  return Mat4::from_blocks(rs, d.translation);
}

/// Factors an affine transform back into T * R * S. Scale comes from the
/// column norms of the 3x3 block, the rotation from its polar factor; the
/// remaining shear must stay below `shear_eps`.
inline TrsDecomposition decompose_trs(const Mat4& m, double shear_eps = kShearEps) {
  if (!m.is_affine()) throw NotAffine("decompose_trs expects an affine matrix");
  if (!m.is_invertible())
    throw SingularMatrix("matrix is singular (det " + std::to_string(m.det3()) + ")");
  const Mat3 a = m.linear();
  if (a.det() < 0.0)
    throw NotTrsFactorable("negative determinant: reflections have no T*R*S form");

  TrsDecomposition d;
  d.translation = m.translation_part();
  d.scale = {a.column(0).norm(), a.column(1).norm(), a.column(2).norm()};

  Mat3 b = a;
  for (int i = 0; i < 3; ++i) {
    b.at(i, 0) /= d.scale.x;
    b.at(i, 1) /= d.scale.y;
    b.at(i, 2) /= d.scale.z;
  }
  d.rotation = detail::polar_rotation(b);

  // Residual R^T * A * S^-1 - I; off-diagonal entries measure shear.
  const Mat3 residual = d.rotation.transposed() * b;
  double shear = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) shear = std::max(shear, std::abs(residual.at(i, j)));
  if (shear > shear_eps)
    throw NotTrsFactorable("shear residual " + std::to_string(shear) +
                           " exceeds tolerance");
  if (detail::orthonormality_error(d.rotation) > kOrthEps)
    throw NotTrsFactorable("polar factor failed the orthonormality check");
  return d;
}

/// True iff m factors as T * R * S with every scale within `tol` of 1 and
/// shear within `tol`. Never throws.
inline bool is_rigid(const Mat4& m, double tol = kOrthEps) {
  if (!m.is_affine() || !m.is_invertible()) return false;
  try {
    const TrsDecomposition d = decompose_trs(m, tol);
    return std::abs(d.scale.x - 1.0) <= tol && std::abs(d.scale.y - 1.0) <= tol &&
           std::abs(d.scale.z - 1.0) <= tol;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace xformtree
