#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xformtree/detail/kdtree.hpp"
#include "xformtree/detail/textio.hpp"
#include "xformtree/mat4.hpp"
#include "xformtree/pointset.hpp"
#include "xformtree/tree.hpp"

namespace xformtree {

struct IcpParams {
  int max_iterations = 100;
  double convergence_rms_delta = 1e-7;   // mm
  double max_correspondence_distance = 10.0;  // mm
  bool allow_scale = false;
};

struct RegistrationResult {
  Mat4 transform;
  double residual_rms = 0.0;  // mm
  int iterations = 0;
  bool converged = false;
  /// RMS over matched pairs: entry 0 is measured at the initial transform,
  /// each later entry after one solve + re-matching pass.
  std::vector<double> residual_history;
};

struct RotationAxis {
  Vec3 point;          // a point on the axis, mm
  Vec3 direction;      // unit
};

namespace detail {

struct Eigen3 {
  std::array<double, 3> values{};  // descending
  Mat3 vectors;                    // columns are the matching eigenvectors
};

/// Cyclic Jacobi diagonalization of a symmetric 3x3 matrix.
inline Eigen3 eigen_symmetric3(const Mat3& sym) {
  Mat3 a = sym;
  Mat3 v;  // identity
  const double scale = a.frobenius();
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    off += a.at(0, 1) * a.at(0, 1);
    off += a.at(0, 2) * a.at(0, 2);
    off += a.at(1, 2) * a.at(1, 2);
    if (std::sqrt(2.0 * off) <= 1e-15 * scale) break;
    static constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& pq : kPairs) {
      const int p = pq[0], q = pq[1];
      const double apq = a.at(p, q);
      if (std::abs(apq) <= 1e-300) continue;
      const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
      const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                       (std::abs(theta) + std::sqrt(theta * theta + 1.0));
      const double c = 1.0 / std::sqrt(t * t + 1.0);
      const double s = t * c;
      Mat3 j;
      j.at(p, p) = c;
      j.at(q, q) = c;
      j.at(p, q) = s;
      j.at(q, p) = -s;
      a = j.transposed() * a * j;
      a.at(p, q) = 0.0;  // kill rounding residue on the annihilated entry
      a.at(q, p) = 0.0;
      v = v * j;
    }
  }
  Eigen3 out;
  std::array<int, 3> order{0, 1, 2};
  const std::array<double, 3> diag{a.at(0, 0), a.at(1, 1), a.at(2, 2)};
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return diag[x] > diag[y]; });
  for (int i = 0; i < 3; ++i) {
    out.values[i] = diag[order[i]];
    out.vectors.set_column(i, v.column(order[i]));
  }
  return out;
}

struct Svd3 {
  Mat3 u;  // left singular vectors (source side of a cross-covariance)
  Mat3 v;  // right singular vectors
  std::array<double, 3> sigma{};
  int rank = 0;
};

inline constexpr double kSingularRatioTol = 1e-7;

/// SVD h = u * diag(sigma) * v^T via the eigensystem of h^T h. For rank-2
/// inputs the null columns are completed to right-handed bases, so
/// det(u) = det(v) = +1 in that case.
inline Svd3 svd3(const Mat3& h) {
  const Eigen3 eig = eigen_symmetric3(h.transposed() * h);
  Svd3 out;
  out.v = eig.vectors;
  for (int i = 0; i < 3; ++i)
    out.sigma[i] = std::sqrt(std::max(eig.values[i], 0.0));
  const double s0 = out.sigma[0];
  for (int i = 0; i < 3; ++i)
    if (out.sigma[i] > kSingularRatioTol * s0 && s0 > 0.0) out.rank = i + 1;
  for (int i = 0; i < out.rank; ++i)
    out.u.set_column(i, (h * out.v.column(i)) / out.sigma[i]);
  if (out.rank == 2) {
    out.u.set_column(2, cross(out.u.column(0), out.u.column(1)).normalized());
    out.v.set_column(2, cross(out.v.column(0), out.v.column(1)).normalized());
  }
  return out;
}

}  // namespace detail

/// Closed-form rigid (optionally uniformly scaled) alignment of paired
/// points: minimizes sum |T*src_i - dst_i|^2 with a proper rotation.
/// Reflections are excluded by flipping the weakest singular direction.
inline RegistrationResult least_squares_rigid(const PointSet& src,
                                              const PointSet& dst,
                                              bool allow_scale = false) {
  if (src.size() != dst.size())
    throw SizeMismatch("correspondence counts differ: " +
                       std::to_string(src.size()) + " vs " +
                       std::to_string(dst.size()));
  if (src.size() < 3)
    throw DegenerateConfiguration("need at least 3 correspondences, got " +
                                  std::to_string(src.size()));
  const Vec3 cs = centroid(src);
  const Vec3 cd = centroid(dst);
  Mat3 h;
  h.e.fill(0.0);
  double src_sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs;
    const Vec3 b = dst[i] - cd;
    h.at(0, 0) += a.x * b.x; h.at(0, 1) += a.x * b.y; h.at(0, 2) += a.x * b.z;
    h.at(1, 0) += a.y * b.x; h.at(1, 1) += a.y * b.y; h.at(1, 2) += a.y * b.z;
    h.at(2, 0) += a.z * b.x; h.at(2, 1) += a.z * b.y; h.at(2, 2) += a.z * b.z;
    src_sq += dot(a, a);
  }
  const detail::Svd3 svd = detail::svd3(h);
  if (svd.rank < 2)
    throw DegenerateConfiguration(
        "centered correspondences span less than a plane (rank " +
        std::to_string(svd.rank) + ")");
  const double flip = svd.u.det() * svd.v.det() < 0.0 ? -1.0 : 1.0;
  Mat3 d;
  d.at(2, 2) = flip;
  const Mat3 rot = svd.v * d * svd.u.transposed();

  double scale = 1.0;
  if (allow_scale) {
    double num = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i)
      num += dot(dst[i] - cd, rot * (src[i] - cs));
    if (src_sq <= 0.0 || num <= 0.0)
      throw DegenerateConfiguration("uniform scale estimate is not positive");
    scale = num / src_sq;
  }
  Mat3 linear = rot;
  for (double& v : linear.e) v *= scale;
  const Vec3 t = cd - linear * cs;

  RegistrationResult out;
  out.transform = Mat4::from_blocks(linear, t);
  out.residual_rms = rms_distance(apply(out.transform, src), dst);
  out.iterations = 1;
  out.converged = true;
  out.residual_history = {out.residual_rms};
  return out;
}

namespace detail {

struct Matches {
  PointSet src;  // original source coordinates
  PointSet dst;
  double rms = 0.0;
};

inline Matches match_nearest(const PointSet& src, const KdTree& tree,
                             const PointSet& dst, const Mat4& transform,
                             double gate) {
  Matches m;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 moved = transform_point(transform, src[i]);
    const KdTree::Hit hit = tree.nearest(moved, gate);
    if (!hit.found()) continue;
    m.src.push_back(src[i], src.tag(i));
    m.dst.push_back(dst[hit.index], dst.tag(hit.index));
    sum_sq += hit.distance_sq;
  }
  if (!m.src.empty()) m.rms = std::sqrt(sum_sq / static_cast<double>(m.src.size()));
  return m;
}

}  // namespace detail

/// Iterative closest point, Besl-McKay style: exact nearest-neighbor
/// matching within the gate, full re-solve from the original source set each
/// pass. On full-overlap data the residual history is non-increasing; a
/// changing gated correspondence set can break that guarantee, so the
/// history is reported rather than enforced.
inline RegistrationResult icp(const PointSet& src, const PointSet& dst,
                              const Mat4& init = Mat4::identity(),
                              const IcpParams& params = {}) {
  if (params.max_iterations < 1)
    throw InvalidArgument("max_iterations must be at least 1");
  if (params.convergence_rms_delta <= 0.0 ||
      params.max_correspondence_distance <= 0.0)
    throw InvalidArgument("convergence thresholds must be positive");
  if (src.empty() || dst.empty()) throw EmptySet("icp needs non-empty point sets");
  if (!init.is_affine()) throw NotAffine("icp initial transform must be affine");

  const detail::KdTree tree(dst.points());
  const double gate = params.max_correspondence_distance;

  RegistrationResult out;
  out.transform = init;
  detail::Matches m = detail::match_nearest(src, tree, dst, init, gate);
  if (m.src.size() < 3)
    throw NoCorrespondences("only " + std::to_string(m.src.size()) +
                            " pairs within gate " + detail::format_g17(gate));
  double prev = m.rms;
  out.residual_history.push_back(prev);
  out.residual_rms = prev;

  for (int it = 1; it <= params.max_iterations; ++it) {
    const RegistrationResult step =
        least_squares_rigid(m.src, m.dst, params.allow_scale);
    out.transform = step.transform;
    m = detail::match_nearest(src, tree, dst, out.transform, gate);
    if (m.src.size() < 3)
      throw NoCorrespondences("correspondences fell below 3 at iteration " +
                              std::to_string(it));
    out.residual_history.push_back(m.rms);
    out.residual_rms = m.rms;
    out.iterations = it;
    if (std::abs(prev - m.rms) < params.convergence_rms_delta) {
      out.converged = true;
      break;
    }
    prev = m.rms;
  }
  return out;
}

struct CoarseFineResult {
  Mat4 rough;  // P_R, as supplied
  Mat4 fine;   // P_F, so that fine * rough is the refined transform
  RegistrationResult refined;  // single-shot ICP result from rough
};

/// Two-step registration kept as two factors: ICP initialized at `rough`
/// refines the pose, and the correction P_F = result * rough^-1 is returned
/// separately so both steps can be recorded as stacked Transform nodes.
inline CoarseFineResult coarse_then_fine(const PointSet& src, const PointSet& dst,
                                         const Mat4& rough,
                                         const IcpParams& params = {}) {
  if (!rough.is_affine()) throw NotAffine("rough transform must be affine");
  CoarseFineResult out;
  out.rough = rough;
  out.refined = icp(src, dst, rough, params);
  out.fine = compose(out.refined.transform, invert(rough));
  return out;
}

struct RotaryPose {
  double angle = 0.0;  // radians, caller-declared table angle
  Mat4 transform;
};

/// Recovers the fixed rotation axis shared by a family of poses, each
/// declared as rotation by `angle` about that axis. Direction is the
/// angle-weighted mean of the per-pose rotation axes; the point solves the
/// fixed-point equations (R_i - I) x = -t_i in least squares, with the
/// along-axis null direction pinned to zero. The returned point is the axis
/// point closest to the origin.
inline RotationAxis fit_rotation_axis(std::span<const RotaryPose> poses,
                                      double residual_threshold = 1e-3) {
  if (poses.empty()) throw DegenerateAngles("no poses supplied");

  Vec3 dir_sum{0, 0, 0};
  Vec3 reference{0, 0, 0};
  bool have_reference = false;
  std::vector<AxisAngle> extracted(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    extracted[i] = rotation_axis_angle(poses[i].transform);
    const AxisAngle& aa = extracted[i];
    if (aa.angle < 1e-9) continue;
    Vec3 axis = aa.axis;
    if (!have_reference) {
      reference = axis;
      have_reference = true;
    } else if (dot(axis, reference) < 0.0) {
      axis = -axis;
    }
    dir_sum += axis * aa.angle;
  }
  if (!have_reference || dir_sum.norm() == 0.0)
    throw DegenerateAngles("all pose rotations are negligible");
  Vec3 direction = dir_sum.normalized();

  // Align the sign with the declared angles where that is unambiguous
  // (rotations at pi admit both signs).
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const double wrapped = std::remainder(poses[i].angle, 2.0 * std::numbers::pi);
    const AxisAngle& aa = extracted[i];
    if (!std::isfinite(wrapped) || std::abs(wrapped) < 1e-9 || aa.angle < 1e-9 ||
        aa.angle > std::numbers::pi - 1e-6)
      continue;
    if (dot(direction, aa.axis) * (wrapped >= 0.0 ? 1.0 : -1.0) < 0.0)
      direction = -direction;
    break;
  }

  // Normal equations for the fixed point, regularized along the axis so the
  // one-parameter family collapses to the representative with x . d = 0.
  Mat3 n;
  n.e.fill(0.0);
  Vec3 b{0, 0, 0};
  for (const RotaryPose& p : poses) {
    Mat3 a = detail::polar_rotation(p.transform.linear());
    for (int i = 0; i < 3; ++i) a.at(i, i) -= 1.0;
    const Mat3 ata = a.transposed() * a;
    for (std::size_t k = 0; k < 9; ++k) n.e[k] += ata.e[k];
    b += a.transposed() * (-p.transform.translation_part());
  }
  const double mu = std::max((n.at(0, 0) + n.at(1, 1) + n.at(2, 2)) / 3.0, 1e-12);
  Mat3 reg = n;
  reg.at(0, 0) += mu * direction.x * direction.x;
  reg.at(0, 1) += mu * direction.x * direction.y;
  reg.at(0, 2) += mu * direction.x * direction.z;
  reg.at(1, 0) += mu * direction.y * direction.x;
  reg.at(1, 1) += mu * direction.y * direction.y;
  reg.at(1, 2) += mu * direction.y * direction.z;
  reg.at(2, 0) += mu * direction.z * direction.x;
  reg.at(2, 1) += mu * direction.z * direction.y;
  reg.at(2, 2) += mu * direction.z * direction.z;
  const Vec3 point = reg.inverse() * b;

  // Discrepancy check on a unit probe cube centered on the fitted point.
  double residual = 0.0;
  for (const RotaryPose& p : poses) {
    const Mat4 model = rotation_about_line(point, direction, p.angle);
    double sum_sq = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 c = point + Vec3{(corner & 1) ? 0.5 : -0.5,
                                  (corner & 2) ? 0.5 : -0.5,
                                  (corner & 4) ? 0.5 : -0.5};
      const Vec3 d = transform_point(model, c) - transform_point(p.transform, c);
      sum_sq += dot(d, d);
    }
    residual = std::max(residual, std::sqrt(sum_sq / 8.0));
  }
  if (residual > residual_threshold)
    throw InconsistentPoses("best-fit axis leaves residual " +
                            detail::format_g17(residual) + " above threshold " +
                            detail::format_g17(residual_threshold));
  return {point, direction};
}

inline RotationAxis fit_rotation_axis(std::initializer_list<RotaryPose> poses,
                                      double residual_threshold = 1e-3) {
  return fit_rotation_axis(std::span<const RotaryPose>(poses.begin(), poses.size()),
                           residual_threshold);
}

/// Registers each scan to its predecessor with ICP and records the results
/// as a nested tree: Transform(P1 = I) { scan 1, Transform(P2) { scan 2,
/// ... } }. Flattening reproduces every scan in scan 1's frame.
inline Workspace chain_register(std::span<const PointSet> scans,
                                const IcpParams& params = {}) {
  if (scans.size() < 2)
    throw InvalidArgument("chain_register needs at least two scans");
  Workspace ws;
  const NodeId top = ws.insert_transform(std::nullopt, Mat4::identity(), "P1");
  ws.insert_object(top, scans[0], "scan 1");
  NodeId parent = top;
  for (std::size_t i = 1; i < scans.size(); ++i) {
    const std::string pair = "pair " + std::to_string(i) + " (scan " +
                             std::to_string(i + 1) + " -> scan " +
                             std::to_string(i) + ")";
    RegistrationResult r;
    try {
      r = icp(scans[i], scans[i - 1], Mat4::identity(), params);
    } catch (const NoCorrespondences& e) {
      throw NoCorrespondences(pair + ": " + e.what());
    } catch (const DegenerateConfiguration& e) {
      throw DegenerateConfiguration(pair + ": " + e.what());
    } catch (const EmptySet& e) {
      throw EmptySet(pair + ": " + e.what());
    } catch (const Error& e) {
      throw RegistrationFailed(pair + ": " + e.what());
    }
    const NodeId t = ws.insert(
        parent, TransformNode{r.transform}, "P" + std::to_string(i + 1),
        Metadata{{"pair_index", std::to_string(i)},
                 {"pair_residual_rms", detail::format_g17(r.residual_rms)},
                 {"pair_iterations", std::to_string(r.iterations)}});
    ws.insert_object(t, scans[i], "scan " + std::to_string(i + 1));
    parent = t;
  }
  return ws;
}

inline Workspace chain_register(std::initializer_list<PointSet> scans,
                                const IcpParams& params = {}) {
  return chain_register(std::span<const PointSet>(scans.begin(), scans.size()),
                        params);
}

enum class RegisterMethod { LeastSquares, Icp, CoarseFine };

struct NodeRegistration {
  NodeId group;              // the node that was moved (src's parent, or src)
  /// Inserted by the reparent step to keep the old pose. Stays at the
  /// default (-1) when dst already lay inside the group and no reparent
  /// was needed.
  NodeId compensation_node;
  std::vector<NodeId> recorded;  // registration Transform nodes, outer first
  RegistrationResult result;
  Mat4 world_delta;          // common world-space motion of the moved group
};

/// Registers the geometry of `src` onto `dst` and records the result in the
/// tree: src's whole group (its parent node, or src itself at a root) is
/// reparented under `dst` pose-preservingly, then the registration is
/// spliced in above the compensation so every member of the group moves by
/// the same world-space matrix. CoarseFine records two stacked nodes.
inline NodeRegistration register_nodes(Workspace& ws, NodeId src, NodeId dst,
                                       RegisterMethod method,
                                       const IcpParams& params = {},
                                       const Mat4& init = Mat4::identity()) {
  const PointSet s = ws.world_points(src);
  const PointSet d = ws.world_points(dst);

  NodeRegistration out;
  std::optional<Mat4> rough, fine;
  switch (method) {
    case RegisterMethod::LeastSquares:
      out.result = least_squares_rigid(s, d, params.allow_scale);
      break;
    case RegisterMethod::Icp:
      out.result = icp(s, d, init, params);
      break;
    case RegisterMethod::CoarseFine: {
      const CoarseFineResult cf = coarse_then_fine(s, d, init, params);
      out.result = cf.refined;
      rough = cf.rough;
      fine = cf.fine;
      break;
    }
  }
  out.world_delta = out.result.transform;

  const Node& src_node = ws.node(src);
  out.group = src_node.parent ? *src_node.parent : src;

  // Registering against a node inside the very group being moved (self-
  // registration included) would make the reparent cyclic; the group
  // already lives in dst's model then, so only the registration transforms
  // are spliced in above it.
  const bool dst_inside = dst == out.group || ws.is_ancestor(out.group, dst);
  const Mat4 p_dst = ws.cumulative_transform(dst);
  NodeId splice_point;
  if (dst_inside) {
    splice_point = out.group;
  } else {
    const ReparentResult rep = ws.reparent(out.group, dst);
    out.compensation_node = rep.compensation_node;
    splice_point = out.compensation_node;
  }

  const Mat4 p_dst_inv = invert(p_dst);
  const auto localize = [&](const Mat4& world) {
    return compose(compose(p_dst_inv, world), p_dst);
  };
  if (method == RegisterMethod::CoarseFine) {
    const NodeId r_node = ws.insert_above(splice_point, localize(*rough),
                                          "rough registration");
    const NodeId f_node = ws.insert_above(r_node, localize(*fine),
                                          "fine registration");
    out.recorded = {f_node, r_node};
  } else {
    out.recorded = {ws.insert_above(splice_point,
                                    localize(out.result.transform),
                                    "registration")};
  }
  return out;
}

}  // namespace xformtree
