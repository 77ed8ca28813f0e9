// Synthetic scenes with known ground truth, shared by the unit tests and
// the acceptance checks. All dimensions in millimetres.
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "generators.hpp"
#include "xformtree/xformtree.hpp"

namespace fixture {

using gen::Rng;
using xformtree::Mat4;
using xformtree::MotionFrame;
using xformtree::PointSet;
using xformtree::RotaryPose;
using xformtree::Vec3;

/// Regular nx*ny*nz lattice centered on the origin.
inline PointSet grid_points(int nx, int ny, int nz, double spacing) {
  PointSet out;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k)
        out.push_back({(i - (nx - 1) / 2.0) * spacing,
                       (j - (ny - 1) / 2.0) * spacing,
                       (k - (nz - 1) / 2.0) * spacing});
  return out;
}

// --- six overlapping crops around a cylinder -------------------------------
//
// A cylindrical surface (r = 80) sampled every 2*pi/126 in angle (~4 mm of
// arc) and every 4 mm in z. Crop c covers angular samples [21c, 21c+31], so
// consecutive crops share 11 angular columns. Each scanner pose is a small
// perturbation of the world frame (<= 0.05 deg, <= 0.15 mm), which keeps
// corresponding samples within ~0.5 mm of each other while non-corresponding
// samples stay ~4 mm apart; a 3 mm gate then yields exact correspondences.
struct RingFixture {
  std::vector<PointSet> scans;     // each in its own scanner frame
  std::vector<Mat4> scanner_pose;  // scan -> world; index 0 is identity
  PointSet truth;                  // all crops in scan 1's frame (= world)
  double gate = 3.0;
};

inline RingFixture ring_fixture(Rng& rng, int crops = 6) {
  constexpr double kRadius = 80.0;
  constexpr int kArcSteps = 126;           // ~3.99 mm between samples
  constexpr int kCropStart = 21;           // 60 deg between crop origins
  constexpr int kCropWidth = 31;           // ~88.6 deg wide
  const double dtheta = 2.0 * std::numbers::pi / kArcSteps;

  RingFixture out;
  for (int c = 0; c < crops; ++c) {
    PointSet world_crop;
    for (int k = kCropStart * c; k <= kCropStart * c + kCropWidth; ++k)
      for (int zi = 0; zi <= 10; ++zi)
        world_crop.push_back({kRadius * std::cos(k * dtheta),
                              kRadius * std::sin(k * dtheta), 4.0 * zi});
    const Mat4 pose = c == 0 ? Mat4::identity()
                             : gen::random_perturbation(
                                   rng, 0.05 * std::numbers::pi / 180.0, 0.15);
    out.scans.push_back(xformtree::apply(xformtree::invert(pose), world_crop));
    out.scanner_pose.push_back(pose);
    out.truth.append(world_crop);
  }
  return out;
}

// --- pure-translation chain ------------------------------------------------
//
// Four identical lattices each shifted 1 mm further along -x, so every
// consecutive registration is translate(+1, 0, 0) and the cumulative pose of
// the last scan is translate(+3, 0, 0).
struct TranslationChainFixture {
  std::vector<PointSet> scans;
  Mat4 expected_cumulative_last = Mat4::translation(3.0, 0.0, 0.0);
  Mat4 expected_step = Mat4::translation(1.0, 0.0, 0.0);
};

inline TranslationChainFixture translation_chain_fixture() {
  TranslationChainFixture out;
  const PointSet base = grid_points(5, 5, 5, 10.0);
  for (int i = 0; i < 4; ++i) {
    PointSet s;
    for (std::size_t p = 0; p < base.size(); ++p)
      s.push_back(base[p] - Vec3{static_cast<double>(i), 0.0, 0.0});
    out.scans.push_back(std::move(s));
  }
  return out;
}

// --- partial overlap -------------------------------------------------------
//
// Source and destination share lattice A; the destination additionally sees
// blob B far up the z axis and the source sees blob C far down it. The
// non-shared blobs are ~100 mm from everything else, far outside the gate,
// so gated matching recovers the exact pose from the shared part alone
// (~60% of the source points overlap).
struct PartialOverlapFixture {
  PointSet src;   // in source frame
  PointSet dst;   // in world frame
  Mat4 truth;     // maps src onto dst
  double gate = 10.0;  // 2x the 5 mm lattice spacing
};

inline PartialOverlapFixture partial_overlap_fixture(Rng& rng) {
  const PointSet shared = grid_points(6, 6, 6, 5.0);  // 216 points
  PointSet dst = shared;
  const PointSet blob_b = grid_points(5, 5, 5, 5.0);  // 125 dst-only
  for (std::size_t i = 0; i < blob_b.size(); ++i)
    dst.push_back(blob_b[i] + Vec3{0.0, 0.0, 130.0});

  PointSet src_world = shared;
  const PointSet blob_c = grid_points(5, 5, 5, 5.0);  // 125 src-only
  for (std::size_t i = 0; i < blob_c.size(); ++i)
    src_world.push_back(blob_c[i] + Vec3{0.0, 0.0, -130.0});

  PartialOverlapFixture out;
  out.truth = gen::random_perturbation(rng, 1.0 * std::numbers::pi / 180.0, 0.5);
  out.src = xformtree::apply(xformtree::invert(out.truth), src_world);
  out.dst = std::move(dst);
  return out;
}

// --- rotary table ----------------------------------------------------------

struct RotaryFixture {
  std::vector<RotaryPose> poses;
  xformtree::RotationAxis truth;
};

/// Twelve poses at 30 deg steps about a line through (10, -5, 3). With
/// noise_sigma > 0, every matrix entry of every pose gets independent
/// Gaussian noise of that deviation.
inline RotaryFixture rotary_fixture(Rng& rng, double noise_sigma = 0.0) {
  RotaryFixture out;
  out.truth.point = {10.0, -5.0, 3.0};
  out.truth.direction = Vec3{2.0, 1.0, 2.0}.normalized();
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (int i = 1; i <= 12; ++i) {
    const double angle = i * (30.0 * std::numbers::pi / 180.0);
    Mat4 m = xformtree::rotation_about_line(out.truth.point, out.truth.direction,
                                            angle);
    if (noise_sigma > 0.0)
      for (double& e : m.e) e += noise(rng);
    out.poses.push_back({angle, m});
  }
  return out;
}

/// Shortest distance between two lines (or between a point and a line when
/// directions are parallel); used to compare a fitted axis to the truth.
inline double line_to_line_distance(const xformtree::RotationAxis& a,
                                    const xformtree::RotationAxis& b) {
  const Vec3 n = cross(a.direction, b.direction);
  const Vec3 d = b.point - a.point;
  if (n.norm() < 1e-12) {  // parallel: point-to-line distance
    const Vec3 rej = d - a.direction * dot(d, a.direction);
    return rej.norm();
  }
  return std::abs(dot(d, n)) / n.norm();
}

// --- hinged flap -----------------------------------------------------------
//
// A static lattice plus a planar flap hinged on the line through (0, 25, 0)
// with direction +x. Frame i observes the flap opened by i*10 deg at
// t = i/10; the observing camera is the world frame in every shot, so the
// derived stabilizations should be identity.
struct HingeFixture {
  std::vector<MotionFrame> frames;
  PointSet static_part;
  PointSet flap_rest;              // flap at angle 0 (the reference frame)
  Vec3 hinge_point{0.0, 25.0, 0.0};
  Vec3 hinge_direction{1.0, 0.0, 0.0};
  std::vector<double> times;
  std::vector<double> angles;       // radians
  std::vector<Mat4> camera_pose;    // per-frame scanner pose; [0] is identity

  Mat4 flap_pose(double angle) const {
    return xformtree::rotation_about_line(hinge_point, hinge_direction, angle);
  }
};

/// With a `camera_rng`, each frame past the first is observed from a
/// different scanner pose, so the recovered stabilizations must match the
/// camera poses; without one, every shot is taken from the world frame.
inline HingeFixture hinge_fixture(int n_frames = 10, Rng* camera_rng = nullptr) {
  HingeFixture out;
  out.static_part = grid_points(5, 5, 5, 10.0);
  for (int i = 0; i <= 6; ++i)
    for (int k = 0; k <= 4; ++k)
      out.flap_rest.push_back({5.0 * i, 25.0, 5.0 * k});
  for (int i = 0; i < n_frames; ++i) {
    const double angle = i * (10.0 * std::numbers::pi / 180.0);
    const double t = i / 10.0;
    const Mat4 cam = (i == 0 || !camera_rng)
                         ? Mat4::identity()
                         : gen::random_perturbation(*camera_rng, 0.1, 20.0);
    const Mat4 observe = xformtree::invert(cam);
    out.times.push_back(t);
    out.angles.push_back(angle);
    out.camera_pose.push_back(cam);
    out.frames.push_back(
        {t, xformtree::apply(observe, out.static_part),
         xformtree::apply(observe,
                          xformtree::apply(out.flap_pose(angle), out.flap_rest))});
  }
  return out;
}

/// Workspace with the hinge scene: group root holding the static object and
/// a Motion node (carrying `track`) whose child is the flap at rest.
struct HingeScene {
  xformtree::Workspace ws;
  xformtree::NodeId root{}, static_obj{}, motion{}, flap{};
};

inline HingeScene hinge_scene(const HingeFixture& fx,
                              const xformtree::MotionTrack& track) {
  HingeScene s;
  s.root = s.ws.insert_group(std::nullopt, "scene");
  s.static_obj = s.ws.insert_object(s.root, fx.static_part, "skull");
  s.motion = s.ws.insert_motion(s.root, track, "hinge motion");
  s.flap = s.ws.insert_object(s.motion, fx.flap_rest, "flap");
  return s;
}

}  // namespace fixture
