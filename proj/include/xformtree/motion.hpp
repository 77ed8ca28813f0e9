#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xformtree/geometry_io.hpp"
#include "xformtree/mat4.hpp"
#include "xformtree/motion_track.hpp"
#include "xformtree/pointset.hpp"
#include "xformtree/registration.hpp"
#include "xformtree/tree.hpp"

namespace xformtree {

inline Mat4 sample(const MotionTrack& track, double t) { return track.sample(t); }

/// Cumulative transform of `n` with Motion ancestors evaluated at `t`.
/// Nodes with no Motion ancestor are unaffected by the choice of t.
inline Mat4 pose_at(const Workspace& ws, NodeId n, double t) {
  return ws.cumulative_transform_at(n, t);
}

/// One acquisition frame: the scene split into a part known to be rigidly
/// fixed (used to cancel camera/head motion) and the part that moves.
struct MotionFrame {
  double t = 0.0;
  PointSet static_pts;
  PointSet moving_pts;
};

struct DerivedMotion {
  std::vector<Mat4> stabilization;  // P_S per frame: frame i -> reference frame
  MotionTrack track;                // pose(t_i) maps reference moving part to time t_i
  std::vector<double> residuals;    // per-frame moving-part registration RMS
};

namespace detail {

inline RegistrationResult register_part(const PointSet& from, const PointSet& to,
                                        const IcpParams& params) {
  if (from.size() == to.size()) return least_squares_rigid(from, to, false);
  return icp(from, to, Mat4::identity(), params);
}

}  // namespace detail

/// Recovers a motion track from segmented frames. Per frame, the static
/// part is registered to the reference frame's static part (stabilization
/// P_S), then the stabilized moving part is registered to the reference
/// moving part (P_M); the track stores (t_i, P_M^-1) so sampled poses carry
/// the reference moving part to its time-t_i position. Correspondences are
/// by index when point counts match, ICP otherwise.
inline DerivedMotion derive_motion(std::span<const MotionFrame> frames,
                                   std::size_t reference,
                                   TrackInterpolation interpolation = TrackInterpolation::Hold,
                                   const IcpParams& params = {}) {
  if (frames.size() < 2)
    throw InsufficientFrames("derive_motion needs at least 2 frames, got " +
                             std::to_string(frames.size()));
  if (reference >= frames.size())
    throw InvalidArgument("reference index " + std::to_string(reference) +
                          " out of range");
  const PointSet& static_ref = frames[reference].static_pts;
  const PointSet& moving_ref = frames[reference].moving_pts;

  DerivedMotion out{{}, MotionTrack({{0.0, Mat4::identity()}}), {}};
  std::vector<MotionTrack::Sample> samples;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string where = "frame " + std::to_string(i) + " (t=" +
                              detail::format_g17(frames[i].t) + ")";
    try {
      const RegistrationResult stab =
          detail::register_part(frames[i].static_pts, static_ref, params);
      const PointSet stabilized = apply(stab.transform, frames[i].moving_pts);
      const RegistrationResult moving =
          detail::register_part(stabilized, moving_ref, params);
      out.stabilization.push_back(stab.transform);
      out.residuals.push_back(moving.residual_rms);
      samples.push_back({frames[i].t, invert(moving.transform)});
    } catch (const Error& e) {
      throw RegistrationFailed(where + ": " + e.what());
    }
  }
  out.track = MotionTrack(std::move(samples), interpolation);
  return out;
}

inline DerivedMotion derive_motion(std::initializer_list<MotionFrame> frames,
                                   std::size_t reference,
                                   TrackInterpolation interpolation = TrackInterpolation::Hold,
                                   const IcpParams& params = {}) {
  return derive_motion(std::span<const MotionFrame>(frames.begin(), frames.size()),
                       reference, interpolation, params);
}

struct AnimationFrame {
  double t = 0.0;
  PointSet points;
};

/// Flattened world points of the subtree at each requested time.
inline std::vector<AnimationFrame> export_animation(const Workspace& ws,
                                                    NodeId moving_root,
                                                    std::span<const double> times) {
  if (times.empty()) throw InvalidArgument("export_animation needs at least one time");
  std::vector<AnimationFrame> out;
  out.reserve(times.size());
  for (double t : times) out.push_back({t, ws.flatten_at(moving_root, t)});
  return out;
}

inline std::vector<AnimationFrame> export_animation(const Workspace& ws,
                                                    NodeId moving_root,
                                                    std::initializer_list<double> times) {
  return export_animation(ws, moving_root,
                          std::span<const double>(times.begin(), times.size()));
}

/// Writes one XYZ file per frame (`<prefix>0000.xyz`, ...) plus a manifest
/// `<prefix>manifest.txt` with lines `<index> <t> <filename>`. Returns the
/// manifest path.
inline std::filesystem::path write_animation_frames(
    std::span<const AnimationFrame> frames, const std::filesystem::path& directory,
    const std::string& prefix = "frame_") {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  const fs::path manifest_path = directory / (prefix + "manifest.txt");
  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot write " + manifest_path.string());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s%04zu.xyz", prefix.c_str(), i);
    write_xyz_file(directory / name, frames[i].points);
    manifest << i << ' ' << detail::format_g17(frames[i].t) << ' ' << name << '\n';
  }
  if (!manifest.good()) throw IoError("failed writing " + manifest_path.string());
  return manifest_path;
}

}  // namespace xformtree
