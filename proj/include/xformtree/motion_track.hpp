#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xformtree/detail/textio.hpp"
#include "xformtree/mat4.hpp"

namespace xformtree {

enum class TrackInterpolation {
  Hold,    // step function: keep the earlier pose until the next sample
  Linear,  // lerp translation, constant-axis geodesic blend for rotation
};

/// Time-parameterized rigid transform: strictly increasing sample times,
/// every pose rigid within 1e-6. Sampling outside the covered interval
/// clamps to the boundary poses.
class MotionTrack {
 public:
  struct Sample {
    double time = 0.0;
    Mat4 pose;
  };

  static constexpr double kRigidTol = 1e-6;

  explicit MotionTrack(std::vector<Sample> samples,
                       TrackInterpolation interpolation = TrackInterpolation::Hold)
      : samples_(std::move(samples)), interpolation_(interpolation) {
    if (samples_.empty()) throw InvalidTrack("a motion track needs at least one sample");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (i > 0 && !(samples_[i].time > samples_[i - 1].time))
        throw InvalidTrack("sample times must be strictly increasing");
      if (!is_rigid(samples_[i].pose, kRigidTol))
        throw InvalidTrack("pose at t=" + std::to_string(samples_[i].time) +
                           " is not rigid");
    }
  }

  const std::vector<Sample>& samples() const { return samples_; }
  TrackInterpolation interpolation() const { return interpolation_; }
  double start_time() const { return samples_.front().time; }
  double end_time() const { return samples_.back().time; }

  /// Pose at time t. Exact sample times return the stored pose bit-for-bit.
  Mat4 sample(double t) const {
    if (t <= samples_.front().time) return samples_.front().pose;
    if (t >= samples_.back().time) return samples_.back().pose;
    auto upper = std::upper_bound(
        samples_.begin(), samples_.end(), t,
        [](double value, const Sample& s) { return value < s.time; });
    const Sample& b = *upper;
    const Sample& a = *(upper - 1);
    if (t == a.time) return a.pose;
    if (interpolation_ == TrackInterpolation::Hold) return a.pose;
    const double u = (t - a.time) / (b.time - a.time);
    return blend(a.pose, b.pose, u);
  }

  bool operator==(const MotionTrack& o) const {
    if (interpolation_ != o.interpolation_ || samples_.size() != o.samples_.size())
      return false;
    for (std::size_t i = 0; i < samples_.size(); ++i)
      if (samples_[i].time != o.samples_[i].time ||
          !(samples_[i].pose == o.samples_[i].pose))
        return false;
    return true;
  }

 private:
  // Rigid blend: translation componentwise, rotation along the shortest
  // geodesic between the two orientations.
  static Mat4 blend(const Mat4& a, const Mat4& b, double u) {
    const Vec3 t = a.translation_part() * (1.0 - u) + b.translation_part() * u;
    const Mat3 ra = a.linear();
    const Mat3 delta = ra.transposed() * b.linear();
    const AxisAngle aa = rotation_axis_angle(delta);
    Mat3 rot = ra;
    if (aa.angle > 1e-15)
      rot = ra * Mat4::rotation(aa.axis, aa.angle * u).linear();
    return Mat4::from_blocks(rot, t);
  }

  std::vector<Sample> samples_;
  TrackInterpolation interpolation_;
};

// .mot track format: one record per line, `t tx ty tz qw qx qy qz`
// (seconds, translation in mm, unit quaternion); '#' starts a comment.
// The pose maps reference-pose coordinates to their time-t placement.

inline MotionTrack read_motion_track(
    std::istream& in, TrackInterpolation interpolation = TrackInterpolation::Hold) {
  std::vector<MotionTrack::Sample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    double t, tx, ty, tz;
    Quaternion q;
    if (!(fields >> t)) continue;  // blank line
    if (!(fields >> tx >> ty >> tz >> q.w >> q.x >> q.y >> q.z))
      throw SyntaxError("expected `t tx ty tz qw qx qy qz`", lineno, 1);
    samples.push_back({t, rigid_from_quaternion({tx, ty, tz}, q)});
  }
  return MotionTrack(std::move(samples), interpolation);
}

inline void write_motion_track(std::ostream& out, const MotionTrack& track) {
  for (const auto& s : track.samples()) {
    const Vec3 t = s.pose.translation_part();
    const Quaternion q = quaternion_from_rotation(s.pose.linear());
    out << detail::format_g17(s.time) << ' ' << detail::format_g17(t.x) << ' '
        << detail::format_g17(t.y) << ' ' << detail::format_g17(t.z) << ' '
        << detail::format_g17(q.w) << ' ' << detail::format_g17(q.x) << ' '
        << detail::format_g17(q.y) << ' ' << detail::format_g17(q.z) << '\n';
  }
}

inline MotionTrack read_motion_track_file(
    const std::filesystem::path& path,
    TrackInterpolation interpolation = TrackInterpolation::Hold) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_motion_track(in, interpolation);
}

inline void write_motion_track_file(const std::filesystem::path& path,
                                    const MotionTrack& track) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_motion_track(out, track);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace xformtree
