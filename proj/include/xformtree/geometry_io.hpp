#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "xformtree/detail/textio.hpp"
#include "xformtree/pointset.hpp"

namespace xformtree {

// Plain-text geometry readers. XYZ: one point per line, whitespace-separated
// decimals, '#' starts a comment, blank lines are ignored. OBJ: only 'v'
// vertex records are kept, every other record type is skipped.

inline PointSet read_xyz(std::istream& in) {
  PointSet out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    double x, y, z;
    if (fields >> x) {
      if (!(fields >> y >> z))
        throw SyntaxError("expected three coordinates", lineno, 1);
      out.push_back({x, y, z});
    } else if (fields.rdstate() & std::ios::failbit) {
      fields.clear();
      std::string tok;
      if (fields >> tok) throw SyntaxError("expected a number, got '" + tok + "'", lineno, 1);
    }
  }
  return out;
}

inline void write_xyz(std::ostream& out, const PointSet& pts) {
  for (const Vec3& p : pts.points())
    out << detail::format_g17(p.x) << ' ' << detail::format_g17(p.y) << ' '
        << detail::format_g17(p.z) << '\n';
}

inline PointSet read_obj(std::istream& in) {
  PointSet out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string record;
    if (!(fields >> record)) continue;
    if (record != "v") continue;
    double x, y, z;
    if (!(fields >> x >> y >> z))
      throw SyntaxError("malformed vertex record", lineno, 1);
    out.push_back({x, y, z});
  }
  return out;
}

inline PointSet read_xyz_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_xyz(in);
}

inline PointSet read_obj_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_obj(in);
}

/// Dispatches on extension: .obj uses the OBJ reader, everything else is
/// treated as XYZ text.
inline PointSet read_geometry_file(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".obj") return read_obj_file(path);
  return read_xyz_file(path);
}

inline void write_xyz_file(const std::filesystem::path& path, const PointSet& pts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_xyz(out, pts);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace xformtree
