#include "spheresfm/formats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "spheresfm/error.hpp"

namespace spheresfm {

namespace {

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", double(v));
  return buf;
}

}  // namespace

void write_ply(std::ostream& out, std::span<const ColoredPoint> points) {
  if (points.empty()) throw Error(ErrorCategory::EmptyCloud, "no points to export");
  out << "ply\n"
      << "format ascii 1.0\n"
      << "comment spheresfm point cloud\n"
      << "comment units: baseline lengths\n"
      << "comment color: first observing image\n"
      << "element vertex " << points.size() << "\n"
      << "property float x\n"
      << "property float y\n"
      << "property float z\n"
      << "property uchar red\n"
      << "property uchar green\n"
      << "property uchar blue\n"
      << "end_header\n";
  for (const ColoredPoint& p : points) {
    out << format_float(float(p.P.x())) << ' ' << format_float(float(p.P.y())) << ' '
        << format_float(float(p.P.z())) << ' ' << int(p.color.r) << ' ' << int(p.color.g) << ' '
        << int(p.color.b) << '\n';
  }
}

void write_ply(const std::filesystem::path& path, std::span<const ColoredPoint> points) {
  if (points.empty()) throw Error(ErrorCategory::EmptyCloud, "no points to export");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::IoError, "cannot write " + path.string());
  write_ply(out, points);
}

std::vector<ColoredPoint> read_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "ply") {
    throw Error(ErrorCategory::ParseError, "missing ply magic");
  }
  std::size_t count = 0;
  bool have_count = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format" && line != "format ascii 1.0") {
      throw Error(ErrorCategory::ParseError, "only ascii PLY is supported");
    }
    if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex" || !ls) throw Error(ErrorCategory::ParseError, "bad element line");
      have_count = true;
    }
  }
  if (!have_count) throw Error(ErrorCategory::ParseError, "missing vertex count");
  std::vector<ColoredPoint> points;
  points.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(in, line)) throw Error(ErrorCategory::ParseError, "truncated vertex list");
    std::istringstream ls(line);
    float x = 0, y = 0, z = 0;
    int r = 0, g = 0, b = 0;
    if (!(ls >> x >> y >> z >> r >> g >> b)) {
      throw Error(ErrorCategory::ParseError, "bad vertex line " + std::to_string(k));
    }
    points.push_back({Vec3(x, y, z), Rgb{std::uint8_t(r), std::uint8_t(g), std::uint8_t(b)}});
  }
  return points;
}

std::vector<ColoredPoint> read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::IoError, "cannot read " + path.string());
  return read_ply(in);
}

void write_pfm(const std::filesystem::path& path, const DisparityMap& disp) {
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes little endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::IoError, "cannot write " + path.string());
  out << "Pf\n" << disp.width << ' ' << disp.height << "\n-1.0\n";
  std::vector<float> row(disp.width);
  for (int r = disp.height - 1; r >= 0; --r) {
    for (int c = 0; c < disp.width; ++c) {
      row[c] = disp.is_valid(c, r) ? disp.at(c, r) : std::numeric_limits<float>::infinity();
    }
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
  }
}

DisparityMap read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::IoError, "cannot read " + path.string());
  std::string magic;
  DisparityMap m;
  double scale = 0.0;
  in >> magic >> m.width >> m.height >> scale;
  in.get();
  if (magic != "Pf" || !in || m.width <= 0 || m.height <= 0 || scale >= 0.0) {
    throw Error(ErrorCategory::ParseError, "unsupported PFM header in " + path.string());
  }
  m.disparity.assign(std::size_t(m.width) * m.height, 0.0f);
  m.valid.assign(m.disparity.size(), 0);
  m.radians_per_pixel = kPi / m.width;
  std::vector<float> row(m.width);
  for (int r = m.height - 1; r >= 0; --r) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
    if (!in) throw Error(ErrorCategory::ParseError, "truncated PFM data");
    for (int c = 0; c < m.width; ++c) {
      const std::size_t idx = std::size_t(r) * m.width + c;
      if (std::isfinite(row[c])) {
        m.disparity[idx] = row[c];
        m.valid[idx] = 1;
      }
    }
  }
  return m;
}

std::vector<std::uint8_t> disparity_preview(const DisparityMap& disp) {
  std::vector<std::uint8_t> out(disp.disparity.size(), 0);
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (std::size_t k = 0; k < disp.disparity.size(); ++k) {
    if (!disp.valid[k]) continue;
    lo = std::min(lo, disp.disparity[k]);
    hi = std::max(hi, disp.disparity[k]);
  }
  for (std::size_t k = 0; k < disp.disparity.size(); ++k) {
    if (!disp.valid[k]) continue;
    const double t = hi > lo ? double(hi - disp.disparity[k]) / double(hi - lo) : 1.0;
    out[k] = std::uint8_t(1 + std::lround(254.0 * t));
  }
  return out;
}

}  // namespace spheresfm
