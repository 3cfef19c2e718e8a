#include "spheresfm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "spheresfm/error.hpp"
#include "spheresfm/rng.hpp"

namespace spheresfm {

namespace {

double lattice(std::uint64_t seed, int face, std::int64_t i, std::int64_t j) {
  std::uint64_t h = splitmix64(seed ^ (std::uint64_t(face) * 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ std::uint64_t(i));
  h = splitmix64(h ^ std::uint64_t(j));
  return double(h >> 11) * (1.0 / 9007199254740992.0);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, int face, double u, double v) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto i = std::int64_t(fu);
  const auto j = std::int64_t(fv);
  const double su = smooth(u - fu);
  const double sv = smooth(v - fv);
  const double a = lattice(seed, face, i, j);
  const double b = lattice(seed, face, i + 1, j);
  const double c = lattice(seed, face, i, j + 1);
  const double d = lattice(seed, face, i + 1, j + 1);
  return (a * (1 - su) + b * su) * (1 - sv) + (c * (1 - su) + d * su) * sv;
}

// Face index and in-plane coordinates of a surface point.
int face_of(const CubeRoom& room, const Vec3& P, double& u, double& v) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double d0 = std::abs(P[axis] - room.min_corner[axis]);
    const double d1 = std::abs(P[axis] - room.max_corner[axis]);
    if (d0 < best_dist) {
      best_dist = d0;
      best = 2 * axis;
    }
    if (d1 < best_dist) {
      best_dist = d1;
      best = 2 * axis + 1;
    }
  }
  const int axis = best / 2;
  u = P[(axis + 1) % 3];
  v = P[(axis + 2) % 3];
  return best;
}

}  // namespace

PlanarScene random_planar_scene(int n_cameras, int n_points, std::uint64_t seed,
                                double rig_radius, double min_range) {
  if (n_cameras < 2 || n_points < 0) {
    throw Error(ErrorCategory::InvalidArgument, "need at least two cameras");
  }
  std::mt19937_64 gen(seed);
  PlanarScene s;
  s.rig.thetas.push_back(0.0);
  s.rig.centers.push_back(Vec3::Zero());
  const double a1 = kTwoPi * uniform_unit(gen);
  s.rig.thetas.push_back(kTwoPi * uniform_unit(gen) - kPi);
  s.rig.centers.push_back(Vec3(std::cos(a1), std::sin(a1), 0.0));
  while (int(s.rig.centers.size()) < n_cameras) {
    const Vec3 C(rig_radius * (2 * uniform_unit(gen) - 1), rig_radius * (2 * uniform_unit(gen) - 1),
                 0.0);
    bool separated = true;
    for (const Vec3& other : s.rig.centers) separated = separated && (C - other).norm() > 0.3;
    // Keep centers well away from the line through the first two.
    const bool off_line = std::abs(C.x() * s.rig.centers[1].y() - C.y() * s.rig.centers[1].x()) > 0.2;
    if (!separated || !off_line) continue;
    s.rig.thetas.push_back(kTwoPi * uniform_unit(gen) - kPi);
    s.rig.centers.push_back(C);
  }
  const double extent = rig_radius + 4.0;
  while (int(s.points.size()) < n_points) {
    const Vec3 P(extent * (2 * uniform_unit(gen) - 1), extent * (2 * uniform_unit(gen) - 1),
                 3.0 * (2 * uniform_unit(gen) - 1));
    bool ok = true;
    for (const Vec3& C : s.rig.centers) ok = ok && (P - C).norm() >= min_range;
    if (ok) s.points.push_back(P);
  }
  return s;
}

double room_range(const CubeRoom& room, const Vec3& origin, const Vec3& dir) {
  double t = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] > 1e-15) t = std::min(t, (room.max_corner[axis] - origin[axis]) / dir[axis]);
    if (dir[axis] < -1e-15) t = std::min(t, (room.min_corner[axis] - origin[axis]) / dir[axis]);
  }
  return t;
}

Vec3 room_hit(const CubeRoom& room, const Vec3& origin, const Vec3& dir) {
  return origin + room_range(room, origin, dir) * dir;
}

Rgb room_color(const CubeRoom& room, const Vec3& P) {
  double u = 0.0;
  double v = 0.0;
  const int face = face_of(room, P, u, v);
  double n = 0.0;
  n += 0.5 * value_noise(room.seed, face, 2.0 * u, 2.0 * v);
  n += 0.3 * value_noise(room.seed + 1, face, 5.0 * u, 5.0 * v);
  n += 0.2 * value_noise(room.seed + 2, face, 11.0 * u, 11.0 * v);
  static constexpr double kTint[6][3] = {{1.0, 0.8, 0.7}, {0.7, 0.9, 1.0}, {0.8, 1.0, 0.7},
                                         {1.0, 1.0, 0.7}, {0.9, 0.8, 1.0}, {0.7, 1.0, 1.0}};
  const double level = 20.0 + 235.0 * std::clamp((n - 0.2) / 0.6, 0.0, 1.0);
  return Rgb{std::uint8_t(std::lround(level * kTint[face][0])),
             std::uint8_t(std::lround(level * kTint[face][1])),
             std::uint8_t(std::lround(level * kTint[face][2]))};
}

EquirectImage render_room(const CubeRoom& room, const CameraPose& pose, const ImageSize& size,
                          int samples) {
  size.validate();
  if (samples < 1) throw Error(ErrorCategory::InvalidArgument, "samples must be positive");
  Raster raster(size.width, size.height);
  const Mat3 to_world = pose.R.transpose();
  const double inv = 1.0 / (samples * samples);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int sy = 0; sy < samples; ++sy) {
        for (int sx = 0; sx < samples; ++sx) {
          const PixelCoord p{x + (sx + 0.5) / samples, y + (sy + 0.5) / samples};
          const Vec3 dir = to_world * pixel_to_bearing(p, size).vec();
          const Rgb c = room_color(room, room_hit(room, pose.C, dir));
          acc[0] += c.r;
          acc[1] += c.g;
          acc[2] += c.b;
        }
      }
      raster.at(x, y) = Rgb{std::uint8_t(std::lround(acc[0] * inv)),
                            std::uint8_t(std::lround(acc[1] * inv)),
                            std::uint8_t(std::lround(acc[2] * inv))};
    }
  }
  return EquirectImage(std::move(raster));
}

std::vector<Vec3> random_wall_points(const CubeRoom& room, int n, std::uint64_t seed,
                                     double margin) {
  std::mt19937_64 gen(seed);
  std::vector<Vec3> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const int face = int(uniform_index(gen, 6));
    const int axis = face / 2;
    Vec3 P;
    for (int a = 0; a < 3; ++a) {
      const double lo = room.min_corner[a] + margin;
      const double hi = room.max_corner[a] - margin;
      P[a] = lo + (hi - lo) * uniform_unit(gen);
    }
    P[axis] = face % 2 == 0 ? room.min_corner[axis] : room.max_corner[axis];
    out.push_back(P);
  }
  return out;
}

}  // namespace spheresfm
