#pragma once

// Synthetic scenes with known geometry, used by tests, benchmarks and the
// fixture generator.

#include <cstdint>
#include <vector>

#include "spheresfm/image.hpp"
#include "spheresfm/multiview.hpp"
#include "spheresfm/sphere_cam.hpp"

namespace spheresfm {

// Cameras on the z = 0 plane with random yaw; camera 0 is the identity pose
// at the origin and camera 1 sits at unit distance. Points are uniform in a
// box around the rig and at least min_range from every camera.
struct PlanarScene {
  PlanarRig rig;
  std::vector<Vec3> points;
};

PlanarScene random_planar_scene(int n_cameras, int n_points, std::uint64_t seed,
                                double rig_radius = 1.5, double min_range = 1.0);

// Axis-aligned box room with procedurally textured walls, seen from inside.
struct CubeRoom {
  Vec3 min_corner{-4.0, -3.0, -1.5};
  Vec3 max_corner{4.0, 3.0, 1.2};
  std::uint64_t seed = 7;
};

// Distance from origin (inside the room) to the wall along a unit direction.
double room_range(const CubeRoom& room, const Vec3& origin, const Vec3& dir);
Vec3 room_hit(const CubeRoom& room, const Vec3& origin, const Vec3& dir);
// Texture color at a point on the room surface.
Rgb room_color(const CubeRoom& room, const Vec3& P);

// Ray-cast equirectangular render with samples x samples supersampling.
EquirectImage render_room(const CubeRoom& room, const CameraPose& pose, const ImageSize& size,
                          int samples = 2);

// Random points on the walls, each at least margin from any edge and visible
// (trivially, the room is convex) from any interior camera.
std::vector<Vec3> random_wall_points(const CubeRoom& room, int n, std::uint64_t seed,
                                     double margin = 0.3);

}  // namespace spheresfm
