#pragma once

// Registration of N >= 2 cameras on a common horizontal plane from pairwise
// epipoles, and multi-view point triangulation.
//
// Gauge: camera 0 has yaw 0 and sits at the origin; the second baseline
// camera sits at unit distance; every center has z = 0.

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "spheresfm/sphere_cam.hpp"

namespace spheresfm {

// e_ij is the bearing of camera j's center seen from camera i, e_ji the
// reverse. Signs are expected to be resolved (e_ij,w = -e_ji,w).
struct PairEstimate {
  int i = 0;
  int j = 1;
  Bearing e_ij;
  Bearing e_ji;
  double weight = 1.0;
};

// Rotation about +Z by theta, acting on world-frame vectors.
Mat3 yaw_matrix(double theta);

struct PlanarRig {
  std::vector<double> thetas;
  std::vector<Vec3> centers;

  int size() const { return int(thetas.size()); }
  CameraPose pose(int camera) const;
  std::vector<CameraPose> poses() const;
};

struct RotationEstimate {
  std::vector<double> thetas;  // wrapped to (-pi, pi], thetas[0] = 0
  double objective = 0.0;      // smooth surrogate at the returned angles
  int iterations = 0;
  bool converged = false;
};

// Sum over pairs of w (1 - (R_i^-1 e_ij . R_j^-1 e_ji)^2).
double rotation_objective(std::span<const double> thetas, std::span<const PairEstimate> pairs);

// Damped Newton from multiple starts. The surrogate only fixes each angle up
// to pi; the branch is then chosen so that e_ij,w = -e_ji,w. Throws
// DisconnectedGraph; reports non-convergence through the result.
RotationEstimate estimate_rotations(std::span<const PairEstimate> pairs, int n_cameras,
                                    std::uint64_t seed = 0);

// Measured unit world-frame direction from camera i to camera j, restricted
// to the horizontal plane; keyed by (i, j) with both orientations present.
std::map<std::pair<int, int>, Vec3> world_directions(std::span<const double> thetas,
                                                     std::span<const PairEstimate> pairs);

// Places baseline.first at the origin and baseline.second at unit distance,
// then triangulates every other center from two already placed cameras
// (preferring the baseline pair). Throws CollinearCamera or DisconnectedGraph.
std::vector<Vec3> estimate_positions(std::span<const double> thetas,
                                     std::span<const PairEstimate> pairs,
                                     std::pair<int, int> baseline = {0, 1});

struct RefineParams {
  int max_steps = 500;
  double gradient_tolerance = 1e-10;
};

struct RefineResult {
  std::vector<Vec3> centers;
  double initial_objective = 0.0;
  double objective = 0.0;
  int steps = 0;
  std::vector<double> history;  // objective after every accepted step
};

// Sum over pairs of w (1 - (unit(C_j - C_i) . d_ij)^2).
double position_objective(std::span<const Vec3> centers,
                          const std::map<std::pair<int, int>, Vec3>& directions,
                          std::span<const PairEstimate> pairs);

// Monotone descent (line-searched Gauss-Newton direction) on
// position_objective with the baseline cameras held fixed.
RefineResult refine_positions(std::span<const Vec3> centers, std::span<const double> thetas,
                              std::span<const PairEstimate> pairs, const RefineParams& params = {},
                              std::pair<int, int> baseline = {0, 1});

struct Track {
  int id = 0;
  std::map<int, PixelCoord> observations;  // camera index -> pixel
  bool consistent = true;
};

struct RayObservation {
  int camera = 0;
  Bearing bearing;  // in the camera frame
};

struct MultiviewPoint {
  Vec3 P = Vec3::Zero();
  std::vector<double> ranges;  // one per observation, same order
  double rms_residual = 0.0;
  bool accepted = true;        // false when any range is negative
};

// min over (P, r_i) of sum |C_i + r_i d_i - P|^2 with d_i = R_i^-1 z_i.
// Throws DegenerateTrack for fewer than two observations or parallel rays.
MultiviewPoint triangulate_multiview(std::span<const RayObservation> observations,
                                     std::span<const CameraPose> poses);

MultiviewPoint triangulate_track(const Track& track, std::span<const CameraPose> poses,
                                 std::span<const ImageSize> sizes);

}  // namespace spheresfm
