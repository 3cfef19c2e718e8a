#pragma once

// Bundled synthetic fixtures: rendered cube-room panoramas plus JSONL match
// files and a truth.json with the generating geometry.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spheresfm/synth.hpp"

namespace spheresfm {

struct FixtureTruth {
  CubeRoom room;
  ImageSize size;
  std::vector<std::string> ids;
  std::vector<CameraPose> poses;
  std::vector<Vec3> points;  // manual points first, then imported inliers
};

struct FixtureOptions {
  ImageSize size{512, 256};
  std::uint64_t seed = 1;
  int manual_points = 12;
  int imported_points = 40;  // two-camera only
  int outliers = 15;         // two-camera only
  double noise_px = 0.5;     // imported inliers only
};

// cam0.png, cam1.png, manual.jsonl, imported.jsonl, truth.json.
FixtureTruth write_two_camera_fixture(const std::filesystem::path& dir,
                                      const FixtureOptions& options = {});
// cam0..cam5.png on a planar ring, manual_<a>_<b>.jsonl for each of the 15
// pairs (every point is seen by every camera), truth.json.
FixtureTruth write_six_camera_fixture(const std::filesystem::path& dir,
                                      const FixtureOptions& options = {});

FixtureTruth two_camera_truth(const FixtureOptions& options = {});
FixtureTruth six_camera_truth(const FixtureOptions& options = {});

}  // namespace spheresfm
