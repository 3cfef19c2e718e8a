#pragma once

// On-disk project: one JSON document (project.json) plus image and dense
// product files referenced by paths relative to the project directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spheresfm/correspondence.hpp"
#include "spheresfm/epipolar.hpp"
#include "spheresfm/multiview.hpp"
#include "spheresfm/rectify.hpp"

namespace spheresfm {

struct Config {
  RansacParams ransac;
  double filter_epsilon = 0.01;
  DisparityParams dense;
  int rect_height = 0;  // 0: height of the first image of the pair
  int port = 8080;
  std::uint64_t seed = 0;
  int curve_samples = 720;
};

// Defaults, then <dir>/config.json if present, then SPHERESFM_SEED and
// SPHERESFM_PORT. Throws ParseError.
Config load_config(const std::filesystem::path& dir);
void save_config(const Config& config, const std::filesystem::path& dir);

struct ImageEntry {
  std::string id;
  std::string file;  // relative to the project directory
  ImageSize size;
};

struct PairKey {
  std::string a;
  std::string b;

  auto operator<=>(const PairKey&) const = default;
};

// Pair with a < b; swapped tells whether the caller's order was reversed.
PairKey normalize_pair(const std::string& x, const std::string& y, bool* swapped = nullptr);

struct PairSolution {
  std::string method;  // "linear" or "ransac"
  FundamentalMatrix F;
  Bearing e1;
  Bearing e2;
  Mat3 R = Mat3::Identity();
  std::vector<int> inlier_ids;
};

struct RigState {
  std::vector<std::string> image_ids;  // camera index -> image id
  std::vector<double> thetas;
  std::vector<Vec3> centers;
  std::pair<std::string, std::string> baseline;
  double rotation_objective = 0.0;
  double position_objective = 0.0;

  PlanarRig rig() const { return {thetas, centers}; }
};

struct SparsePoint {
  int track = 0;
  Vec3 P = Vec3::Zero();
  Rgb color;
  double rms_residual = 0.0;
  bool accepted = true;
  std::map<std::string, PixelCoord> observations;
};

struct DenseProduct {
  std::string rect1;      // PNG
  std::string rect2;      // PNG
  std::string disparity;  // PFM, empty until computed
  std::string preview;    // PNG
  std::string cloud;      // PLY
  Mat3 R_rect1 = Mat3::Identity();
  Mat3 R_rect2 = Mat3::Identity();
  ImageSize rect_size;
  double baseline = 1.0;
  std::size_t points = 0;
};

struct Project {
  std::filesystem::path dir;
  std::vector<ImageEntry> images;
  std::vector<Correspondence> correspondences;  // image_a < image_b
  int next_correspondence_id = 1;
  std::map<PairKey, PairSolution> solutions;
  std::optional<RigState> rig;
  std::vector<SparsePoint> points;
  std::map<PairKey, DenseProduct> dense;

  const ImageEntry* find_image(const std::string& id) const;
  // Throws UnknownImageId.
  const ImageEntry& image(const std::string& id) const;
  std::map<std::string, ImageSize> image_sizes() const;
  std::vector<Correspondence> pair_correspondences(const PairKey& key) const;
  std::filesystem::path path_of(const std::string& relative) const { return dir / relative; }
};

inline constexpr const char* kProjectFile = "project.json";
inline constexpr const char* kConfigFile = "config.json";

// Creates the directory layout and an empty project. Throws ProjectError
// when a project already exists there.
Project init_project(const std::filesystem::path& dir);
// Throws ProjectError for a missing or malformed project, IoError when a
// referenced image is missing.
Project load_project(const std::filesystem::path& dir);
// Writes project.json.tmp and renames it over project.json.
void save_project(const Project& project);

// Writes bytes to path through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace spheresfm
