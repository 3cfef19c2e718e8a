#pragma once

// Pipeline steps on an in-memory Project. Each step either completes or
// throws before touching the project, so callers can save unconditionally
// after a successful return.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spheresfm/project.hpp"

namespace spheresfm {

// Copies the panorama into images/ under the given id (default: file stem).
const ImageEntry& add_image(Project& project, const std::filesystem::path& file,
                            std::optional<std::string> id = std::nullopt);

// Adds one correspondence given in the caller's image order; returns its id.
int add_correspondence(Project& project, const std::string& image_a, const std::string& image_b,
                       const PixelCoord& pa, const PixelCoord& pb,
                       MatchSource source = MatchSource::Manual);
bool delete_correspondence(Project& project, int id);

// Imports a JSONL match file. When a pair is given every record must belong
// to it. Returns the number of records added.
int import_matches_file(Project& project, const std::filesystem::path& file,
                        const std::optional<PairKey>& pair, bool as_manual);

enum class EstimateMethod { Linear, Ransac };

// Linear: eight-point fit on the manual matches of the pair. Ransac: seeded
// RANSAC over every match of the pair.
const PairSolution& estimate_pair(Project& project, const std::string& a, const std::string& b,
                                  EstimateMethod method, const Config& config);

// Relabels imported matches of a solved pair with residual < epsilon as
// augmented. Returns the number of augmented matches.
int augment_pair(Project& project, const std::string& a, const std::string& b, double epsilon);

// Rotations, positions and refinement over every image. The baseline
// defaults to the first two images.
const RigState& register_rig(Project& project, const Config& config,
                             std::optional<std::pair<std::string, std::string>> baseline = {});

// Camera poses used for triangulation: the registered rig, or for a project
// with one solved pair and no rig, that pair with a unit baseline. Image ids
// are returned in camera-index order.
std::pair<std::vector<std::string>, std::vector<CameraPose>> reconstruction_poses(
    const Project& project);

// Tracks from manual and augmented matches, one point per consistent track.
// Returns the number of accepted points.
std::size_t triangulate_points(Project& project);

void rectify_step(Project& project, const std::string& a, const std::string& b,
                  const Config& config);
std::size_t disparity_step(Project& project, const std::string& a, const std::string& b,
                           const Config& config);
std::size_t dense_step(Project& project, const std::string& a, const std::string& b);

std::vector<ColoredPoint> sparse_points(const Project& project);
std::vector<ColoredPoint> dense_points(const Project& project);

// Epipolar polyline in image b for pixel p of image a (either pair order).
std::vector<std::vector<PixelCoord>> epipolar_curve_for(const Project& project,
                                                        const std::string& a,
                                                        const std::string& b, const PixelCoord& p,
                                                        int samples);

// JSON document with one entry per registered camera.
std::string poses_document(const Project& project);

}  // namespace spheresfm
