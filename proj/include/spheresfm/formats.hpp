#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "spheresfm/rectify.hpp"

namespace spheresfm {

// ASCII PLY with float x y z and uchar red green blue, in the given order.
// Throws EmptyCloud for an empty point set.
void write_ply(std::ostream& out, std::span<const ColoredPoint> points);
void write_ply(const std::filesystem::path& path, std::span<const ColoredPoint> points);
// Reads the subset of PLY that write_ply produces. Throws ParseError.
std::vector<ColoredPoint> read_ply(std::istream& in);
std::vector<ColoredPoint> read_ply(const std::filesystem::path& path);

// Single-channel little-endian PFM, bottom row first; invalid pixels are +inf.
void write_pfm(const std::filesystem::path& path, const DisparityMap& disp);
DisparityMap read_pfm(const std::filesystem::path& path);

// 8-bit preview: valid pixels min-max normalized to 1..255 with larger
// disparity darker; invalid pixels are 0.
std::vector<std::uint8_t> disparity_preview(const DisparityMap& disp);

}  // namespace spheresfm
