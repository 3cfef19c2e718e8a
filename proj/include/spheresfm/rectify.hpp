#pragma once

// Spherical rectification about the baseline, scanline disparity and
// law-of-sines depth.
//
// Rectified raster layout: row r is the longitude about the baseline,
// (r + 0.5) * 2pi / rows; column c is the latitude from the baseline
// direction, (c + 0.5) * pi / cols. Column 0 looks along the baseline
// towards camera 2. For an ImageSize s the raster is s.height columns by
// s.width rows, i.e. the equirectangular layout transposed.

#include <cstdint>
#include <optional>
#include <vector>

#include "spheresfm/epipolar.hpp"
#include "spheresfm/image.hpp"
#include "spheresfm/sphere_cam.hpp"

namespace spheresfm {

struct RectificationFrames {
  Mat3 R_rect1 = Mat3::Identity();  // camera-1 directions -> rectified
  Mat3 R_rect2 = Mat3::Identity();  // camera-2 directions -> rectified
};

// R_rect1 sends e1 to +Z; its X axis is world +Z projected onto the plane
// orthogonal to e1, or world +X when e1 is within 1e-9 of +-Z.
// R_rect2 = R_rect1 R^-1. Throws FrameDegenerate for a zero e1.
RectificationFrames rectification_rotations(const Bearing& e1, const Mat3& R);

struct RectifiedPair {
  Raster rect1;
  Raster rect2;
  Mat3 R_rect1 = Mat3::Identity();
  Mat3 R_rect2 = Mat3::Identity();
  ImageSize rect_size;

  int rows() const { return rect1.height; }
  int cols() const { return rect1.width; }
};

// Bearing in the rectified frame through continuous raster coordinate
// (col, row); pixel centers are at +0.5.
Vec3 rectified_bearing(double col, double row, const ImageSize& rect_size);
// Continuous (col, row) of a rectified-frame bearing.
Vec2 rectified_coords(const Vec3& b, const ImageSize& rect_size);

RectifiedPair rectify_pair(const EquirectImage& img1, const EquirectImage& img2,
                           const Bearing& e1, const Mat3& R, const ImageSize& rect_size);
RectifiedPair rectify_pair(const EquirectImage& img1, const EquirectImage& img2,
                           const TwoViewSolution& solution, const ImageSize& rect_size);
RectifiedPair rectify_pair_serial(const EquirectImage& img1, const EquirectImage& img2,
                                  const Bearing& e1, const Mat3& R, const ImageSize& rect_size);

struct DisparityParams {
  int window = 11;
  int d_min = 1;
  int d_max = -1;  // -1: cols / 4
  double ncc_floor = 0.5;
  double lr_tolerance = 1.0;
  double epipole_margin = 0.02;  // fraction of columns masked at each end
  double min_texture = 0.5;      // minimum gray-level standard deviation
  bool subpixel = true;
};

struct DisparityMap {
  int width = 0;
  int height = 0;
  std::vector<float> disparity;  // pixels, d = col2 - col1
  std::vector<std::uint8_t> valid;
  double radians_per_pixel = 0.0;

  float at(int col, int row) const { return disparity[std::size_t(row) * width + col]; }
  bool is_valid(int col, int row) const { return valid[std::size_t(row) * width + col] != 0; }
  std::size_t valid_count() const;
};

// NCC block matching along rows with a left-right consistency check.
// Rows are independent and computed in parallel.
DisparityMap compute_disparity(const RectifiedPair& pair, const DisparityParams& params = {});
// Direct per-pixel evaluation of the same matcher, kept as a reference.
DisparityMap compute_disparity_reference(const RectifiedPair& pair,
                                         const DisparityParams& params = {});

struct RangePair {
  double range1 = 0.0;
  double range2 = 0.0;
};

// Law of sines in the epipolar plane with x2 = x1 + d. Throws
// DegenerateDisparity when d <= 1e-9 or x1 + d >= pi.
RangePair disparity_to_range(double x1, double d, double baseline);

struct ColoredPoint {
  Vec3 P;
  Rgb color;
};

struct DenseCloud {
  std::vector<ColoredPoint> points;
};

// One point per valid disparity pixel, in camera-1 coordinates, or in world
// coordinates when camera_1 (its pose) is given.
DenseCloud dense_cloud(const DisparityMap& disp, const RectifiedPair& pair, double baseline,
                       const std::optional<CameraPose>& camera_1 = std::nullopt);

}  // namespace spheresfm
