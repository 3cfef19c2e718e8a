#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "spheresfm/sphere_cam.hpp"

namespace spheresfm {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

// Row-major 8-bit RGB raster with no aspect constraint.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  Raster() = default;
  Raster(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

  Rgb& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
};

// 2:1 panorama. Immutable after construction.
class EquirectImage {
 public:
  EquirectImage() = default;
  // Throws InvalidArgument when the raster is not 2:1.
  explicit EquirectImage(Raster raster);

  ImageSize size() const { return {raster_.width, raster_.height}; }
  const Raster& raster() const { return raster_; }
  const Rgb& at(int x, int y) const { return raster_.at(x, y); }

 private:
  Raster raster_;
};

// Bilinear sample at continuous coordinates (pixel centers at +0.5). The
// x axis wraps around the longitude seam; y clamps at the poles.
Eigen::Vector3f sample_bilinear(const EquirectImage& img, const PixelCoord& p);

Rgb to_rgb(const Eigen::Vector3f& c);

// PNG or JPEG, chosen by file signature. Throws IoError.
Raster load_raster(const std::filesystem::path& path);
EquirectImage load_equirect(const std::filesystem::path& path);

// Deterministic 8-bit RGB PNG (no timestamps or text chunks).
void save_png(const Raster& raster, const std::filesystem::path& path);
void save_png_gray(int width, int height, const std::vector<std::uint8_t>& gray,
                   const std::filesystem::path& path);

}  // namespace spheresfm
