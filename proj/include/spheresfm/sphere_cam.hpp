#pragma once

// Unit-sphere camera model: equirectangular pixels, spherical angles,
// bearing vectors and the circular disk projection.
//
// Conventions
//   - Pixel (i, j) has its center at continuous coordinate (i + 0.5, j + 0.5).
//   - theta is longitude in [0, 2pi) growing with x; phi is colatitude in
//     [0, pi] growing with y, phi = 0 is the +Z pole.
//   - At the poles theta is defined as 0.

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace spheresfm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct ImageSize {
  int width = 0;
  int height = 0;

  // Throws InvalidArgument unless width = 2 * height and height >= 1.
  void validate() const;
  static ImageSize from_height(int height);

  bool operator==(const ImageSize&) const = default;
};

struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

struct SphericalAngles {
  double theta = 0.0;
  double phi = 0.0;
};

// Unit 3-vector on the viewing sphere.
class Bearing {
 public:
  Bearing() : v_(0.0, 0.0, 1.0) {}

  // Normalizes v; throws DegeneratePoint when |v| < 1e-12.
  static Bearing normalize(const Vec3& v);
  // Trusts the caller that v is already unit length.
  static Bearing from_unit(const Vec3& v) { return Bearing(v); }

  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }  // NOLINT(google-explicit-constructor)

  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }

  Bearing operator-() const { return Bearing(-v_); }

 private:
  explicit Bearing(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

// R maps world directions into the camera frame; C is the camera center.
struct CameraPose {
  Mat3 R = Mat3::Identity();
  Vec3 C = Vec3::Zero();

  // Checks orthonormality and det = +1 within 1e-9.
  bool is_valid() const;
};

SphericalAngles pixel_to_angles(const PixelCoord& p, const ImageSize& size);
PixelCoord angles_to_pixel(const SphericalAngles& a, const ImageSize& size);

Bearing angles_to_bearing(const SphericalAngles& a);
SphericalAngles bearing_to_angles(const Bearing& b);

PixelCoord bearing_to_pixel(const Bearing& b, const ImageSize& size);
Bearing pixel_to_bearing(const PixelCoord& p, const ImageSize& size);

// R (P - C) / |P - C|. Throws DegeneratePoint when |P - C| < 1e-12.
Bearing project_point(const Vec3& P, const CameraPose& pose);

// Vertical projection onto the image plane: drops the Z component.
Vec2 bearing_to_disk(const Bearing& b);

// Horizontal pixel distance accounting for the longitude seam.
double wrapped_pixel_distance(const PixelCoord& a, const PixelCoord& b, const ImageSize& size);

}  // namespace spheresfm
