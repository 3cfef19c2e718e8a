#include "spheresfm/sphere_cam.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spheresfm/error.hpp"

namespace spheresfm {

namespace {

double wrap_two_pi(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  return t;
}

}  // namespace

void ImageSize::validate() const {
  if (height < 1 || width < 2 || width != 2 * height) {
    throw Error(ErrorCategory::InvalidArgument,
                "equirectangular image must be 2:1, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
}

ImageSize ImageSize::from_height(int height) {
  ImageSize s{2 * height, height};
  s.validate();
  return s;
}

Bearing Bearing::normalize(const Vec3& v) {
  const double n = v.norm();
  if (!(n >= 1e-12)) {
    throw Error(ErrorCategory::DegeneratePoint, "cannot normalize a zero-length direction");
  }
  return Bearing(v / n);
}

bool CameraPose::is_valid() const {
  return (R.transpose() * R - Mat3::Identity()).norm() < 1e-9 &&
         std::abs(R.determinant() - 1.0) < 1e-9;
}

SphericalAngles pixel_to_angles(const PixelCoord& p, const ImageSize& size) {
  SphericalAngles a;
  a.theta = wrap_two_pi(kTwoPi * p.x / size.width);
  a.phi = std::clamp(kPi * p.y / size.height, 0.0, kPi);
  return a;
}

PixelCoord angles_to_pixel(const SphericalAngles& a, const ImageSize& size) {
  PixelCoord p;
  p.x = wrap_two_pi(a.theta) * size.width / kTwoPi;
  if (p.x >= size.width) p.x = 0.0;
  p.y = a.phi * size.height / kPi;
  return p;
}

Bearing angles_to_bearing(const SphericalAngles& a) {
  const double s = std::sin(a.phi);
  return Bearing::from_unit(Vec3(s * std::cos(a.theta), s * std::sin(a.theta), std::cos(a.phi)));
}

SphericalAngles bearing_to_angles(const Bearing& b) {
  const double rho = std::hypot(b.x(), b.y());
  SphericalAngles a;
  // atan2 keeps full precision near the poles, where acos(z) does not.
  a.phi = std::atan2(rho, b.z());
  a.theta = rho == 0.0 ? 0.0 : wrap_two_pi(std::atan2(b.y(), b.x()));
  return a;
}

PixelCoord bearing_to_pixel(const Bearing& b, const ImageSize& size) {
  return angles_to_pixel(bearing_to_angles(b), size);
}

Bearing pixel_to_bearing(const PixelCoord& p, const ImageSize& size) {
  return angles_to_bearing(pixel_to_angles(p, size));
}

Bearing project_point(const Vec3& P, const CameraPose& pose) {
  const Vec3 d = P - pose.C;
  const double rho = d.norm();
  if (rho < 1e-12) {
    throw Error(ErrorCategory::DegeneratePoint, "point coincides with the camera center");
  }
  return Bearing::from_unit(pose.R * (d / rho));
}

Vec2 bearing_to_disk(const Bearing& b) { return Vec2(b.x(), b.y()); }

double wrapped_pixel_distance(const PixelCoord& a, const PixelCoord& b, const ImageSize& size) {
  double dx = std::abs(a.x - b.x);
  dx = std::min(dx, size.width - dx);
  return std::hypot(dx, a.y - b.y);
}

}  // namespace spheresfm
