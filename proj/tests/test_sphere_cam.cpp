#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spheresfm/image.hpp"
#include "spheresfm/sphere_cam.hpp"

using namespace spheresfm;
using doctest::Approx;
using oracle::thrown;

namespace {
const ImageSize kFull{2048, 1024};
}

TEST_CASE("image size must be 2:1") {
  CHECK_NOTHROW(ImageSize{2048, 1024}.validate());
  CHECK_NOTHROW(ImageSize{2, 1}.validate());
  CHECK(thrown([] { ImageSize{2048, 1000}.validate(); }) == ErrorCategory::InvalidArgument);
  CHECK(thrown([] { ImageSize{0, 0}.validate(); }) == ErrorCategory::InvalidArgument);
  CHECK(ImageSize::from_height(512) == ImageSize{1024, 512});
}

TEST_CASE("pixel to angles") {
  auto a = pixel_to_angles({0, 0}, kFull);
  CHECK(a.theta == 0.0);
  CHECK(a.phi == 0.0);
  a = pixel_to_angles({1024, 512}, kFull);
  CHECK(a.theta == Approx(oracle::kPi).epsilon(1e-15));
  CHECK(a.phi == Approx(oracle::kPi / 2).epsilon(1e-15));
  a = pixel_to_angles({512, 256}, kFull);
  CHECK(a.theta == Approx(oracle::kPi / 2).epsilon(1e-15));
  CHECK(a.phi == Approx(oracle::kPi / 4).epsilon(1e-15));
  // x wraps, y clamps
  CHECK(pixel_to_angles({2048, 0}, kFull).theta == 0.0);
  CHECK(pixel_to_angles({10, 1100}, kFull).phi == Approx(oracle::kPi));
}

TEST_CASE("angles to bearing") {
  Vec3 b = angles_to_bearing({0, oracle::kPi / 2});
  CHECK((b - Vec3(1, 0, 0)).norm() < 1e-15);
  b = angles_to_bearing({oracle::kPi / 2, oracle::kPi / 2});
  CHECK((b - Vec3(0, 1, 0)).norm() < 1e-15);
  b = angles_to_bearing({oracle::kPi / 3, oracle::kPi / 4});
  CHECK(b.x() == Approx(0.353553).epsilon(1e-6));
  CHECK(b.y() == Approx(0.612372).epsilon(1e-6));
  CHECK(b.z() == Approx(0.707107).epsilon(1e-6));
  CHECK(std::abs(b.norm() - 1.0) < 1e-12);
}

TEST_CASE("bearing to angles") {
  auto a = bearing_to_angles(Bearing::normalize({0, 0, 1}));
  CHECK(a.theta == 0.0);
  CHECK(a.phi == 0.0);
  a = bearing_to_angles(Bearing::normalize({0, 0, -1}));
  CHECK(a.theta == 0.0);
  CHECK(a.phi == Approx(oracle::kPi));
  a = bearing_to_angles(Bearing::normalize({-1, 0, 0}));
  CHECK(a.theta == Approx(oracle::kPi));
  CHECK(a.phi == Approx(oracle::kPi / 2));

  std::mt19937_64 gen(11);
  for (int k = 0; k < 10000; ++k) {
    const Vec3 v = oracle::random_unit(gen);
    const auto ang = bearing_to_angles(Bearing::from_unit(v));
    CHECK(ang.theta >= 0.0);
    CHECK(ang.theta < 2 * oracle::kPi);
    const Vec3 back = angles_to_bearing(ang);
    REQUIRE((back - v).norm() < 1e-12);
  }
}

TEST_CASE("bearing and pixel conversions") {
  PixelCoord p = bearing_to_pixel(Bearing::normalize({0, 0, 1}), kFull);
  CHECK(p.x == 0.0);
  CHECK(p.y == 0.0);
  const Bearing b = pixel_to_bearing({1536, 512}, kFull);
  CHECK((b.vec() - Vec3(0, -1, 0)).norm() < 1e-12);
  p = bearing_to_pixel(b, kFull);
  CHECK(p.x == Approx(1536).epsilon(1e-12));
  CHECK(p.y == Approx(512).epsilon(1e-12));

  const Vec3 axes[4] = {{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}};
  const double xs[4] = {0, 512, 1024, 1536};
  for (int k = 0; k < 4; ++k) {
    const PixelCoord q = bearing_to_pixel(Bearing::from_unit(axes[k]), kFull);
    CHECK(q.x == Approx(xs[k]).epsilon(1e-12));
    CHECK(q.y == Approx(512).epsilon(1e-12));
    CHECK((pixel_to_bearing(q, kFull).vec() - axes[k]).norm() < 1e-12);
  }
}

TEST_CASE("pixel round trip on random pixels away from the poles") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ux(0.0, 2048.0);
  std::uniform_real_distribution<double> uy(1.0, 1023.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const PixelCoord p{ux(gen), uy(gen)};
    const Bearing b = pixel_to_bearing(p, kFull);
    REQUIRE(std::abs(b.vec().norm() - 1.0) < 1e-12);
    const PixelCoord q = bearing_to_pixel(b, kFull);
    worst = std::max(worst, wrapped_pixel_distance(p, q, kFull));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("project point") {
  const CameraPose id;
  CHECK((project_point({0, 0, 5}, id).vec() - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((project_point({3, 4, 0}, id).vec() - Vec3(0.6, 0.8, 0)).norm() < 1e-15);
  const CameraPose moved{oracle::yaw(0.3), Vec3(1, 2, 3)};
  CHECK(thrown([&] { project_point(moved.C, moved); }) == ErrorCategory::DegeneratePoint);

  std::mt19937_64 gen(3);
  for (int k = 0; k < 200; ++k) {
    const Vec3 d = oracle::random_unit(gen);
    const Vec3 ref = project_point(moved.C + d, moved).vec();
    CHECK((ref - oracle::look(moved.R, moved.C, moved.C + d)).norm() < 1e-12);
    for (double s : {1e-3, 0.5, 7.0, 1e4}) {
      CHECK((project_point(moved.C + s * d, moved).vec() - ref).norm() < 1e-12);
    }
  }
}

TEST_CASE("disk projection") {
  CHECK(bearing_to_disk(Bearing::normalize({0, 0, 1})).norm() == 0.0);
  CHECK((bearing_to_disk(Bearing::normalize({1, 0, 0})) - Vec2(1, 0)).norm() == 0.0);
  const double c = 0.6;
  const double s = 0.8;
  const Vec2 d = bearing_to_disk(Bearing::normalize({0.6 * c, 0.8 * c, s}));
  CHECK(d.x() == Approx(0.36));
  CHECK(d.y() == Approx(0.48));
  std::mt19937_64 gen(8);
  for (int k = 0; k < 1000; ++k) {
    const Bearing b = Bearing::from_unit(oracle::random_unit(gen));
    CHECK(std::abs(bearing_to_disk(b).norm() - std::sin(bearing_to_angles(b).phi)) < 1e-12);
  }
}

TEST_CASE("bilinear sampling") {
  Raster r(4, 2);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) r.at(x, y) = Rgb{std::uint8_t(10 * x + 100 * y), 7, 9};
  }
  const EquirectImage img(r);
  // Pixel centers sit at +0.5.
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) {
      const auto c = sample_bilinear(img, {x + 0.5, y + 0.5});
      CHECK(c.x() == float(10 * x + 100 * y));
      CHECK(c.y() == 7.0f);
    }
  }
  // Seam: x = 0 lies halfway between the last column and the first.
  auto c = sample_bilinear(img, {0.0, 0.5});
  CHECK(c.x() == Approx(0.5 * (30 + 0)));
  c = sample_bilinear(img, {4.0, 0.5});
  CHECK(c.x() == Approx(0.5 * (30 + 0)));
  c = sample_bilinear(img, {3.75, 0.5});
  CHECK(c.x() == Approx(0.75 * 30 + 0.25 * 0));
  // Vertical clamp at the poles.
  CHECK(sample_bilinear(img, {1.5, 0.0}).x() == 10.0f);
  CHECK(sample_bilinear(img, {1.5, 2.0}).x() == 110.0f);

  const EquirectImage flat(Raster(8, 4, Rgb{12, 34, 56}));
  std::mt19937_64 gen(2);
  for (int k = 0; k < 100; ++k) {
    const PixelCoord p{8.0 * oracle::random_unit(gen).x() + 4, 2.0 + 2.0 * oracle::random_unit(gen).y()};
    CHECK(to_rgb(sample_bilinear(flat, p)) == Rgb{12, 34, 56});
  }
  CHECK(thrown([] { EquirectImage(Raster(5, 2)); }) == ErrorCategory::InvalidArgument);
}
