#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "spheresfm/correspondence.hpp"
#include "spheresfm/epipolar.hpp"

using namespace spheresfm;
using oracle::thrown;

namespace {

// Panorama pixel of a direction, written from the angle definitions.
PixelCoord direct_pixel(const Vec3& d, const ImageSize& size) {
  double theta = std::atan2(d.y(), d.x());
  if (theta < 0) theta += 2 * oracle::kPi;
  const double phi = std::acos(d.z() / d.norm());
  return {theta * size.width / (2 * oracle::kPi), phi * size.height / oracle::kPi};
}

EquirectImage gradient_image(int w, int h) {
  Raster r(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      r.at(x, y) = {std::uint8_t(x * 255 / (w - 1)), std::uint8_t(y * 255 / (h - 1)), std::uint8_t((x * 7 + y * 3) % 256)};
    }
  }
  return EquirectImage(std::move(r));
}

Correspondence match(const std::string& a, const std::string& b, PixelCoord pa, PixelCoord pb,
                     MatchSource source = MatchSource::Manual) {
  Correspondence c;
  c.image_a = a;
  c.image_b = b;
  c.pa = pa;
  c.pb = pb;
  c.source = source;
  return c;
}

using Partition = std::set<std::set<std::tuple<int, double, double>>>;

Partition partition(const TrackSet& ts) {
  Partition out;
  for (const Track& t : ts.tracks) {
    std::set<std::tuple<int, double, double>> s;
    for (const auto& [cam, p] : t.observations) s.insert({cam, p.x, p.y});
    out.insert(s);
  }
  return out;
}

}  // namespace

TEST_CASE("cube face parameterization") {
  const int fs = 64;
  const std::vector<std::pair<CubeFace, Vec3>> axes{
      {CubeFace::PosX, {1, 0, 0}}, {CubeFace::NegX, {-1, 0, 0}}, {CubeFace::PosY, {0, 1, 0}},
      {CubeFace::NegY, {0, -1, 0}}, {CubeFace::PosZ, {0, 0, 1}}, {CubeFace::NegZ, {0, 0, -1}}};
  for (const auto& [face, axis] : axes) {
    CHECK((cube_face_direction({face, fs / 2.0, fs / 2.0}, fs) - axis).norm() < 1e-15);
    // Corners sit at 1/sqrt(3) after normalization.
    const Vec3 corner = cube_face_direction({face, 0.0, 0.0}, fs).normalized();
    for (int k = 0; k < 3; ++k) CHECK(std::abs(std::abs(corner[k]) - 1 / std::sqrt(3.0)) < 1e-15);
  }
  // Side faces keep +Z at the top of the image.
  CHECK(cube_face_direction({CubeFace::PosX, 32, 0}, fs).z() > 0);
  CHECK(cube_face_direction({CubeFace::NegY, 32, 0}, fs).z() > 0);

  const ImageSize size{1024, 512};
  const PixelCoord c = cubeface_to_equirect({CubeFace::PosX, 32, 32}, fs, size);
  CHECK(std::abs(c.x) < 1e-9);
  CHECK(std::abs(c.y - 256) < 1e-9);
  const PixelCoord top = cubeface_to_equirect({CubeFace::PosZ, 32, 32}, fs, size);
  CHECK(std::abs(top.y) < 1e-9);
}

TEST_CASE("cube face round trip") {
  const ImageSize size{2048, 1024};
  const int fs = 500;
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0.0, double(fs));
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const CubeFacePoint p{CubeFace(k % 6), u(gen), u(gen)};
    const PixelCoord e = cubeface_to_equirect(p, fs, size);
    const PixelCoord d = direct_pixel(cube_face_direction(p, fs), size);
    CHECK(wrapped_pixel_distance(e, d, size) < 1e-6);
    const CubeFacePoint back = equirect_to_cubeface(e, size, fs);
    // Points on a face edge may legitimately come back on the neighbour.
    if (back.face == p.face) worst = std::max({worst, std::abs(back.u - p.u), std::abs(back.v - p.v)});
  }
  CHECK(worst < 1e-9);

  // Equirect -> face -> equirect away from the poles.
  std::uniform_real_distribution<double> ux(0.0, double(size.width));
  std::uniform_real_distribution<double> uy(10.0, double(size.height) - 10.0);
  for (int k = 0; k < 10000; ++k) {
    const PixelCoord p{ux(gen), uy(gen)};
    const PixelCoord q = cubeface_to_equirect(equirect_to_cubeface(p, size, fs), fs, size);
    REQUIRE(wrapped_pixel_distance(p, q, size) < 1e-9);
  }
}

TEST_CASE("seam on the -X face") {
  const ImageSize size{1024, 512};
  const int fs = 100;
  // Crossing the middle column of -X moves across theta = pi without jumps.
  const PixelCoord l = cubeface_to_equirect({CubeFace::NegX, 49.9, 50}, fs, size);
  const PixelCoord r = cubeface_to_equirect({CubeFace::NegX, 50.1, 50}, fs, size);
  CHECK(std::abs(l.x - 512) < 1.0);
  CHECK(std::abs(r.x - 512) < 1.0);
  CHECK(wrapped_pixel_distance(l, r, size) < 1.0);
  // The +X face straddles the wrap at x = 0.
  const PixelCoord a = cubeface_to_equirect({CubeFace::PosX, 49.9, 50}, fs, size);
  const PixelCoord b = cubeface_to_equirect({CubeFace::PosX, 50.1, 50}, fs, size);
  CHECK(wrapped_pixel_distance(a, b, size) < 1.0);
  CHECK(a.x >= 0.0);
  CHECK(a.x < 1024.0);
  CHECK(b.x >= 0.0);
  CHECK(b.x < 1024.0);
}

TEST_CASE("cubemap resampling") {
  const EquirectImage img = gradient_image(256, 128);
  const int fs = 33;
  const CubeFaceSet set = equirect_to_cubemap(img, fs, "pano");
  CHECK(set.face_size == fs);
  CHECK(set.source_id == "pano");
  for (const Raster& f : set.faces) {
    CHECK(f.width == fs);
    CHECK(f.height == fs);
  }
  // Face center pixel samples the face axis.
  CHECK(set.face(CubeFace::PosX).at(16, 16) == to_rgb(sample_bilinear(img, {0.0, 64.0})));
  CHECK(set.face(CubeFace::PosY).at(16, 16) == to_rgb(sample_bilinear(img, {64.0, 64.0})));

  const CubeFaceSet serial = equirect_to_cubemap_serial(img, fs);
  for (int f = 0; f < 6; ++f) CHECK(serial.faces[f].pixels == set.faces[f].pixels);

  const EquirectImage flat(Raster(64, 32, Rgb{10, 200, 30}));
  for (const Raster& f : equirect_to_cubemap(flat, 8).faces) {
    for (const Rgb& p : f.pixels) CHECK(p == Rgb{10, 200, 30});
  }
  CHECK(thrown([&] { equirect_to_cubemap(flat, 0); }) == ErrorCategory::InvalidArgument);
}

TEST_CASE("import matches") {
  const std::map<std::string, ImageSize> images{{"a", {1024, 512}}, {"b", {2048, 1024}}};
  std::ostringstream file;
  for (int k = 0; k < 100; ++k) {
    file << R"({"image_a":"a","image_b":"b","xa":)" << k * 10.25 << R"(,"ya":)" << k * 5
         << R"(,"xb":)" << k * 3 << R"(,"yb":)" << k << R"(,"score":0.5})" << "\n";
  }
  file << "\n";  // blank lines are allowed
  std::istringstream in(file.str());
  const auto matches = import_matches(in, images);
  REQUIRE(matches.size() == 100);
  CHECK(matches[7].pa.x == 7 * 10.25);
  CHECK(matches[7].pb.y == 7);
  CHECK(matches[7].source == MatchSource::Imported);
  CHECK(matches[7].score == 0.5);

  std::istringstream missing(R"({"image_a":"a","image_b":"zz","xa":1,"ya":1,"xb":1,"yb":1})");
  CHECK(thrown([&] { import_matches(missing, images); }) == ErrorCategory::UnknownImageId);
  std::istringstream broken("{\"image_a\":\"a\"\n");
  CHECK(thrown([&] { import_matches(broken, images); }) == ErrorCategory::ParseError);
  std::istringstream no_field(R"({"image_a":"a","image_b":"b","xa":1,"ya":1,"xb":1})");
  CHECK(thrown([&] { import_matches(no_field, images); }) == ErrorCategory::ParseError);
  std::istringstream outside(R"({"image_a":"a","image_b":"b","xa":1,"ya":600,"xb":1,"yb":1})");
  CHECK(thrown([&] { import_matches(outside, images); }) == ErrorCategory::ParseError);

  // Cube-face records are converted on ingest.
  std::istringstream face(
      R"({"image_a":"a","image_b":"b","face_a":"+Y","xa":10.5,"ya":80.25,"face_size":128,"xb":5,"yb":6})");
  const auto f = import_matches(face, images);
  REQUIRE(f.size() == 1);
  const double a = 2 * 10.5 / 128 - 1;
  const double b = 2 * 80.25 / 128 - 1;
  const PixelCoord expected = direct_pixel(Vec3(a, 1, -b), {1024, 512});
  CHECK(wrapped_pixel_distance(f[0].pa, expected, {1024, 512}) < 1e-6);
  CHECK(f[0].pb.x == 5);
}

TEST_CASE("augment pool") {
  const ImageSize size{1024, 512};
  const Mat3 R = oracle::yaw(0.3);
  const Vec3 T(1, 0.4, 0);
  const FundamentalMatrix F = fundamental_from_pose(R, T);
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  auto true_match = [&](MatchSource src) {
    for (;;) {
      const Vec3 P(6 * u(gen), 6 * u(gen), 2 * u(gen));
      if (P.norm() < 1 || (P - T).norm() < 1) continue;
      return match("a", "b", direct_pixel(P, size), direct_pixel(oracle::look(R, T, P), size), src);
    }
  };
  std::vector<Correspondence> manual;
  for (int k = 0; k < 10; ++k) manual.push_back(true_match(MatchSource::Manual));
  std::vector<Correspondence> good;
  for (int k = 0; k < 50; ++k) good.push_back(true_match(MatchSource::Imported));
  std::vector<Correspondence> junk;
  while (junk.size() < 50) {
    const Correspondence c = match("a", "b", {512 + 500 * u(gen), 256 + 250 * u(gen)},
                                   {512 + 500 * u(gen), 256 + 250 * u(gen)}, MatchSource::Imported);
    if (epipolar_residual(to_bearings(c, size, size), F) > 1e-2) junk.push_back(c);
  }

  CHECK(augment_pool(manual, junk, F, 1e-3, size, size).size() == manual.size());

  std::vector<Correspondence> imported = good;
  imported.insert(imported.end(), junk.begin(), junk.end());
  const auto pool = augment_pool(manual, imported, F, 1e-3, size, size);
  int admitted_true = 0;
  int admitted_junk = 0;
  for (std::size_t k = manual.size(); k < pool.size(); ++k) {
    CHECK(pool[k].source == MatchSource::Augmented);
    REQUIRE(pool[k].residual.has_value());
    CHECK(*pool[k].residual < 1e-3);
    const bool is_junk = std::any_of(junk.begin(), junk.end(), [&](const Correspondence& j) {
      return j.pa.x == pool[k].pa.x && j.pb.x == pool[k].pb.x;
    });
    (is_junk ? admitted_junk : admitted_true)++;
  }
  CHECK(admitted_true >= 49);
  CHECK(admitted_junk == 0);
  for (const Correspondence& c : pool) CHECK(c.residual.has_value());

  // Idempotent.
  const auto again = augment_pool(pool, {}, F, 1e-3, size, size);
  REQUIRE(again.size() == pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    CHECK(again[k].pa.x == pool[k].pa.x);
    CHECK(again[k].pb.y == pool[k].pb.y);
    CHECK(again[k].source == pool[k].source);
    CHECK(again[k].residual == pool[k].residual);
  }

  // An imported copy of a manual point collapses onto the manual record.
  Correspondence dup = manual[0];
  dup.source = MatchSource::Imported;
  dup.pa.x += 0.3;
  const auto merged = augment_pool(std::span(manual).first(1), std::vector{dup}, F, 1.0, size, size);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].source == MatchSource::Manual);
}

TEST_CASE("tracks") {
  const std::map<std::string, int> cams{{"A", 0}, {"B", 1}, {"C", 2}};
  SUBCASE("chain") {
    const std::vector<Correspondence> c{match("A", "B", {1, 1}, {2, 2}), match("B", "C", {2, 2}, {3, 3})};
    const TrackSet ts = build_tracks(c, cams);
    REQUIRE(ts.tracks.size() == 1);
    CHECK(ts.tracks[0].observations.size() == 3);
    CHECK(ts.tracks[0].consistent);
  }
  SUBCASE("conflicting closure") {
    const std::vector<Correspondence> c{match("A", "B", {1, 1}, {2, 2}), match("B", "C", {2, 2}, {3, 3}),
                                        match("C", "A", {3, 3}, {9, 9})};
    const TrackSet ts = build_tracks(c, cams);
    CHECK(ts.tracks.size() >= 1);
    bool flagged = false;
    for (const Track& t : ts.tracks) {
      flagged = flagged || !t.consistent;
      std::set<int> seen;
      for (const auto& [cam, p] : t.observations) CHECK(seen.insert(cam).second);
    }
    CHECK(flagged);
  }
  SUBCASE("unknown image") {
    const std::vector<Correspondence> c{match("A", "Q", {1, 1}, {2, 2})};
    CHECK(thrown([&] { build_tracks(c, cams); }) == ErrorCategory::UnknownImageId);
  }
}

TEST_CASE("twelve tracks over six images") {
  std::map<std::string, int> cams;
  for (int k = 0; k < 6; ++k) cams["cam" + std::to_string(k)] = k;
  // Point t seen in image k at a distinct pixel.
  auto pixel = [](int t, int k) { return PixelCoord{10.0 + 40 * t + 0.125 * k, 20.0 + 7 * k + 0.5 * t}; };
  std::vector<Correspondence> all;
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      for (int t = 0; t < 12; ++t) {
        all.push_back(match("cam" + std::to_string(i), "cam" + std::to_string(j), pixel(t, i), pixel(t, j)));
      }
    }
  }
  const TrackSet ts = build_tracks(all, cams);
  REQUIRE(ts.tracks.size() == 12);
  for (const Track& t : ts.tracks) {
    CHECK(t.observations.size() == 6);
    CHECK(t.consistent);
  }

  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Correspondence> shuffled = all;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    CHECK(partition(build_tracks(shuffled, cams)) == partition(ts));
  }
}
