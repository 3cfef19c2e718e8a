#include "spheresfm/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "spheresfm/project.hpp"
#include "spheresfm/rng.hpp"

namespace spheresfm {

using nlohmann::json;

namespace {

json match_record(const std::string& a, const std::string& b, const PixelCoord& pa,
                  const PixelCoord& pb) {
  return {{"image_a", a}, {"image_b", b}, {"xa", pa.x}, {"ya", pa.y}, {"xb", pb.x}, {"yb", pb.y}};
}

std::string truth_document(const FixtureTruth& t) {
  json cams = json::array();
  for (std::size_t k = 0; k < t.ids.size(); ++k) {
    json R = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R.push_back(t.poses[k].R(r, c));
    }
    const Vec3& C = t.poses[k].C;
    cams.push_back({{"id", t.ids[k]}, {"R", R}, {"C", {C.x(), C.y(), C.z()}}});
  }
  json pts = json::array();
  for (const Vec3& P : t.points) pts.push_back({P.x(), P.y(), P.z()});
  return json{{"cameras", cams}, {"points", pts}}.dump(2) + "\n";
}

void render_images(const std::filesystem::path& dir, const FixtureTruth& t) {
  for (std::size_t k = 0; k < t.ids.size(); ++k) {
    save_png(render_room(t.room, t.poses[k], t.size).raster(), dir / (t.ids[k] + ".png"));
  }
}

PixelCoord observe(const FixtureTruth& t, int camera, const Vec3& P) {
  return bearing_to_pixel(project_point(P, t.poses[camera]), t.size);
}

}  // namespace

FixtureTruth two_camera_truth(const FixtureOptions& options) {
  FixtureTruth t;
  t.size = options.size;
  t.ids = {"cam0", "cam1"};
  t.poses = {CameraPose{}, CameraPose{yaw_matrix(0.4), Vec3(0.8, 0.5, 0.0)}};
  t.points = random_wall_points(t.room, options.manual_points + options.imported_points,
                                stream_seed(options.seed, 0));
  return t;
}

FixtureTruth six_camera_truth(const FixtureOptions& options) {
  FixtureTruth t;
  t.size = options.size;
  std::mt19937_64 gen(stream_seed(options.seed, 1));
  for (int k = 0; k < 6; ++k) {
    t.ids.push_back("cam" + std::to_string(k));
    const double angle = kTwoPi * k / 6.0 + 0.3 * (uniform_unit(gen) - 0.5);
    const double radius = 1.0 + 0.4 * uniform_unit(gen);
    const double yaw = k == 0 ? 0.0 : kTwoPi * uniform_unit(gen) - kPi;
    t.poses.push_back({yaw_matrix(yaw), Vec3(radius * std::cos(angle), radius * std::sin(angle), 0.0)});
  }
  // Gauge: camera 0 at the origin with zero yaw.
  const Vec3 origin = t.poses[0].C;
  for (CameraPose& p : t.poses) p.C -= origin;
  t.room.min_corner -= origin;
  t.room.max_corner -= origin;
  t.points = random_wall_points(t.room, options.manual_points, stream_seed(options.seed, 2));
  return t;
}

FixtureTruth write_two_camera_fixture(const std::filesystem::path& dir,
                                      const FixtureOptions& options) {
  const FixtureTruth t = two_camera_truth(options);
  std::filesystem::create_directories(dir);
  render_images(dir, t);

  std::ostringstream manual;
  std::ostringstream imported;
  std::mt19937_64 gen(stream_seed(options.seed, 3));
  std::normal_distribution<double> noise(0.0, options.noise_px);
  for (int k = 0; k < int(t.points.size()); ++k) {
    PixelCoord pa = observe(t, 0, t.points[k]);
    PixelCoord pb = observe(t, 1, t.points[k]);
    if (k < options.manual_points) {
      manual << match_record("cam0", "cam1", pa, pb).dump() << "\n";
      continue;
    }
    pa = {std::fmod(pa.x + noise(gen) + t.size.width, double(t.size.width)),
          std::clamp(pa.y + noise(gen), 0.0, double(t.size.height))};
    pb = {std::fmod(pb.x + noise(gen) + t.size.width, double(t.size.width)),
          std::clamp(pb.y + noise(gen), 0.0, double(t.size.height))};
    imported << match_record("cam0", "cam1", pa, pb).dump() << "\n";
  }
  for (int k = 0; k < options.outliers; ++k) {
    const PixelCoord pa{t.size.width * uniform_unit(gen), t.size.height * uniform_unit(gen)};
    const PixelCoord pb{t.size.width * uniform_unit(gen), t.size.height * uniform_unit(gen)};
    imported << match_record("cam0", "cam1", pa, pb).dump() << "\n";
  }
  write_file_atomic(dir / "manual.jsonl", manual.str());
  write_file_atomic(dir / "imported.jsonl", imported.str());
  write_file_atomic(dir / "truth.json", truth_document(t));
  return t;
}

FixtureTruth write_six_camera_fixture(const std::filesystem::path& dir,
                                      const FixtureOptions& options) {
  const FixtureTruth t = six_camera_truth(options);
  std::filesystem::create_directories(dir);
  render_images(dir, t);
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      std::ostringstream manual;
      for (const Vec3& P : t.points) {
        manual << match_record(t.ids[i], t.ids[j], observe(t, i, P), observe(t, j, P)).dump() << "\n";
      }
      write_file_atomic(dir / ("manual_" + t.ids[i] + "_" + t.ids[j] + ".jsonl"), manual.str());
    }
  }
  write_file_atomic(dir / "truth.json", truth_document(t));
  return t;
}

}  // namespace spheresfm
