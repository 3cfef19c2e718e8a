#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "cli_helpers.hpp"
#include "oracles.hpp"
#include "spheresfm/fixtures.hpp"
#include "spheresfm/formats.hpp"
#include "spheresfm/pipeline.hpp"
#include "spheresfm/project.hpp"

using namespace spheresfm;
using testutil::cli;
using testutil::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Truth point whose camera-0 projection is nearest to the given pixel.
std::size_t nearest_truth(const FixtureTruth& t, const PixelCoord& p) {
  std::size_t best = 0;
  double best_d = 1e300;
  for (std::size_t k = 0; k < t.points.size(); ++k) {
    const Vec3 d = t.poses[0].R * (t.points[k] - t.poses[0].C);
    double theta = std::atan2(d.y(), d.x());
    if (theta < 0) theta += 2 * oracle::kPi;
    const PixelCoord q{theta * t.size.width / (2 * oracle::kPi),
                       std::acos(d.z() / d.norm()) * t.size.height / oracle::kPi};
    const double dist = wrapped_pixel_distance(p, q, t.size);
    if (dist < best_d) {
      best_d = dist;
      best = k;
    }
  }
  return best;
}

std::vector<std::string> with_project(const fs::path& dir, std::vector<std::string> args) {
  args.insert(args.begin(), {"-C", dir.string()});
  return args;
}

}  // namespace

TEST_CASE("two-camera fixture through the CLI") {
  TempDir tmp("pipeline2");
  const fs::path fx = tmp / "fixture";
  const fs::path proj = tmp / "proj";
  const FixtureTruth truth = write_two_camera_fixture(fx);

  REQUIRE(cli({"init", proj.string()}).code == 0);
  CHECK(cli({"init", proj.string()}).code == 1);  // already a project
  for (const char* id : {"cam0", "cam1"}) {
    const auto r = cli(with_project(proj, {"add-image", (fx / (std::string(id) + ".png")).string()}));
    REQUIRE(r.code == 0);
  }
  REQUIRE(cli(with_project(proj, {"import-matches", "cam0,cam1", (fx / "manual.jsonl").string(), "--as-manual"})).code == 0);
  REQUIRE(cli(with_project(proj, {"import-matches", "cam0:cam1", (fx / "imported.jsonl").string()})).code == 0);

  const auto est = cli(with_project(proj, {"estimate-pair", "cam0", "cam1"}));
  REQUIRE(est.code == 0);
  CHECK(est.out.find("12 inliers") != std::string::npos);

  REQUIRE(cli(with_project(proj, {"triangulate"})).code == 0);
  const fs::path ply = tmp / "sparse.ply";
  REQUIRE(cli(with_project(proj, {"export-ply", "--sparse", "-o", ply.string()})).code == 0);

  const Project project = load_project(proj);
  const auto pts = read_ply(ply);
  REQUIRE(pts.size() == 12);
  std::vector<Vec3> got;
  std::vector<Vec3> want;
  std::size_t k = 0;
  for (const SparsePoint& sp : project.points) {
    if (!sp.accepted) continue;
    got.push_back(pts[k++].P);
    want.push_back(truth.points[nearest_truth(truth, sp.observations.at("cam0"))]);
  }
  CHECK(oracle::aligned_rmse(got, want) < 1e-6);

  // Augmentation adds the clean imported matches but none of the outliers.
  const auto aug = cli(with_project(proj, {"augment", "cam0", "cam1", "--epsilon", "0.01"}));
  REQUIRE(aug.code == 0);
  const Project augmented = load_project(proj);
  int n_aug = 0;
  for (const Correspondence& c : augmented.correspondences) n_aug += c.source == MatchSource::Augmented;
  CHECK(n_aug >= 38);
  CHECK(n_aug <= 40);

  SUBCASE("dense products") {
    REQUIRE(cli(with_project(proj, {"rectify", "cam0", "cam1"})).code == 0);
    const auto d = cli(with_project(proj, {"disparity", "cam0", "cam1"}));
    REQUIRE(d.code == 0);
    REQUIRE(cli(with_project(proj, {"dense", "cam0", "cam1"})).code == 0);
    const DisparityMap disp = read_pfm(proj / "dense" / "cam0__cam1_disparity.pfm");
    const auto cloud = read_ply(proj / "dense" / "cam0__cam1.ply");
    CHECK(cloud.size() == disp.valid_count());
    CHECK(fs::exists(proj / "dense" / "cam0__cam1_rect1.png"));
    CHECK(fs::exists(proj / "dense" / "cam0__cam1_disparity.png"));
    const fs::path all = tmp / "dense_all.ply";
    REQUIRE(cli(with_project(proj, {"export-ply", "--dense", "-o", all.string()})).code == 0);
    CHECK(read_ply(all).size() == cloud.size());
  }
  SUBCASE("RANSAC over all matches") {
    const auto r = cli(with_project(proj, {"estimate-pair", "cam0", "cam1", "--ransac"}));
    REQUIRE(r.code == 0);
    const Project p = load_project(proj);
    const PairSolution& s = p.solutions.at({"cam0", "cam1"});
    CHECK(s.method == "ransac");
    CHECK(s.inlier_ids.size() >= 50);
    CHECK(cli(with_project(proj, {"estimate-pair", "cam0", "cam1", "--ransac", "--manual-only"})).code == 2);
  }
}

TEST_CASE("estimate-pair with seven manual matches") {
  TempDir tmp("pipeline7");
  const fs::path fx = tmp / "fixture";
  const fs::path proj = tmp / "proj";
  write_two_camera_fixture(fx);
  std::ifstream in(fx / "manual.jsonl");
  std::ofstream seven(tmp / "seven.jsonl");
  std::string line;
  for (int k = 0; k < 7 && std::getline(in, line); ++k) seven << line << "\n";
  seven.close();

  REQUIRE(cli({"init", proj.string()}).code == 0);
  REQUIRE(cli(with_project(proj, {"add-image", (fx / "cam0.png").string()})).code == 0);
  REQUIRE(cli(with_project(proj, {"add-image", (fx / "cam1.png").string()})).code == 0);
  REQUIRE(cli(with_project(proj, {"import-matches", "cam0,cam1", (tmp / "seven.jsonl").string(), "--as-manual"})).code == 0);

  const std::string before = testutil::slurp(proj / kProjectFile);
  const auto r = cli(with_project(proj, {"estimate-pair", "cam0", "cam1"}));
  CHECK(r.code == 1);
  CHECK(r.err.find("error: InsufficientPairs") == 0);
  // A failed step leaves the saved project untouched.
  CHECK(testutil::slurp(proj / kProjectFile) == before);

  const auto unknown = cli(with_project(proj, {"estimate-pair", "cam0", "nope"}));
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("UnknownImageId") != std::string::npos);
  CHECK(cli(with_project(proj, {"rectify", "cam0", "cam1"})).err.find("MissingPrerequisite") != std::string::npos);
  CHECK(cli(with_project(proj, {"export-ply"})).err.find("EmptyCloud") != std::string::npos);
  CHECK(cli({"no-such-command"}).code == 2);
  CHECK(cli({}).code == 2);
}

TEST_CASE("six-camera registration") {
  TempDir tmp("pipeline6");
  const fs::path fx = tmp / "fixture";
  const fs::path proj = tmp / "proj";
  FixtureOptions opts;
  opts.size = {256, 128};
  const FixtureTruth truth = write_six_camera_fixture(fx, opts);

  REQUIRE(cli({"init", proj.string()}).code == 0);
  for (const std::string& id : truth.ids) {
    REQUIRE(cli(with_project(proj, {"add-image", (fx / (id + ".png")).string()})).code == 0);
  }
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) {
      const std::string file = "manual_" + truth.ids[i] + "_" + truth.ids[j] + ".jsonl";
      REQUIRE(cli(with_project(proj, {"import-matches", truth.ids[i] + "," + truth.ids[j], (fx / file).string(),
                                      "--as-manual"})).code == 0);
      REQUIRE(cli(with_project(proj, {"estimate-pair", truth.ids[i], truth.ids[j]})).code == 0);
    }
  }
  const auto reg = cli(with_project(proj, {"register"}));
  REQUIRE(reg.code == 0);

  const json poses = json::parse(testutil::slurp(proj / "poses.json"));
  REQUIRE(poses["cameras"].size() == 6);
  const json& cams = poses["cameras"];
  CHECK(cams[0]["theta"].get<double>() == 0.0);
  for (int k = 0; k < 3; ++k) CHECK(cams[0]["C"][k].get<double>() == 0.0);
  std::vector<Vec3> centers;
  for (const json& c : cams) {
    centers.emplace_back(c["C"][0].get<double>(), c["C"][1].get<double>(), c["C"][2].get<double>());
    CHECK(c["C"][2].get<double>() == 0.0);
  }
  CHECK(std::abs(centers[1].norm() - 1.0) < 1e-12);
  std::vector<Vec3> truth_centers;
  for (const CameraPose& p : truth.poses) truth_centers.push_back(p.C);
  CHECK(oracle::aligned_rmse(centers, truth_centers) < 1e-6);

  REQUIRE(cli(with_project(proj, {"triangulate"})).code == 0);
  const Project project = load_project(proj);
  int accepted = 0;
  for (const SparsePoint& p : project.points) {
    accepted += p.accepted;
    CHECK(p.observations.size() == 6);
  }
  CHECK(accepted == 12);

  // Another baseline gives the same geometry up to similarity.
  const fs::path other = tmp / "poses_b.json";
  REQUIRE(cli(with_project(proj, {"register", "--baseline", "cam0,cam2", "--poses", other.string()})).code == 0);
  const json alt = json::parse(testutil::slurp(other));
  std::vector<Vec3> alt_centers;
  for (const json& c : alt["cameras"]) {
    alt_centers.emplace_back(c["C"][0].get<double>(), c["C"][1].get<double>(), c["C"][2].get<double>());
  }
  CHECK(std::abs((alt_centers[2] - alt_centers[0]).norm() - 1.0) < 1e-12);
  CHECK(oracle::aligned_rmse(alt_centers, centers) < 1e-6);
}

TEST_CASE("config and persistence") {
  TempDir tmp("config");
  const fs::path proj = tmp / "proj";
  init_project(proj);
  CHECK(oracle::thrown([&] { init_project(proj); }) == ErrorCategory::ProjectError);
  CHECK(oracle::thrown([&] { load_project(tmp / "missing"); }) == ErrorCategory::ProjectError);

  Config c;
  c.seed = 5;
  c.port = 9001;
  c.filter_epsilon = 0.02;
  save_config(c, proj);
  ::unsetenv("SPHERESFM_SEED");
  ::unsetenv("SPHERESFM_PORT");
  Config loaded = load_config(proj);
  CHECK(loaded.seed == 5);
  CHECK(loaded.ransac.seed == 5);
  CHECK(loaded.port == 9001);
  CHECK(loaded.filter_epsilon == 0.02);

  ::setenv("SPHERESFM_SEED", "42", 1);
  ::setenv("SPHERESFM_PORT", "7000", 1);
  loaded = load_config(proj);
  CHECK(loaded.seed == 42);
  CHECK(loaded.ransac.seed == 42);
  CHECK(loaded.port == 7000);
  ::setenv("SPHERESFM_PORT", "not-a-port", 1);
  CHECK(oracle::thrown([&] { load_config(proj); }).has_value());
  ::unsetenv("SPHERESFM_SEED");
  ::unsetenv("SPHERESFM_PORT");

  const Config defaults = load_config(tmp / "elsewhere");
  CHECK(defaults.filter_epsilon == 0.01);
  CHECK(defaults.ransac.threshold == 0.01);
  CHECK(defaults.dense.window == 11);

  // Atomic writes replace the file and leave no temporary behind.
  const fs::path f = tmp / "state.json";
  write_file_atomic(f, "one");
  write_file_atomic(f, "two");
  CHECK(read_file(f) == "two");
  for (const auto& entry : fs::directory_iterator(tmp.path())) {
    CHECK(entry.path().extension() != ".tmp");
  }

  // Save then load reproduces the same document.
  Project p = load_project(proj);
  save_project(p);
  const std::string first = testutil::slurp(proj / kProjectFile);
  save_project(load_project(proj));
  CHECK(testutil::slurp(proj / kProjectFile) == first);
}

TEST_CASE("pair normalization and correspondence editing") {
  bool swapped = false;
  const PairKey k = normalize_pair("b", "a", &swapped);
  CHECK(k.a == "a");
  CHECK(k.b == "b");
  CHECK(swapped);
  CHECK(oracle::thrown([] { normalize_pair("a", "a"); }) == ErrorCategory::InvalidArgument);

  TempDir tmp("edit");
  const fs::path fx = tmp / "fixture";
  write_two_camera_fixture(fx, FixtureOptions{{128, 64}, 1, 12, 4, 2, 0.5});
  Project p = init_project(tmp / "proj");
  add_image(p, fx / "cam0.png");
  add_image(p, fx / "cam1.png", "other");
  CHECK(p.find_image("other") != nullptr);
  CHECK(oracle::thrown([&] { add_image(p, fx / "cam1.png", "other"); }).has_value());
  CHECK(oracle::thrown([&] { add_image(p, fx / "cam1.png", "bad id"); }) == ErrorCategory::InvalidArgument);

  // Given in reversed order, the points are swapped into canonical order.
  const int id = add_correspondence(p, "other", "cam0", {1, 2}, {3, 4});
  REQUIRE(p.correspondences.size() == 1);
  CHECK(p.correspondences[0].image_a == "cam0");
  CHECK(p.correspondences[0].pa.x == 3);
  CHECK(p.correspondences[0].pb.x == 1);
  CHECK(oracle::thrown([&] { add_correspondence(p, "cam0", "other", {500, 2}, {3, 4}); }) ==
        ErrorCategory::InvalidArgument);
  CHECK(oracle::thrown([&] { add_correspondence(p, "cam0", "zz", {5, 2}, {3, 4}); }) ==
        ErrorCategory::UnknownImageId);
  CHECK(delete_correspondence(p, id));
  CHECK_FALSE(delete_correspondence(p, id));
  CHECK(oracle::thrown([&] { import_matches_file(p, fx / "manual.jsonl", PairKey{"cam0", "other"}, true); }) ==
        ErrorCategory::UnknownImageId);
}
