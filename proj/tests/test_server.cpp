#include <doctest.h>

#include <fstream>
#include <thread>

#include <json.hpp>

#include "cli_helpers.hpp"
#include "oracles.hpp"
#include "spheresfm/fixtures.hpp"
#include "spheresfm/pipeline.hpp"
#include "spheresfm/server.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen.
#include <httplib.h>

using namespace spheresfm;
using nlohmann::json;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

// Server on a free port, running on its own thread for the scope.
class RunningServer {
 public:
  explicit RunningServer(const fs::path& dir) : server_(dir) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.run(); });
    server_.wait_until_ready();
  }
  ~RunningServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

 private:
  ProjectServer server_;
  int port_ = 0;
  std::thread thread_;
};

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

Mat3 mat_from(const json& a) {
  Mat3 m;
  for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = a[k].get<double>();
  return m;
}

std::string error_of(const httplib::Result& r) { return json::parse(r->body)["error"].get<std::string>(); }

}  // namespace

TEST_CASE("annotation workflow over HTTP") {
  TempDir tmp("server2");
  const fs::path fx = tmp / "fixture";
  write_two_camera_fixture(fx);
  {
    Project p = init_project(tmp / "proj");
    add_image(p, fx / "cam0.png");
    add_image(p, fx / "cam1.png");
    save_project(p);
  }
  RunningServer server(tmp / "proj");
  auto http = server.client();

  auto project = http.Get("/api/project");
  REQUIRE(project);
  CHECK(project->status == 200);
  CHECK(json::parse(project->body)["images"].size() == 2);

  auto image = http.Get("/api/images/cam0");
  REQUIRE(image);
  CHECK(image->status == 200);
  CHECK(image->body == testutil::slurp(tmp / "proj" / "images" / "cam0.png"));
  CHECK(image->get_header_value("Content-Type") == "image/png");
  auto missing = http.Get("/api/images/nope");
  CHECK(missing->status == 404);
  CHECK(error_of(missing) == "UnknownImageId");

  auto early = http.Get("/api/pairs/cam0/cam1/epipolar-curve?x=10&y=20");
  CHECK(early->status == 409);
  CHECK(error_of(early) == "MissingPrerequisite");

  const auto manual = read_jsonl(fx / "manual.jsonl");
  std::vector<int> ids;
  for (int k = 0; k < 8; ++k) {
    const json body = {{"xa", manual[k]["xa"]}, {"ya", manual[k]["ya"]}, {"xb", manual[k]["xb"]}, {"yb", manual[k]["yb"]}};
    auto r = http.Post("/api/pairs/cam0/cam1/correspondences", body.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    const json c = json::parse(r->body);
    CHECK(c["source"] == "manual");
    ids.push_back(c["id"].get<int>());
  }
  // Asking in the reverse order returns the points from that side.
  auto reversed = http.Get("/api/pairs/cam1/cam0/correspondences");
  const json rev = json::parse(reversed->body)["correspondences"];
  REQUIRE(rev.size() == 8);
  CHECK(rev[0]["image_a"] == "cam1");
  CHECK(rev[0]["xa"] == manual[0]["xb"]);

  CHECK(http.Post("/api/pairs/cam0/cam1/correspondences", "{not json", "application/json")->status == 400);
  CHECK(http.Post("/api/pairs/cam0/cam1/correspondences", R"({"xa":1,"ya":2,"xb":3})", "application/json")->status == 400);
  CHECK(http.Post("/api/pairs/cam0/zz/correspondences", R"({"xa":1,"ya":2,"xb":3,"yb":4})", "application/json")->status == 404);
  CHECK(http.Post("/api/pairs/cam0/cam1/correspondences", R"({"xa":9999,"ya":2,"xb":3,"yb":4})", "application/json")->status == 400);
  CHECK(http.Post("/api/pairs/cam0/cam1/solve", R"({"method":"magic"})", "application/json")->status == 400);

  auto solve = http.Post("/api/pairs/cam0/cam1/solve", R"({"method":"linear"})", "application/json");
  REQUIRE(solve);
  REQUIRE(solve->status == 200);
  const json sol = json::parse(solve->body);
  const Mat3 F = mat_from(sol["F"]);
  Eigen::JacobiSVD<Mat3> svd(F);
  CHECK(svd.singularValues()[2] < 1e-9 * svd.singularValues()[0]);
  CHECK(std::abs(F.norm() - 1.0) < 1e-12);
  for (const char* e : {"e1", "e2"}) {
    const Vec3 v(sol[e][0].get<double>(), sol[e][1].get<double>(), sol[e][2].get<double>());
    CHECK(std::abs(v.norm() - 1.0) < 1e-12);
  }
  const Mat3 R = mat_from(sol["R"]);
  CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-9);
  REQUIRE(sol["inliers"].size() == 8);
  for (const json& m : sol["inliers"]) CHECK(m["inlier"].get<bool>());

  auto curve = http.Get("/api/pairs/cam0/cam1/epipolar-curve?x=100.5&y=120&samples=90");
  REQUIRE(curve->status == 200);
  const json cj = json::parse(curve->body);
  CHECK(cj["image"] == "cam1");
  std::size_t total = 0;
  for (const json& s : cj["segments"]) total += s.size();
  CHECK(total >= 90);
  CHECK(http.Get("/api/pairs/cam0/cam1/epipolar-curve?x=1")->status == 400);
  CHECK(http.Get("/api/pairs/cam0/cam1/epipolar-curve?x=a&y=2")->status == 400);
  CHECK(http.Get("/api/dense/cam0/cam1")->status == 409);

  // GET requests never change the saved project.
  const std::string before = testutil::slurp(tmp / "proj" / kProjectFile);
  const std::string summary = http.Get("/api/project")->body;
  for (const char* path : {"/api/project", "/api/pairs/cam0/cam1/correspondences", "/api/pointcloud",
                           "/api/pairs/cam0/cam1/epipolar-curve?x=5&y=5", "/api/images/cam1"}) {
    CHECK(http.Get(path)->status == 200);
  }
  CHECK(testutil::slurp(tmp / "proj" / kProjectFile) == before);
  CHECK(http.Get("/api/project")->body == summary);

  // Writes are committed to disk.
  auto del = http.Delete("/api/pairs/cam0/cam1/correspondences/" + std::to_string(ids[0]));
  CHECK(del->status == 200);
  CHECK(http.Delete("/api/correspondences/" + std::to_string(ids[0]))->status == 404);
  CHECK(load_project(tmp / "proj").correspondences.size() == 7);
  auto short_solve = http.Post("/api/pairs/cam0/cam1/solve", "", "application/json");
  CHECK(short_solve->status == 422);
  CHECK(error_of(short_solve) == "InsufficientPairs");
}

TEST_CASE("six-camera point cloud over HTTP") {
  TempDir tmp("server6");
  const fs::path fx = tmp / "fixture";
  FixtureOptions opts;
  opts.size = {256, 128};
  const FixtureTruth truth = write_six_camera_fixture(fx, opts);
  const Config config;
  {
    Project p = init_project(tmp / "proj");
    for (const std::string& id : truth.ids) add_image(p, fx / (id + ".png"));
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) {
        import_matches_file(p, fx / ("manual_" + truth.ids[i] + "_" + truth.ids[j] + ".jsonl"),
                            PairKey{truth.ids[i], truth.ids[j]}, true);
      }
    }
    save_project(p);
  }
  RunningServer server(tmp / "proj");
  auto http = server.client();
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) {
      REQUIRE(http.Post("/api/pairs/" + truth.ids[i] + "/" + truth.ids[j] + "/solve", "", "application/json")->status == 200);
    }
  }
  auto reg = http.Post("/api/register", R"({"baseline":["cam0","cam1"]})", "application/json");
  REQUIRE(reg->status == 200);
  CHECK(json::parse(reg->body)["cameras"].size() == 6);
  auto tri = http.Post("/api/triangulate", "", "application/json");
  REQUIRE(tri->status == 200);
  CHECK(json::parse(tri->body)["points"] == 12);

  auto cloud = http.Get("/api/pointcloud");
  REQUIRE(cloud->status == 200);
  const json pc = json::parse(cloud->body);
  CHECK(pc["cameras"].size() == 6);
  CHECK(pc["points"].size() >= 12);
  for (const json& p : pc["points"]) CHECK(p["observations"].size() == 6);

  auto bad = http.Post("/api/register", R"({"baseline":["cam0","zzz"]})", "application/json");
  CHECK(bad->status == 404);
}
