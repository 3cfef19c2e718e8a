#include "spheresfm/server.hpp"

#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "spheresfm/error.hpp"
#include "spheresfm/formats.hpp"
#include "spheresfm/pipeline.hpp"

namespace spheresfm {

using nlohmann::json;

namespace {

int status_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::InvalidArgument:
    case ErrorCategory::ParseError:
      return 400;
    case ErrorCategory::UnknownImageId:
      return 404;
    case ErrorCategory::MissingPrerequisite:
      return 409;
    default:
      return 422;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view category,
                const std::string& message) {
  send_json(res, {{"error", category}, {"message", message}}, status);
}

json mat_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json correspondence_view(const Correspondence& c, bool swapped) {
  json j = {{"id", c.id},
            {"image_a", swapped ? c.image_b : c.image_a},
            {"image_b", swapped ? c.image_a : c.image_b},
            {"xa", swapped ? c.pb.x : c.pa.x},
            {"ya", swapped ? c.pb.y : c.pa.y},
            {"xb", swapped ? c.pa.x : c.pb.x},
            {"yb", swapped ? c.pa.y : c.pb.y},
            {"source", std::string(source_name(c.source))}};
  if (c.residual) j["residual"] = *c.residual;
  if (c.score) j["score"] = *c.score;
  return j;
}

json solution_view(const Project& p, const PairKey& key, const PairSolution& s) {
  json mask = json::array();
  for (const Correspondence& c : p.pair_correspondences(key)) {
    mask.push_back({{"id", c.id},
                    {"inlier", std::find(s.inlier_ids.begin(), s.inlier_ids.end(), c.id) !=
                                   s.inlier_ids.end()}});
  }
  return {{"a", key.a},
          {"b", key.b},
          {"method", s.method},
          {"F", mat_json(s.F.matrix())},
          {"e1", vec_json(s.e1)},
          {"e2", vec_json(s.e2)},
          {"R", mat_json(s.R)},
          {"inliers", mask}};
}

double number_field(const json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_number()) {
    throw Error(ErrorCategory::InvalidArgument, std::string("missing numeric field '") + name + "'");
  }
  return j[name].get<double>();
}

std::string content_type(const std::string& file) {
  const auto ext = std::filesystem::path(file).extension().string();
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "image/png";
}

}  // namespace

struct ProjectServer::Impl {
  httplib::Server http;
  Project project;
  Config config;
  mutable std::shared_mutex mutex;

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  Handler guarded(Handler fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.category()), category_name(e.category()), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "ParseError", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  template <typename Fn>
  auto read(Fn&& fn) const {
    std::shared_lock lock(mutex);
    return fn(static_cast<const Project&>(project));
  }

  // Runs fn on a copy and commits it only if fn and the save succeed.
  template <typename Fn>
  auto write(Fn&& fn) {
    std::unique_lock lock(mutex);
    Project draft = project;
    auto result = fn(draft);
    save_project(draft);
    project = std::move(draft);
    return result;
  }

  void routes();
};

void ProjectServer::Impl::routes() {
  http.Get("/api/project", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, read([](const Project& p) {
      json images = json::array();
      for (const ImageEntry& e : p.images) {
        images.push_back({{"id", e.id}, {"width", e.size.width}, {"height", e.size.height}});
      }
      std::map<PairKey, json> pairs;
      for (const Correspondence& c : p.correspondences) {
        json& entry = pairs[{c.image_a, c.image_b}];
        if (entry.is_null()) entry = {{"a", c.image_a}, {"b", c.image_b}, {"correspondences", 0}, {"manual", 0}};
        entry["correspondences"] = entry["correspondences"].get<int>() + 1;
        if (c.source == MatchSource::Manual) entry["manual"] = entry["manual"].get<int>() + 1;
      }
      for (const auto& [key, s] : p.solutions) {
        json& entry = pairs[key];
        if (entry.is_null()) entry = {{"a", key.a}, {"b", key.b}, {"correspondences", 0}, {"manual", 0}};
      }
      json pair_list = json::array();
      for (auto& [key, entry] : pairs) {
        entry["solved"] = p.solutions.contains(key);
        entry["dense"] = p.dense.contains(key) && !p.dense.at(key).cloud.empty();
        pair_list.push_back(entry);
      }
      return json{{"images", images},
                  {"pairs", pair_list},
                  {"registered", p.rig.has_value()},
                  {"points", p.points.size()}};
    }));
  }));

  http.Get(R"(/api/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto [path, type] = read([&](const Project& p) {
      const ImageEntry& e = p.image(id);
      return std::make_pair(p.path_of(e.file), content_type(e.file));
    });
    res.set_content(read_file(path), type);
  }));

  http.Get(R"(/api/pairs/([^/]+)/([^/]+)/correspondences)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const std::string a = req.matches[1];
             const std::string b = req.matches[2];
             send_json(res, read([&](const Project& p) {
               p.image(a);
               p.image(b);
               bool swapped = false;
               const PairKey key = normalize_pair(a, b, &swapped);
               json list = json::array();
               for (const Correspondence& c : p.pair_correspondences(key)) {
                 list.push_back(correspondence_view(c, swapped));
               }
               return json{{"correspondences", list}};
             }));
           }));

  http.Post(R"(/api/pairs/([^/]+)/([^/]+)/correspondences)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string a = req.matches[1];
              const std::string b = req.matches[2];
              const json body = json::parse(req.body);
              const PixelCoord pa{number_field(body, "xa"), number_field(body, "ya")};
              const PixelCoord pb{number_field(body, "xb"), number_field(body, "yb")};
              send_json(res, write([&](Project& p) {
                add_correspondence(p, a, b, pa, pb, MatchSource::Manual);
                bool swapped = false;
                normalize_pair(a, b, &swapped);
                return correspondence_view(p.correspondences.back(), swapped);
              }), 201);
            }));

  auto delete_handler = guarded([this](const httplib::Request& req, httplib::Response& res) {
    const int id = std::stoi(req.matches[req.matches.size() - 1]);
    const bool removed = write([&](Project& p) { return delete_correspondence(p, id); });
    if (!removed) {
      send_error(res, 404, "UnknownCorrespondence", "no correspondence " + std::to_string(id));
      return;
    }
    send_json(res, {{"deleted", id}});
  });
  http.Delete(R"(/api/pairs/([^/]+)/([^/]+)/correspondences/(\d+))", delete_handler);
  http.Delete(R"(/api/correspondences/(\d+))", delete_handler);

  http.Post(R"(/api/pairs/([^/]+)/([^/]+)/solve)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string a = req.matches[1];
              const std::string b = req.matches[2];
              EstimateMethod method = EstimateMethod::Linear;
              if (!req.body.empty()) {
                const json body = json::parse(req.body);
                const std::string m = body.value("method", std::string("linear"));
                if (m == "ransac") {
                  method = EstimateMethod::Ransac;
                } else if (m != "linear") {
                  throw Error(ErrorCategory::InvalidArgument, "unknown method '" + m + "'");
                }
              }
              send_json(res, write([&](Project& p) {
                const PairSolution& s = estimate_pair(p, a, b, method, config);
                return solution_view(p, normalize_pair(a, b), s);
              }));
            }));

  http.Get(R"(/api/pairs/([^/]+)/([^/]+)/epipolar-curve)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const std::string a = req.matches[1];
             const std::string b = req.matches[2];
             if (!req.has_param("x") || !req.has_param("y")) {
               throw Error(ErrorCategory::InvalidArgument, "x and y query parameters are required");
             }
             PixelCoord p;
             try {
               p = {std::stod(req.get_param_value("x")), std::stod(req.get_param_value("y"))};
             } catch (const std::exception&) {
               throw Error(ErrorCategory::InvalidArgument, "x and y must be numbers");
             }
             int samples = config.curve_samples;
             if (req.has_param("samples")) samples = std::stoi(req.get_param_value("samples"));
             if (samples < 3) throw Error(ErrorCategory::InvalidArgument, "samples must be >= 3");
             send_json(res, read([&](const Project& proj) {
               json segments = json::array();
               for (const auto& seg : epipolar_curve_for(proj, a, b, p, samples)) {
                 json s = json::array();
                 for (const PixelCoord& q : seg) s.push_back({q.x, q.y});
                 segments.push_back(s);
               }
               return json{{"image", b}, {"segments", segments}};
             }));
           }));

  http.Post("/api/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::pair<std::string, std::string>> baseline;
    if (!req.body.empty()) {
      const json body = json::parse(req.body);
      if (body.contains("baseline")) {
        baseline = {body["baseline"].at(0).get<std::string>(), body["baseline"].at(1).get<std::string>()};
      }
    }
    send_json(res, write([&](Project& p) {
      register_rig(p, config, baseline);
      return json::parse(poses_document(p));
    }));
  }));

  http.Post("/api/triangulate", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, write([&](Project& p) {
      const std::size_t accepted = triangulate_points(p);
      return json{{"points", accepted}, {"tracks", p.points.size()}};
    }));
  }));

  http.Get("/api/pointcloud", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, read([](const Project& p) {
      json cameras = json::array();
      if (p.rig || p.solutions.size() == 1) {
        const auto [ids, poses] = reconstruction_poses(p);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          cameras.push_back({{"id", ids[k]}, {"R", mat_json(poses[k].R)}, {"C", vec_json(poses[k].C)}});
        }
      }
      json points = json::array();
      for (const SparsePoint& s : p.points) {
        if (!s.accepted) continue;
        json obs = json::object();
        for (const auto& [id, px] : s.observations) obs[id] = {px.x, px.y};
        points.push_back({{"track", s.track},
                          {"P", vec_json(s.P)},
                          {"color", {s.color.r, s.color.g, s.color.b}},
                          {"observations", obs}});
      }
      return json{{"cameras", cameras}, {"points", points}};
    }));
  }));

  http.Get(R"(/api/dense/([^/]+)/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string a = req.matches[1];
    const std::string b = req.matches[2];
    const auto path = read([&](const Project& p) {
      p.image(a);
      p.image(b);
      auto it = p.dense.find(normalize_pair(a, b));
      if (it == p.dense.end() || it->second.cloud.empty()) {
        throw Error(ErrorCategory::MissingPrerequisite, "no dense cloud for this pair; run dense first");
      }
      return p.path_of(it->second.cloud);
    });
    res.set_content(read_file(path), "application/x-ply");
  }));
}

ProjectServer::ProjectServer(const std::filesystem::path& dir) : impl_(std::make_unique<Impl>()) {
  impl_->project = load_project(dir);
  impl_->config = load_config(dir);
  impl_->routes();
}

ProjectServer::~ProjectServer() = default;

int ProjectServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound <= 0) throw Error(ErrorCategory::IoError, "cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) {
    throw Error(ErrorCategory::IoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ProjectServer::run() { impl_->http.listen_after_bind(); }
void ProjectServer::stop() { impl_->http.stop(); }
void ProjectServer::wait_until_ready() const { impl_->http.wait_until_ready(); }
const Config& ProjectServer::config() const { return impl_->config; }

}  // namespace spheresfm
