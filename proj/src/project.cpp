#include "spheresfm/project.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spheresfm/error.hpp"

namespace spheresfm {

using nlohmann::json;

namespace {

json mat_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Mat3 mat_from(const json& j) {
  if (!j.is_array() || j.size() != 9) throw Error(ErrorCategory::ProjectError, "expected 9 numbers");
  Mat3 m;
  for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = j.at(k).get<double>();
  return m;
}

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCategory::ProjectError, "expected 3 numbers");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

bool is_rotation(const Mat3& R) {
  return (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9 &&
         std::abs(R.determinant() - 1.0) < 1e-9;
}

json correspondence_json(const Correspondence& c) {
  json j = {{"id", c.id},       {"image_a", c.image_a}, {"image_b", c.image_b},
            {"xa", c.pa.x},     {"ya", c.pa.y},         {"xb", c.pb.x},
            {"yb", c.pb.y},     {"source", std::string(source_name(c.source))}};
  if (c.residual) j["residual"] = *c.residual;
  if (c.score) j["score"] = *c.score;
  return j;
}

Correspondence correspondence_from(const json& j) {
  Correspondence c;
  c.id = j.at("id").get<int>();
  c.image_a = j.at("image_a").get<std::string>();
  c.image_b = j.at("image_b").get<std::string>();
  c.pa = {j.at("xa").get<double>(), j.at("ya").get<double>()};
  c.pb = {j.at("xb").get<double>(), j.at("yb").get<double>()};
  c.source = parse_source(j.at("source").get<std::string>());
  if (j.contains("residual")) c.residual = j["residual"].get<double>();
  if (j.contains("score")) c.score = j["score"].get<double>();
  return c;
}

void apply_config(Config& c, const json& j) {
  if (j.contains("ransac")) {
    const json& r = j["ransac"];
    c.ransac.threshold = r.value("threshold", c.ransac.threshold);
    c.ransac.max_iterations = r.value("max_iterations", c.ransac.max_iterations);
    c.ransac.min_inliers = r.value("min_inliers", c.ransac.min_inliers);
  }
  c.filter_epsilon = j.value("filter_epsilon", c.filter_epsilon);
  if (j.contains("dense")) {
    const json& d = j["dense"];
    c.dense.window = d.value("window", c.dense.window);
    c.dense.d_min = d.value("d_min", c.dense.d_min);
    c.dense.d_max = d.value("d_max", c.dense.d_max);
    c.dense.ncc_floor = d.value("ncc_floor", c.dense.ncc_floor);
    c.dense.lr_tolerance = d.value("lr_tolerance", c.dense.lr_tolerance);
    c.dense.epipole_margin = d.value("epipole_margin", c.dense.epipole_margin);
    c.dense.min_texture = d.value("min_texture", c.dense.min_texture);
    c.dense.subpixel = d.value("subpixel", c.dense.subpixel);
  }
  c.rect_height = j.value("rect_height", c.rect_height);
  c.port = j.value("port", c.port);
  c.seed = j.value("seed", c.seed);
  c.curve_samples = j.value("curve_samples", c.curve_samples);
}

json config_json(const Config& c) {
  return {{"ransac",
           {{"threshold", c.ransac.threshold},
            {"max_iterations", c.ransac.max_iterations},
            {"min_inliers", c.ransac.min_inliers}}},
          {"filter_epsilon", c.filter_epsilon},
          {"dense",
           {{"window", c.dense.window},
            {"d_min", c.dense.d_min},
            {"d_max", c.dense.d_max},
            {"ncc_floor", c.dense.ncc_floor},
            {"lr_tolerance", c.dense.lr_tolerance},
            {"epipole_margin", c.dense.epipole_margin},
            {"min_texture", c.dense.min_texture},
            {"subpixel", c.dense.subpixel}}},
          {"rect_height", c.rect_height},
          {"port", c.port},
          {"seed", c.seed},
          {"curve_samples", c.curve_samples}};
}

template <typename T>
T env_number(const char* name, T fallback) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return fallback;
  std::istringstream in(v);
  T out{};
  if (!(in >> out) || !in.eof()) {
    throw Error(ErrorCategory::ParseError, std::string("bad value for ") + name);
  }
  return out;
}

json pair_json(const PairKey& k) { return {{"a", k.a}, {"b", k.b}}; }

json project_json(const Project& p) {
  json j;
  j["version"] = 1;
  j["images"] = json::array();
  for (const ImageEntry& im : p.images) {
    j["images"].push_back(
        {{"id", im.id}, {"file", im.file}, {"width", im.size.width}, {"height", im.size.height}});
  }
  j["correspondences"] = json::array();
  for (const Correspondence& c : p.correspondences) j["correspondences"].push_back(correspondence_json(c));
  j["next_correspondence_id"] = p.next_correspondence_id;
  j["solutions"] = json::array();
  for (const auto& [key, s] : p.solutions) {
    json e = pair_json(key);
    e["method"] = s.method;
    e["F"] = mat_json(s.F.matrix());
    e["e1"] = vec_json(s.e1);
    e["e2"] = vec_json(s.e2);
    e["R"] = mat_json(s.R);
    e["inliers"] = s.inlier_ids;
    j["solutions"].push_back(e);
  }
  if (p.rig) {
    const RigState& r = *p.rig;
    json cams = json::array();
    for (std::size_t k = 0; k < r.image_ids.size(); ++k) {
      cams.push_back({{"id", r.image_ids[k]}, {"theta", r.thetas[k]}, {"C", vec_json(r.centers[k])}});
    }
    j["rig"] = {{"cameras", cams},
                {"baseline", {r.baseline.first, r.baseline.second}},
                {"rotation_objective", r.rotation_objective},
                {"position_objective", r.position_objective}};
  } else {
    j["rig"] = nullptr;
  }
  j["points"] = json::array();
  for (const SparsePoint& s : p.points) {
    json obs = json::object();
    for (const auto& [id, px] : s.observations) obs[id] = {px.x, px.y};
    j["points"].push_back({{"track", s.track},
                           {"P", vec_json(s.P)},
                           {"color", {s.color.r, s.color.g, s.color.b}},
                           {"rms_residual", s.rms_residual},
                           {"accepted", s.accepted},
                           {"observations", obs}});
  }
  j["dense"] = json::array();
  for (const auto& [key, d] : p.dense) {
    json e = pair_json(key);
    e["rect1"] = d.rect1;
    e["rect2"] = d.rect2;
    e["disparity"] = d.disparity;
    e["preview"] = d.preview;
    e["cloud"] = d.cloud;
    e["R_rect1"] = mat_json(d.R_rect1);
    e["R_rect2"] = mat_json(d.R_rect2);
    e["rect_width"] = d.rect_size.width;
    e["rect_height"] = d.rect_size.height;
    e["baseline"] = d.baseline;
    e["points"] = d.points;
    j["dense"].push_back(e);
  }
  return j;
}

PairKey key_from(const json& e) { return {e.at("a").get<std::string>(), e.at("b").get<std::string>()}; }

Project project_from(const json& j, const std::filesystem::path& dir) {
  Project p;
  p.dir = dir;
  for (const json& im : j.at("images")) {
    ImageEntry e{im.at("id").get<std::string>(), im.at("file").get<std::string>(),
                 {im.at("width").get<int>(), im.at("height").get<int>()}};
    e.size.validate();
    p.images.push_back(e);
  }
  for (const json& c : j.at("correspondences")) p.correspondences.push_back(correspondence_from(c));
  p.next_correspondence_id = j.at("next_correspondence_id").get<int>();
  for (const json& e : j.at("solutions")) {
    PairSolution s;
    s.method = e.at("method").get<std::string>();
    s.F = FundamentalMatrix::from_raw(mat_from(e.at("F")));
    s.e1 = Bearing::normalize(vec_from(e.at("e1")));
    s.e2 = Bearing::normalize(vec_from(e.at("e2")));
    s.R = mat_from(e.at("R"));
    if (!is_rotation(s.R)) throw Error(ErrorCategory::ProjectError, "stored R is not a rotation");
    s.inlier_ids = e.at("inliers").get<std::vector<int>>();
    p.solutions[key_from(e)] = s;
  }
  if (!j.at("rig").is_null()) {
    const json& r = j["rig"];
    RigState rig;
    for (const json& c : r.at("cameras")) {
      rig.image_ids.push_back(c.at("id").get<std::string>());
      rig.thetas.push_back(c.at("theta").get<double>());
      rig.centers.push_back(vec_from(c.at("C")));
    }
    rig.baseline = {r.at("baseline").at(0).get<std::string>(), r.at("baseline").at(1).get<std::string>()};
    rig.rotation_objective = r.at("rotation_objective").get<double>();
    rig.position_objective = r.at("position_objective").get<double>();
    p.rig = rig;
  }
  for (const json& e : j.at("points")) {
    SparsePoint s;
    s.track = e.at("track").get<int>();
    s.P = vec_from(e.at("P"));
    s.color = {e.at("color").at(0).get<std::uint8_t>(), e.at("color").at(1).get<std::uint8_t>(),
               e.at("color").at(2).get<std::uint8_t>()};
    s.rms_residual = e.at("rms_residual").get<double>();
    s.accepted = e.at("accepted").get<bool>();
    for (const auto& [id, px] : e.at("observations").items()) {
      s.observations[id] = {px.at(0).get<double>(), px.at(1).get<double>()};
    }
    p.points.push_back(s);
  }
  for (const json& e : j.at("dense")) {
    DenseProduct d;
    d.rect1 = e.at("rect1").get<std::string>();
    d.rect2 = e.at("rect2").get<std::string>();
    d.disparity = e.at("disparity").get<std::string>();
    d.preview = e.at("preview").get<std::string>();
    d.cloud = e.at("cloud").get<std::string>();
    d.R_rect1 = mat_from(e.at("R_rect1"));
    d.R_rect2 = mat_from(e.at("R_rect2"));
    d.rect_size = {e.at("rect_width").get<int>(), e.at("rect_height").get<int>()};
    d.baseline = e.at("baseline").get<double>();
    d.points = e.at("points").get<std::size_t>();
    p.dense[key_from(e)] = d;
  }
  return p;
}

}  // namespace

Config load_config(const std::filesystem::path& dir) {
  Config c;
  const auto path = dir / kConfigFile;
  if (std::filesystem::exists(path)) {
    try {
      apply_config(c, json::parse(read_file(path)));
    } catch (const json::exception& e) {
      throw Error(ErrorCategory::ParseError, "config.json: " + std::string(e.what()));
    }
  }
  c.seed = env_number<std::uint64_t>("SPHERESFM_SEED", c.seed);
  c.port = env_number<int>("SPHERESFM_PORT", c.port);
  c.ransac.seed = c.seed;
  return c;
}

void save_config(const Config& config, const std::filesystem::path& dir) {
  write_file_atomic(dir / kConfigFile, config_json(config).dump(2) + "\n");
}

PairKey normalize_pair(const std::string& x, const std::string& y, bool* swapped) {
  if (x == y) throw Error(ErrorCategory::InvalidArgument, "a pair needs two different images");
  const bool s = y < x;
  if (swapped != nullptr) *swapped = s;
  return s ? PairKey{y, x} : PairKey{x, y};
}

const ImageEntry* Project::find_image(const std::string& id) const {
  for (const ImageEntry& e : images) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

const ImageEntry& Project::image(const std::string& id) const {
  const ImageEntry* e = find_image(id);
  if (e == nullptr) throw Error(ErrorCategory::UnknownImageId, "unknown image id '" + id + "'");
  return *e;
}

std::map<std::string, ImageSize> Project::image_sizes() const {
  std::map<std::string, ImageSize> out;
  for (const ImageEntry& e : images) out[e.id] = e.size;
  return out;
}

std::vector<Correspondence> Project::pair_correspondences(const PairKey& key) const {
  std::vector<Correspondence> out;
  for (const Correspondence& c : correspondences) {
    if (c.image_a == key.a && c.image_b == key.b) out.push_back(c);
  }
  return out;
}

Project init_project(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / kProjectFile)) {
    throw Error(ErrorCategory::ProjectError, "a project already exists in " + dir.string());
  }
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "dense");
  Project p;
  p.dir = dir;
  save_project(p);
  if (!std::filesystem::exists(dir / kConfigFile)) save_config(Config{}, dir);
  return p;
}

Project load_project(const std::filesystem::path& dir) {
  const auto path = dir / kProjectFile;
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCategory::ProjectError, "no project in " + dir.string());
  }
  Project p;
  try {
    p = project_from(json::parse(read_file(path)), dir);
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::ProjectError, "project.json: " + std::string(e.what()));
  } catch (const Error& e) {
    throw Error(ErrorCategory::ProjectError, "project.json: " + std::string(e.what()));
  }
  for (const ImageEntry& im : p.images) {
    if (!std::filesystem::exists(p.path_of(im.file))) {
      throw Error(ErrorCategory::IoError, "missing image file " + im.file);
    }
  }
  return p;
}

void save_project(const Project& project) {
  write_file_atomic(project.dir / kProjectFile, project_json(project).dump(2) + "\n");
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCategory::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCategory::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCategory::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace spheresfm
