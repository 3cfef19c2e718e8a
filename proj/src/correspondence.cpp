#include "spheresfm/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "spheresfm/error.hpp"

namespace spheresfm {

namespace {

constexpr std::array<std::string_view, 6> kFaceNames = {"+X", "-X", "+Y", "-Y", "+Z", "-Z"};

void fill_face(const EquirectImage& img, CubeFace face, int face_size, Raster& out) {
  out = Raster(face_size, face_size);
  const ImageSize size = img.size();
  for (int v = 0; v < face_size; ++v) {
    for (int u = 0; u < face_size; ++u) {
      const Vec3 d = cube_face_direction({face, u + 0.5, v + 0.5}, face_size);
      const PixelCoord p = bearing_to_pixel(Bearing::normalize(d), size);
      out.at(u, v) = to_rgb(sample_bilinear(img, p));
    }
  }
}

double require_number(const nlohmann::json& rec, const char* key, std::size_t line) {
  const auto it = rec.find(key);
  if (it == rec.end() || !it->is_number()) {
    throw Error(ErrorCategory::ParseError,
                "line " + std::to_string(line) + ": missing numeric field '" + key + "'");
  }
  return it->get<double>();
}

std::string require_string(const nlohmann::json& rec, const char* key, std::size_t line) {
  const auto it = rec.find(key);
  if (it == rec.end() || !it->is_string()) {
    throw Error(ErrorCategory::ParseError,
                "line " + std::to_string(line) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

PixelCoord read_side(const nlohmann::json& rec, const char* xkey, const char* ykey,
                     const char* face_key, const ImageSize& size, std::size_t line) {
  PixelCoord p{require_number(rec, xkey, line), require_number(rec, ykey, line)};
  const auto face_it = rec.find(face_key);
  if (face_it != rec.end() && !face_it->is_null()) {
    const auto face = face_it->is_string() ? parse_face(face_it->get<std::string>()) : std::nullopt;
    if (!face) {
      throw Error(ErrorCategory::ParseError,
                  "line " + std::to_string(line) + ": invalid face id in '" + face_key + "'");
    }
    const double fs = require_number(rec, "face_size", line);
    if (!(fs >= 1.0) || fs != std::floor(fs)) {
      throw Error(ErrorCategory::ParseError, "line " + std::to_string(line) + ": invalid face_size");
    }
    if (p.x < 0.0 || p.y < 0.0 || p.x > fs || p.y > fs) {
      throw Error(ErrorCategory::ParseError,
                  "line " + std::to_string(line) + ": face coordinates out of range");
    }
    return cubeface_to_equirect({*face, p.x, p.y}, int(fs), size);
  }
  if (p.x < 0.0 || p.x >= size.width || p.y < 0.0 || p.y > size.height) {
    throw Error(ErrorCategory::ParseError,
                "line " + std::to_string(line) + ": pixel coordinates out of range");
  }
  return p;
}

using NodeKey = std::tuple<int, long long, long long>;

NodeKey node_key(int camera, const PixelCoord& p) {
  return {camera, std::llround(p.x * 1000.0), std::llround(p.y * 1000.0)};
}

}  // namespace

std::string_view source_name(MatchSource s) {
  switch (s) {
    case MatchSource::Manual: return "manual";
    case MatchSource::Imported: return "imported";
    case MatchSource::Augmented: return "augmented";
  }
  return "manual";
}

MatchSource parse_source(std::string_view name) {
  if (name == "manual") return MatchSource::Manual;
  if (name == "imported") return MatchSource::Imported;
  if (name == "augmented") return MatchSource::Augmented;
  throw Error(ErrorCategory::ParseError, "unknown correspondence source '" + std::string(name) + "'");
}

std::string_view face_name(CubeFace f) { return kFaceNames[std::size_t(f)]; }

std::optional<CubeFace> parse_face(std::string_view name) {
  for (std::size_t k = 0; k < kFaceNames.size(); ++k) {
    if (kFaceNames[k] == name) return CubeFace(k);
  }
  return std::nullopt;
}

Vec3 cube_face_direction(const CubeFacePoint& p, int face_size) {
  const double a = 2.0 * p.u / face_size - 1.0;
  const double b = 2.0 * p.v / face_size - 1.0;
  switch (p.face) {
    case CubeFace::PosX: return {1.0, -a, -b};
    case CubeFace::NegX: return {-1.0, a, -b};
    case CubeFace::PosY: return {a, 1.0, -b};
    case CubeFace::NegY: return {-a, -1.0, -b};
    case CubeFace::PosZ: return {b, -a, 1.0};
    case CubeFace::NegZ: return {-b, -a, -1.0};
  }
  return {1.0, 0.0, 0.0};
}

CubeFacePoint direction_to_cube_face(const Vec3& d, int face_size) {
  int axis = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(d[k]) > std::abs(d[axis])) axis = k;
  }
  const double m = std::abs(d[axis]);
  const Vec3 q = d / m;
  double a = 0.0;
  double b = 0.0;
  CubeFace face{};
  if (axis == 0) {
    face = d.x() > 0 ? CubeFace::PosX : CubeFace::NegX;
    a = d.x() > 0 ? -q.y() : q.y();
    b = -q.z();
  } else if (axis == 1) {
    face = d.y() > 0 ? CubeFace::PosY : CubeFace::NegY;
    a = d.y() > 0 ? q.x() : -q.x();
    b = -q.z();
  } else {
    face = d.z() > 0 ? CubeFace::PosZ : CubeFace::NegZ;
    a = -q.y();
    b = d.z() > 0 ? q.x() : -q.x();
  }
  return {face, 0.5 * (a + 1.0) * face_size, 0.5 * (b + 1.0) * face_size};
}

PixelCoord cubeface_to_equirect(const CubeFacePoint& p, int face_size, const ImageSize& size) {
  return bearing_to_pixel(Bearing::normalize(cube_face_direction(p, face_size)), size);
}

CubeFacePoint equirect_to_cubeface(const PixelCoord& p, const ImageSize& size, int face_size) {
  return direction_to_cube_face(pixel_to_bearing(p, size).vec(), face_size);
}

CubeFaceSet equirect_to_cubemap(const EquirectImage& img, int face_size,
                                const std::string& source_id) {
  if (face_size < 1) throw Error(ErrorCategory::InvalidArgument, "face_size must be >= 1");
  CubeFaceSet set;
  set.face_size = face_size;
  set.source_id = source_id;
#pragma omp parallel for schedule(static)
  for (int f = 0; f < 6; ++f) fill_face(img, CubeFace(f), face_size, set.faces[f]);
  return set;
}

CubeFaceSet equirect_to_cubemap_serial(const EquirectImage& img, int face_size,
                                       const std::string& source_id) {
  if (face_size < 1) throw Error(ErrorCategory::InvalidArgument, "face_size must be >= 1");
  CubeFaceSet set;
  set.face_size = face_size;
  set.source_id = source_id;
  for (int f = 0; f < 6; ++f) fill_face(img, CubeFace(f), face_size, set.faces[f]);
  return set;
}

std::vector<Correspondence> import_matches(std::istream& in,
                                           const std::map<std::string, ImageSize>& images) {
  std::vector<Correspondence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCategory::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object()) {
      throw Error(ErrorCategory::ParseError, "line " + std::to_string(line_no) + ": expected an object");
    }
    Correspondence c;
    c.image_a = require_string(rec, "image_a", line_no);
    c.image_b = require_string(rec, "image_b", line_no);
    for (const std::string* id : {&c.image_a, &c.image_b}) {
      if (!images.contains(*id)) {
        throw Error(ErrorCategory::UnknownImageId,
                    "line " + std::to_string(line_no) + ": unknown image id '" + *id + "'");
      }
    }
    if (c.image_a == c.image_b) {
      throw Error(ErrorCategory::ParseError,
                  "line " + std::to_string(line_no) + ": image_a and image_b must differ");
    }
    c.pa = read_side(rec, "xa", "ya", "face_a", images.at(c.image_a), line_no);
    c.pb = read_side(rec, "xb", "yb", "face_b", images.at(c.image_b), line_no);
    if (const auto it = rec.find("score"); it != rec.end() && it->is_number()) {
      c.score = it->get<double>();
    }
    c.source = MatchSource::Imported;
    c.id = int(out.size());
    out.push_back(std::move(c));
  }
  return out;
}

BearingPair to_bearings(const Correspondence& c, const ImageSize& size_a, const ImageSize& size_b) {
  return {pixel_to_bearing(c.pa, size_a), pixel_to_bearing(c.pb, size_b)};
}

std::vector<Correspondence> augment_pool(std::span<const Correspondence> manual,
                                         std::span<const Correspondence> imported,
                                         const FundamentalMatrix& F, double epsilon,
                                         const ImageSize& size_a, const ImageSize& size_b) {
  std::vector<Correspondence> out;
  auto duplicate = [&](const Correspondence& c) {
    return std::any_of(out.begin(), out.end(), [&](const Correspondence& k) {
      return wrapped_pixel_distance(k.pa, c.pa, size_a) <= 1.0 &&
             wrapped_pixel_distance(k.pb, c.pb, size_b) <= 1.0;
    });
  };
  for (const Correspondence& m : manual) {
    Correspondence c = m;
    c.residual = epipolar_residual(to_bearings(c, size_a, size_b), F);
    out.push_back(std::move(c));
  }
  for (const Correspondence& m : imported) {
    const double r = epipolar_residual(to_bearings(m, size_a, size_b), F);
    if (!(r < epsilon || r == 0.0)) continue;
    if (duplicate(m)) continue;
    Correspondence c = m;
    c.residual = r;
    c.source = MatchSource::Augmented;
    out.push_back(std::move(c));
  }
  return out;
}

TrackSet build_tracks(std::span<const Correspondence> correspondences,
                      const std::map<std::string, int>& camera_index) {
  std::map<NodeKey, PixelCoord> nodes;
  std::vector<std::pair<NodeKey, NodeKey>> edges;
  auto camera_of = [&](const std::string& id) {
    const auto it = camera_index.find(id);
    if (it == camera_index.end()) {
      throw Error(ErrorCategory::UnknownImageId, "unknown image id '" + id + "'");
    }
    return it->second;
  };
  auto add_node = [&](int camera, const PixelCoord& p) {
    const NodeKey k = node_key(camera, p);
    auto [it, inserted] = nodes.emplace(k, p);
    if (!inserted && std::tie(p.x, p.y) < std::tie(it->second.x, it->second.y)) it->second = p;
    return k;
  };
  for (const Correspondence& c : correspondences) {
    const int ca = camera_of(c.image_a);
    const int cb = camera_of(c.image_b);
    if (ca == cb) throw Error(ErrorCategory::InvalidArgument, "correspondence within one image");
    NodeKey ka = add_node(ca, c.pa);
    NodeKey kb = add_node(cb, c.pb);
    if (kb < ka) std::swap(ka, kb);
    edges.emplace_back(ka, kb);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::map<NodeKey, int> index;
  std::vector<NodeKey> keys;
  for (const auto& [k, p] : nodes) {
    index[k] = int(keys.size());
    keys.push_back(k);
  }
  const int n = int(keys.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::map<int, int>> members(n);  // root -> camera -> node
  std::vector<bool> inconsistent(n, false);
  for (int k = 0; k < n; ++k) members[k][std::get<0>(keys[k])] = k;
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  for (const auto& [ka, kb] : edges) {
    int ra = find(index[ka]);
    int rb = find(index[kb]);
    if (ra == rb) continue;
    bool conflict = false;
    for (const auto& [camera, node] : members[rb]) {
      const auto it = members[ra].find(camera);
      if (it != members[ra].end() && it->second != node) conflict = true;
    }
    if (conflict) {
      inconsistent[ra] = inconsistent[rb] = true;
      continue;
    }
    if (rb < ra) std::swap(ra, rb);
    parent[rb] = ra;
    members[ra].insert(members[rb].begin(), members[rb].end());
    members[rb].clear();
    inconsistent[ra] = inconsistent[ra] || inconsistent[rb];
  }

  TrackSet set;
  for (int k = 0; k < n; ++k) {
    if (find(k) != k || members[k].size() < 2) continue;
    Track t;
    t.id = int(set.tracks.size());
    t.consistent = !inconsistent[k];
    for (const auto& [camera, node] : members[k]) t.observations[camera] = nodes.at(keys[node]);
    set.tracks.push_back(std::move(t));
  }
  return set;
}

}  // namespace spheresfm
