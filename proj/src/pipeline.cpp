#include "spheresfm/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "spheresfm/error.hpp"
#include "spheresfm/formats.hpp"

namespace spheresfm {

namespace {

void check_id(const std::string& id) {
  const bool ok = !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char ch) {
    return std::isalnum(ch) || ch == '_' || ch == '-' || ch == '.';
  });
  if (!ok || id[0] == '.') {
    throw Error(ErrorCategory::InvalidArgument,
                "image id '" + id + "' must use letters, digits, '_', '-' or '.'");
  }
}

std::vector<BearingPair> bearings_of(const Project& project,
                                     const std::vector<Correspondence>& corrs) {
  std::vector<BearingPair> out;
  out.reserve(corrs.size());
  for (const Correspondence& c : corrs) {
    out.push_back(to_bearings(c, project.image(c.image_a).size, project.image(c.image_b).size));
  }
  return out;
}

const PairSolution& require_solution(const Project& project, const PairKey& key) {
  auto it = project.solutions.find(key);
  if (it == project.solutions.end()) {
    throw Error(ErrorCategory::MissingPrerequisite,
                "pair " + key.a + "/" + key.b + " has no solution; run estimate-pair first");
  }
  return it->second;
}

std::string product_stem(const PairKey& key) { return "dense/" + key.a + "__" + key.b; }

// Baseline length and world pose of the first camera when a rig exists.
std::pair<double, std::optional<CameraPose>> pair_placement(const Project& project,
                                                            const PairKey& key) {
  if (!project.rig) return {1.0, std::nullopt};
  const RigState& rig = *project.rig;
  auto index = [&](const std::string& id) {
    auto it = std::find(rig.image_ids.begin(), rig.image_ids.end(), id);
    return it == rig.image_ids.end() ? -1 : int(it - rig.image_ids.begin());
  };
  const int ia = index(key.a);
  const int ib = index(key.b);
  if (ia < 0 || ib < 0) return {1.0, std::nullopt};
  const PlanarRig planar = rig.rig();
  const CameraPose pa = planar.pose(ia);
  // The pair solution lives in camera a's frame; the rig supplies scale and
  // placement.
  return {(rig.centers[ib] - rig.centers[ia]).norm(), pa};
}

}  // namespace

const ImageEntry& add_image(Project& project, const std::filesystem::path& file,
                            std::optional<std::string> id) {
  const std::string image_id = id.value_or(file.stem().string());
  check_id(image_id);
  if (project.find_image(image_id) != nullptr) {
    throw Error(ErrorCategory::InvalidArgument, "image id '" + image_id + "' already exists");
  }
  const EquirectImage img = load_equirect(file);
  std::string ext = file.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
  const std::string relative = "images/" + image_id + ext;
  std::filesystem::create_directories(project.dir / "images");
  write_file_atomic(project.path_of(relative), read_file(file));
  project.images.push_back({image_id, relative, img.size()});
  return project.images.back();
}

int add_correspondence(Project& project, const std::string& image_a, const std::string& image_b,
                       const PixelCoord& pa, const PixelCoord& pb, MatchSource source) {
  const ImageSize sa = project.image(image_a).size;
  const ImageSize sb = project.image(image_b).size;
  auto inside = [](const PixelCoord& p, const ImageSize& s) {
    return p.x >= 0.0 && p.x <= s.width && p.y >= 0.0 && p.y <= s.height;
  };
  if (!inside(pa, sa) || !inside(pb, sb)) {
    throw Error(ErrorCategory::InvalidArgument, "correspondence lies outside the image");
  }
  bool swapped = false;
  const PairKey key = normalize_pair(image_a, image_b, &swapped);
  Correspondence c;
  c.id = project.next_correspondence_id++;
  c.image_a = key.a;
  c.image_b = key.b;
  c.pa = swapped ? pb : pa;
  c.pb = swapped ? pa : pb;
  c.source = source;
  project.correspondences.push_back(c);
  return c.id;
}

bool delete_correspondence(Project& project, int id) {
  auto it = std::find_if(project.correspondences.begin(), project.correspondences.end(),
                         [&](const Correspondence& c) { return c.id == id; });
  if (it == project.correspondences.end()) return false;
  project.correspondences.erase(it);
  return true;
}

int import_matches_file(Project& project, const std::filesystem::path& file,
                        const std::optional<PairKey>& pair, bool as_manual) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCategory::IoError, "cannot read " + file.string());
  std::vector<Correspondence> records = import_matches(in, project.image_sizes());
  for (const Correspondence& r : records) {
    const PairKey key = normalize_pair(r.image_a, r.image_b);
    if (pair && key != *pair) {
      throw Error(ErrorCategory::ParseError, "record for " + key.a + "/" + key.b +
                                                 " outside the requested pair " + pair->a + "/" +
                                                 pair->b);
    }
  }
  const MatchSource source = as_manual ? MatchSource::Manual : MatchSource::Imported;
  for (const Correspondence& r : records) {
    add_correspondence(project, r.image_a, r.image_b, r.pa, r.pb, source);
    if (r.score) project.correspondences.back().score = r.score;
  }
  return int(records.size());
}

const PairSolution& estimate_pair(Project& project, const std::string& a, const std::string& b,
                                  EstimateMethod method, const Config& config) {
  project.image(a);
  project.image(b);
  const PairKey key = normalize_pair(a, b);
  std::vector<Correspondence> pool = project.pair_correspondences(key);
  if (method == EstimateMethod::Linear) {
    std::erase_if(pool, [](const Correspondence& c) { return c.source != MatchSource::Manual; });
  }
  const std::vector<BearingPair> bearings = bearings_of(project, pool);
  if (bearings.size() < 8) {
    throw Error(ErrorCategory::InsufficientPairs,
                "pair " + key.a + "/" + key.b + " has " + std::to_string(bearings.size()) +
                    (method == EstimateMethod::Linear ? " manual" : "") +
                    " correspondences; at least 8 are required");
  }

  PairSolution s;
  std::vector<BearingPair> samples;
  std::vector<int> inlier_ids;
  if (method == EstimateMethod::Linear) {
    s.method = "linear";
    s.F = estimate_F_linear(bearings);
    for (std::size_t k = 0; k < pool.size(); ++k) {
      if (epipolar_residual(bearings[k], s.F) < config.filter_epsilon) inlier_ids.push_back(pool[k].id);
    }
    samples = bearings;
  } else {
    s.method = "ransac";
    RansacParams params = config.ransac;
    params.seed = config.seed;
    const RansacResult r = estimate_F_ransac(bearings, params);
    s.F = r.F;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      if (r.inliers[k]) {
        inlier_ids.push_back(pool[k].id);
        samples.push_back(bearings[k]);
      }
    }
  }
  const TwoViewSolution pose = solve_pose(s.F, samples);
  s.e1 = pose.e1;
  s.e2 = pose.e2;
  s.R = pose.R;
  s.inlier_ids = std::move(inlier_ids);
  project.solutions[key] = s;
  return project.solutions[key];
}

int augment_pair(Project& project, const std::string& a, const std::string& b, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCategory::InvalidArgument, "epsilon must be positive");
  const PairKey key = normalize_pair(a, b);
  project.image(key.a);
  project.image(key.b);
  const PairSolution& s = require_solution(project, key);
  std::vector<Correspondence> manual;
  std::vector<Correspondence> imported;
  for (const Correspondence& c : project.pair_correspondences(key)) {
    if (c.source == MatchSource::Manual) manual.push_back(c);
    if (c.source == MatchSource::Imported) imported.push_back(c);
  }
  const auto pool = augment_pool(manual, imported, s.F, epsilon, project.image(key.a).size,
                                 project.image(key.b).size);
  std::map<int, const Correspondence*> by_id;
  for (const Correspondence& c : pool) by_id[c.id] = &c;
  int augmented = 0;
  for (Correspondence& c : project.correspondences) {
    auto it = by_id.find(c.id);
    if (c.image_a != key.a || c.image_b != key.b || it == by_id.end()) continue;
    c.residual = it->second->residual;
    if (it->second->source == MatchSource::Augmented && c.source == MatchSource::Imported) {
      c.source = MatchSource::Augmented;
      ++augmented;
    }
  }
  return augmented;
}

const RigState& register_rig(Project& project, const Config& config,
                             std::optional<std::pair<std::string, std::string>> baseline) {
  if (project.images.size() < 2) {
    throw Error(ErrorCategory::MissingPrerequisite, "registration needs at least two images");
  }
  std::map<std::string, int> index;
  std::vector<std::string> ids;
  for (const ImageEntry& e : project.images) {
    index[e.id] = int(ids.size());
    ids.push_back(e.id);
  }
  std::vector<PairEstimate> pairs;
  for (const auto& [key, s] : project.solutions) {
    pairs.push_back({index.at(key.a), index.at(key.b), s.e1, s.e2,
                     double(std::max<std::size_t>(1, s.inlier_ids.size()))});
  }
  if (pairs.empty()) {
    throw Error(ErrorCategory::MissingPrerequisite, "no solved pairs; run estimate-pair first");
  }
  const auto chosen = baseline.value_or(std::make_pair(ids[0], ids[1]));
  project.image(chosen.first);
  project.image(chosen.second);
  const std::pair<int, int> gauge{index.at(chosen.first), index.at(chosen.second)};

  const int n = int(ids.size());
  const RotationEstimate rot = estimate_rotations(pairs, n, config.seed);
  if (!rot.converged) {
    throw Error(ErrorCategory::NonConvergence, "rotation estimation did not converge");
  }
  const std::vector<Vec3> initial = estimate_positions(rot.thetas, pairs, gauge);
  const RefineResult refined = refine_positions(initial, rot.thetas, pairs, {}, gauge);

  RigState rig;
  rig.image_ids = ids;
  rig.thetas = rot.thetas;
  rig.centers = refined.centers;
  rig.baseline = chosen;
  rig.rotation_objective = rot.objective;
  rig.position_objective = refined.objective;
  project.rig = rig;
  return *project.rig;
}

std::pair<std::vector<std::string>, std::vector<CameraPose>> reconstruction_poses(
    const Project& project) {
  if (project.rig) return {project.rig->image_ids, project.rig->rig().poses()};
  if (project.solutions.size() == 1) {
    const auto& [key, s] = *project.solutions.begin();
    return {{key.a, key.b}, {CameraPose{}, CameraPose{s.R, s.e1.vec()}}};
  }
  throw Error(ErrorCategory::MissingPrerequisite,
              "no camera poses; run register (or solve exactly one pair)");
}

std::size_t triangulate_points(Project& project) {
  const auto [ids, poses] = reconstruction_poses(project);
  std::map<std::string, int> index;
  std::vector<ImageSize> sizes;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    index[ids[k]] = int(k);
    sizes.push_back(project.image(ids[k]).size);
  }
  std::vector<Correspondence> usable;
  for (const Correspondence& c : project.correspondences) {
    if (c.source == MatchSource::Imported) continue;
    if (!index.contains(c.image_a) || !index.contains(c.image_b)) continue;
    usable.push_back(c);
  }
  const TrackSet tracks = build_tracks(usable, index);

  std::map<int, EquirectImage> images;
  std::vector<SparsePoint> points;
  std::size_t accepted = 0;
  for (const Track& t : tracks.tracks) {
    if (!t.consistent || t.observations.size() < 2) continue;
    MultiviewPoint mp;
    try {
      mp = triangulate_track(t, poses, sizes);
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::DegenerateTrack) continue;
      throw;
    }
    SparsePoint sp;
    sp.track = t.id;
    sp.P = mp.P;
    sp.rms_residual = mp.rms_residual;
    sp.accepted = mp.accepted && mp.P.allFinite();
    const auto& [cam, px] = *t.observations.begin();
    if (!images.contains(cam)) {
      images.emplace(cam, load_equirect(project.path_of(project.image(ids[cam]).file)));
    }
    sp.color = to_rgb(sample_bilinear(images.at(cam), px));
    for (const auto& [c, p] : t.observations) sp.observations[ids[c]] = p;
    accepted += sp.accepted ? 1 : 0;
    points.push_back(sp);
  }
  project.points = std::move(points);
  return accepted;
}

void rectify_step(Project& project, const std::string& a, const std::string& b,
                  const Config& config) {
  const PairKey key = normalize_pair(a, b);
  const PairSolution& s = require_solution(project, key);
  const EquirectImage img1 = load_equirect(project.path_of(project.image(key.a).file));
  const EquirectImage img2 = load_equirect(project.path_of(project.image(key.b).file));
  const ImageSize rect_size =
      ImageSize::from_height(config.rect_height > 0 ? config.rect_height : img1.size().height);
  const RectifiedPair pair = rectify_pair(img1, img2, s.e1, s.R, rect_size);
  DenseProduct d;
  d.rect1 = product_stem(key) + "_rect1.png";
  d.rect2 = product_stem(key) + "_rect2.png";
  d.R_rect1 = pair.R_rect1;
  d.R_rect2 = pair.R_rect2;
  d.rect_size = rect_size;
  d.baseline = pair_placement(project, key).first;
  std::filesystem::create_directories(project.dir / "dense");
  save_png(pair.rect1, project.path_of(d.rect1));
  save_png(pair.rect2, project.path_of(d.rect2));
  project.dense[key] = d;
}

std::size_t disparity_step(Project& project, const std::string& a, const std::string& b,
                           const Config& config) {
  const PairKey key = normalize_pair(a, b);
  auto it = project.dense.find(key);
  if (it == project.dense.end()) {
    throw Error(ErrorCategory::MissingPrerequisite, "pair is not rectified; run rectify first");
  }
  DenseProduct d = it->second;
  RectifiedPair pair;
  pair.rect1 = load_raster(project.path_of(d.rect1));
  pair.rect2 = load_raster(project.path_of(d.rect2));
  pair.R_rect1 = d.R_rect1;
  pair.R_rect2 = d.R_rect2;
  pair.rect_size = d.rect_size;
  const DisparityMap disp = compute_disparity(pair, config.dense);
  d.disparity = product_stem(key) + "_disparity.pfm";
  d.preview = product_stem(key) + "_disparity.png";
  d.cloud.clear();
  d.points = 0;
  write_pfm(project.path_of(d.disparity), disp);
  save_png_gray(disp.width, disp.height, disparity_preview(disp), project.path_of(d.preview));
  it->second = d;
  return disp.valid_count();
}

std::size_t dense_step(Project& project, const std::string& a, const std::string& b) {
  const PairKey key = normalize_pair(a, b);
  auto it = project.dense.find(key);
  if (it == project.dense.end() || it->second.disparity.empty()) {
    throw Error(ErrorCategory::MissingPrerequisite, "no disparity map; run disparity first");
  }
  DenseProduct d = it->second;
  const DisparityMap disp = read_pfm(project.path_of(d.disparity));
  RectifiedPair pair;
  pair.rect1 = load_raster(project.path_of(d.rect1));
  pair.rect2 = pair.rect1;
  pair.R_rect1 = d.R_rect1;
  pair.R_rect2 = d.R_rect2;
  pair.rect_size = d.rect_size;
  const auto [baseline, camera_1] = pair_placement(project, key);
  const DenseCloud cloud = dense_cloud(disp, pair, baseline, camera_1);
  d.baseline = baseline;
  d.cloud = product_stem(key) + ".ply";
  d.points = cloud.points.size();
  write_ply(project.path_of(d.cloud), cloud.points);
  it->second = d;
  return d.points;
}

std::vector<ColoredPoint> sparse_points(const Project& project) {
  std::vector<ColoredPoint> out;
  for (const SparsePoint& s : project.points) {
    if (s.accepted) out.push_back({s.P, s.color});
  }
  return out;
}

std::vector<ColoredPoint> dense_points(const Project& project) {
  std::vector<ColoredPoint> out;
  for (const auto& [key, d] : project.dense) {
    if (d.cloud.empty()) continue;
    const auto pts = read_ply(project.path_of(d.cloud));
    out.insert(out.end(), pts.begin(), pts.end());
  }
  return out;
}

std::vector<std::vector<PixelCoord>> epipolar_curve_for(const Project& project,
                                                        const std::string& a,
                                                        const std::string& b, const PixelCoord& p,
                                                        int samples) {
  const ImageSize size_a = project.image(a).size;
  const ImageSize size_b = project.image(b).size;
  bool swapped = false;
  const PairKey key = normalize_pair(a, b, &swapped);
  const PairSolution& s = require_solution(project, key);
  const Bearing z = pixel_to_bearing(p, size_a);
  const FundamentalMatrix F =
      swapped ? FundamentalMatrix::from_raw(s.F.matrix().transpose()) : s.F;
  return epipolar_curve(F, z, size_b, samples);
}

std::string poses_document(const Project& project) {
  if (!project.rig) throw Error(ErrorCategory::MissingPrerequisite, "no registered rig");
  const RigState& rig = *project.rig;
  const PlanarRig planar = rig.rig();
  nlohmann::json cams = nlohmann::json::array();
  for (int k = 0; k < planar.size(); ++k) {
    const CameraPose pose = planar.pose(k);
    nlohmann::json R = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R.push_back(pose.R(r, c));
    }
    cams.push_back({{"id", rig.image_ids[k]},
                    {"theta", rig.thetas[k]},
                    {"R", R},
                    {"C", {pose.C.x(), pose.C.y(), pose.C.z()}}});
  }
  nlohmann::json doc = {{"baseline", {rig.baseline.first, rig.baseline.second}}, {"cameras", cams}};
  return doc.dump(2) + "\n";
}

}  // namespace spheresfm
