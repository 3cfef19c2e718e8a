#include "spheresfm/multiview.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <tuple>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "spheresfm/epipolar.hpp"
#include "spheresfm/error.hpp"
#include "spheresfm/rng.hpp"

namespace spheresfm {

namespace {

constexpr int kStartsPerAngle = 8;
constexpr int kNewtonIterations = 100;
constexpr double kGradientTolerance = 1e-10;

double wrap_pi(double a) {
  double t = std::remainder(a, kTwoPi);
  if (t <= -kPi) t += kTwoPi;
  return t;
}

void validate_pairs(std::span<const PairEstimate> pairs, int n_cameras) {
  if (n_cameras < 2) throw Error(ErrorCategory::InvalidArgument, "need at least two cameras");
  std::vector<int> parent(n_cameras);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const PairEstimate& p : pairs) {
    if (p.i < 0 || p.j < 0 || p.i >= n_cameras || p.j >= n_cameras || p.i == p.j) {
      throw Error(ErrorCategory::InvalidArgument, "pair references an invalid camera index");
    }
    parent[find(p.i)] = find(p.j);
  }
  for (int k = 1; k < n_cameras; ++k) {
    if (find(k) != find(0)) {
      throw Error(ErrorCategory::DisconnectedGraph,
                  "camera " + std::to_string(k) + " is not connected to camera 0");
    }
  }
}

// Coefficients of g(delta) = p cos(delta) + q sin(delta) + r, the dot product
// of the two world-frame epipoles as a function of theta_i - theta_j.
struct PairTerm {
  double p, q, r;
};

PairTerm pair_term(const PairEstimate& e) {
  const Vec3& a = e.e_ij;
  const Vec3& b = e.e_ji;
  return {a.x() * b.x() + a.y() * b.y(), a.y() * b.x() - a.x() * b.y(), a.z() * b.z()};
}

double pair_dot(const PairEstimate& e, double theta_i, double theta_j) {
  const PairTerm t = pair_term(e);
  const double d = theta_i - theta_j;
  return t.p * std::cos(d) + t.q * std::sin(d) + t.r;
}

// 1 - (a.b)^2 for unit a, b, as |a x b|^2 so it stays accurate near zero.
double sine_squared(const Vec3& a, const Vec3& b) { return a.cross(b).squaredNorm(); }

// 1 - g^2 for the pair at the given angles.
double pair_term_value(const PairEstimate& e, double theta_i, double theta_j) {
  return sine_squared(yaw_matrix(theta_i).transpose() * e.e_ij.vec(),
                      yaw_matrix(theta_j).transpose() * e.e_ji.vec());
}

struct Surrogate {
  std::span<const PairEstimate> pairs;
  int n;

  double value(const Eigen::VectorXd& x) const {
    double f = 0.0;
    for (const PairEstimate& e : pairs) f += e.weight * pair_term_value(e, angle(x, e.i), angle(x, e.j));
    return f;
  }

  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    grad.setZero(n - 1);
    hess.setZero(n - 1, n - 1);
    double f = 0.0;
    for (const PairEstimate& e : pairs) {
      const PairTerm t = pair_term(e);
      const double d = angle(x, e.i) - angle(x, e.j);
      const double c = std::cos(d);
      const double s = std::sin(d);
      const double g = t.p * c + t.q * s + t.r;
      const double g1 = -t.p * s + t.q * c;
      const double g2 = -t.p * c - t.q * s;
      f += e.weight * pair_term_value(e, angle(x, e.i), angle(x, e.j));
      const double hd = -2.0 * e.weight * g * g1;
      const double hdd = -2.0 * e.weight * (g1 * g1 + g * g2);
      const int vi = e.i - 1;
      const int vj = e.j - 1;
      if (vi >= 0) {
        grad[vi] += hd;
        hess(vi, vi) += hdd;
      }
      if (vj >= 0) {
        grad[vj] -= hd;
        hess(vj, vj) += hdd;
      }
      if (vi >= 0 && vj >= 0) {
        hess(vi, vj) -= hdd;
        hess(vj, vi) -= hdd;
      }
    }
    return f;
  }

  static double angle(const Eigen::VectorXd& x, int camera) { return camera == 0 ? 0.0 : x[camera - 1]; }
};

struct NewtonResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
};

NewtonResult damped_newton(const Surrogate& s, Eigen::VectorXd x) {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double f = s.evaluate(x, grad, hess);
  double mu = 0.0;
  NewtonResult out;
  for (int it = 0; it < kNewtonIterations; ++it) {
    if (grad.norm() < kGradientTolerance) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    const double scale = 1.0 + hess.cwiseAbs().maxCoeff();
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      Eigen::MatrixXd damped = hess;
      damped.diagonal().array() += mu;
      Eigen::LLT<Eigen::MatrixXd> llt(damped);
      if (llt.info() != Eigen::Success) {
        mu = std::max(2.0 * mu, 1e-8 * scale);
        continue;
      }
      const Eigen::VectorXd step = llt.solve(-grad);
      const Eigen::VectorXd candidate = x + step;
      const double fc = s.value(candidate);
      if (fc <= f) {
        x = candidate;
        accepted = true;
        mu *= 0.1;
        if (mu < 1e-12 * scale) mu = 0.0;
      } else {
        mu = std::max(4.0 * mu, 1e-8 * scale);
      }
    }
    out.iterations = it + 1;
    if (!accepted) break;
    f = s.evaluate(x, grad, hess);
  }
  if (!out.converged && grad.norm() < kGradientTolerance) out.converged = true;
  out.x = x;
  out.f = f;
  return out;
}

// Maximum-weight spanning tree edges as (parent, child, pair index), in the
// order the children are reached from camera 0.
std::vector<std::tuple<int, int, std::size_t>> spanning_tree(std::span<const PairEstimate> pairs,
                                                             int n) {
  std::vector<bool> in_tree(n, false);
  in_tree[0] = true;
  std::vector<std::tuple<int, int, std::size_t>> edges;
  for (int added = 1; added < n; ++added) {
    double best_w = -std::numeric_limits<double>::infinity();
    std::tuple<int, int, std::size_t> best{-1, -1, 0};
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const PairEstimate& e = pairs[k];
      if (in_tree[e.i] == in_tree[e.j]) continue;
      if (e.weight > best_w) {
        best_w = e.weight;
        best = in_tree[e.i] ? std::tuple{e.i, e.j, k} : std::tuple{e.j, e.i, k};
      }
    }
    in_tree[std::get<1>(best)] = true;
    edges.push_back(best);
  }
  return edges;
}

// Signed agreement: zero when every pair has e_ij,w = -e_ji,w.
double signed_objective(const std::vector<double>& thetas, std::span<const PairEstimate> pairs) {
  double f = 0.0;
  for (const PairEstimate& e : pairs) f += e.weight * (1.0 + pair_dot(e, thetas[e.i], thetas[e.j]));
  return f;
}

void fix_branches(std::vector<double>& thetas, std::span<const PairEstimate> pairs) {
  const int n = int(thetas.size());
  for (const auto& [parent, child, k] : spanning_tree(pairs, n)) {
    const PairEstimate& e = pairs[k];
    auto dot_with = [&](double theta_child) {
      std::vector<double> t = thetas;
      t[child] = theta_child;
      return pair_dot(e, t[e.i], t[e.j]);
    };
    if (dot_with(thetas[child] + kPi) < dot_with(thetas[child])) thetas[child] += kPi;
  }
  for (int pass = 0; pass < n; ++pass) {
    bool changed = false;
    for (int c = 1; c < n; ++c) {
      std::vector<double> flipped = thetas;
      flipped[c] += kPi;
      if (signed_objective(flipped, pairs) < signed_objective(thetas, pairs) - 1e-12) {
        thetas = std::move(flipped);
        changed = true;
      }
    }
    if (!changed) break;
  }
}

std::vector<double> tree_initialization(std::span<const PairEstimate> pairs, int n) {
  std::vector<double> thetas(n, 0.0);
  for (const auto& [parent, child, k] : spanning_tree(pairs, n)) {
    const PairEstimate& e = pairs[k];
    const double a_ij = std::atan2(e.e_ij.y(), e.e_ij.x());
    const double a_ji = std::atan2(e.e_ji.y(), e.e_ji.x());
    // theta_j = theta_i + a_ji - a_ij + pi makes the world epipoles opposite.
    if (child == e.j) {
      thetas[child] = thetas[parent] + a_ji - a_ij + kPi;
    } else {
      thetas[child] = thetas[parent] - (a_ji - a_ij + kPi);
    }
  }
  return thetas;
}

}  // namespace

Mat3 yaw_matrix(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat3 R;
  R << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return R;
}

CameraPose PlanarRig::pose(int camera) const {
  return CameraPose{yaw_matrix(thetas.at(camera)), centers.at(camera)};
}

std::vector<CameraPose> PlanarRig::poses() const {
  std::vector<CameraPose> out;
  for (int k = 0; k < size(); ++k) out.push_back(pose(k));
  return out;
}

double rotation_objective(std::span<const double> thetas, std::span<const PairEstimate> pairs) {
  double f = 0.0;
  for (const PairEstimate& e : pairs) f += e.weight * pair_term_value(e, thetas[e.i], thetas[e.j]);
  return f;
}

RotationEstimate estimate_rotations(std::span<const PairEstimate> pairs, int n_cameras,
                                    std::uint64_t seed) {
  validate_pairs(pairs, n_cameras);
  const int m = n_cameras - 1;
  const Surrogate surrogate{pairs, n_cameras};

  std::vector<Eigen::VectorXd> starts;
  {
    const std::vector<double> tree = tree_initialization(pairs, n_cameras);
    starts.emplace_back(Eigen::Map<const Eigen::VectorXd>(tree.data() + 1, m));
  }
  if (n_cameras <= 3) {
    int total = 1;
    for (int k = 0; k < m; ++k) total *= kStartsPerAngle;
    for (int code = 0; code < total; ++code) {
      Eigen::VectorXd x(m);
      int c = code;
      for (int k = 0; k < m; ++k) {
        x[k] = kTwoPi * double(c % kStartsPerAngle) / kStartsPerAngle;
        c /= kStartsPerAngle;
      }
      starts.push_back(x);
    }
  } else {
    const int restarts = kStartsPerAngle * m;
    for (int r = 0; r < restarts; ++r) {
      std::mt19937_64 gen(stream_seed(seed, std::uint64_t(r)));
      Eigen::VectorXd x(m);
      for (int k = 0; k < m; ++k) x[k] = kTwoPi * uniform_unit(gen);
      starts.push_back(x);
    }
  }

  NewtonResult best;
  best.f = std::numeric_limits<double>::infinity();
  int total_iterations = 0;
  for (const Eigen::VectorXd& x0 : starts) {
    NewtonResult r = damped_newton(surrogate, x0);
    total_iterations += r.iterations;
    if (r.f < best.f) best = std::move(r);
  }

  std::vector<double> thetas(n_cameras, 0.0);
  for (int k = 0; k < m; ++k) thetas[k + 1] = best.x[k];
  fix_branches(thetas, pairs);

  // Polish after the branch choice (non-horizontal epipole components make
  // the surrogate not exactly pi-periodic).
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(thetas.data() + 1, m);
  const NewtonResult polished = damped_newton(surrogate, x);
  total_iterations += polished.iterations;

  RotationEstimate out;
  out.thetas.assign(n_cameras, 0.0);
  for (int k = 0; k < m; ++k) out.thetas[k + 1] = wrap_pi(polished.x[k]);
  out.objective = rotation_objective(out.thetas, pairs);
  out.iterations = total_iterations;
  out.converged = polished.converged;
  return out;
}

std::map<std::pair<int, int>, Vec3> world_directions(std::span<const double> thetas,
                                                     std::span<const PairEstimate> pairs) {
  std::map<std::pair<int, int>, Vec3> dirs;
  for (const PairEstimate& e : pairs) {
    const Vec3 from_i = yaw_matrix(thetas[e.i]).transpose() * e.e_ij.vec();
    const Vec3 from_j = -(yaw_matrix(thetas[e.j]).transpose() * e.e_ji.vec());
    Vec3 d = from_i + from_j;
    d.z() = 0.0;
    if (d.norm() < 1e-12) continue;
    d.normalize();
    dirs[{e.i, e.j}] = d;
    dirs[{e.j, e.i}] = -d;
  }
  return dirs;
}

std::vector<Vec3> estimate_positions(std::span<const double> thetas,
                                     std::span<const PairEstimate> pairs,
                                     std::pair<int, int> baseline) {
  const int n = int(thetas.size());
  validate_pairs(pairs, n);
  const auto [a, b] = baseline;
  if (a < 0 || b < 0 || a >= n || b >= n || a == b) {
    throw Error(ErrorCategory::InvalidArgument, "invalid baseline cameras");
  }
  const auto dirs = world_directions(thetas, pairs);
  if (!dirs.contains({a, b})) {
    throw Error(ErrorCategory::DisconnectedGraph, "baseline cameras share no pair estimate");
  }
  std::map<std::pair<int, int>, double> weight;
  for (const PairEstimate& e : pairs) {
    weight[{e.i, e.j}] += e.weight;
    weight[{e.j, e.i}] += e.weight;
  }

  std::vector<Vec3> centers(n, Vec3::Zero());
  std::vector<bool> placed(n, false);
  centers[a] = Vec3::Zero();
  centers[b] = dirs.at({a, b});
  placed[a] = placed[b] = true;

  int remaining = n - 2;
  while (remaining > 0) {
    bool progress = false;
    for (int k = 0; k < n; ++k) {
      if (placed[k]) continue;
      std::vector<int> anchors;
      for (int p = 0; p < n; ++p) {
        if (placed[p] && dirs.contains({p, k})) anchors.push_back(p);
      }
      if (anchors.size() < 2) continue;
      std::stable_sort(anchors.begin(), anchors.end(), [&](int x, int y) {
        const bool bx = x == a || x == b;
        const bool by = y == a || y == b;
        if (bx != by) return bx;
        return weight[{x, k}] > weight[{y, k}];
      });
      bool done = false;
      for (std::size_t u = 0; u < anchors.size() && !done; ++u) {
        for (std::size_t v = u + 1; v < anchors.size() && !done; ++v) {
          const Vec3& du = dirs.at({anchors[u], k});
          const Vec3& dv = dirs.at({anchors[v], k});
          if (du.cross(dv).norm() < 1e-6) continue;
          Vec3 c = triangulate_rays(centers[anchors[u]], du, centers[anchors[v]], dv).P;
          c.z() = 0.0;
          centers[k] = c;
          done = true;
        }
      }
      if (!done) {
        throw Error(ErrorCategory::CollinearCamera,
                    "camera " + std::to_string(k) + " lies on the line through its anchors");
      }
      placed[k] = true;
      --remaining;
      progress = true;
    }
    if (!progress) {
      throw Error(ErrorCategory::DisconnectedGraph,
                  "some cameras share pair estimates with fewer than two placed cameras");
    }
  }
  return centers;
}

double position_objective(std::span<const Vec3> centers,
                          const std::map<std::pair<int, int>, Vec3>& directions,
                          std::span<const PairEstimate> pairs) {
  double f = 0.0;
  for (const PairEstimate& e : pairs) {
    const auto it = directions.find({e.i, e.j});
    if (it == directions.end()) continue;
    const Vec3 delta = centers[e.j] - centers[e.i];
    const double len = delta.norm();
    if (len < 1e-15) {
      f += e.weight;
      continue;
    }
    f += e.weight * sine_squared(delta / len, it->second);
  }
  return f;
}

RefineResult refine_positions(std::span<const Vec3> centers, std::span<const double> thetas,
                              std::span<const PairEstimate> pairs, const RefineParams& params,
                              std::pair<int, int> baseline) {
  const int n = int(centers.size());
  const auto dirs = world_directions(thetas, pairs);
  std::vector<int> free_cams;
  for (int k = 0; k < n; ++k) {
    if (k != baseline.first && k != baseline.second) free_cams.push_back(k);
  }
  const int m = int(free_cams.size());

  RefineResult out;
  out.centers.assign(centers.begin(), centers.end());
  out.initial_objective = position_objective(out.centers, dirs, pairs);
  out.objective = out.initial_objective;
  if (m == 0) return out;

  std::vector<int> slot(n, -1);
  for (int k = 0; k < m; ++k) slot[free_cams[k]] = k;

  auto unpack = [&](const Eigen::VectorXd& x) {
    std::vector<Vec3> c = out.centers;
    for (int k = 0; k < m; ++k) c[free_cams[k]] = Vec3(x[2 * k], x[2 * k + 1], 0.0);
    return c;
  };
  // Residual per pair is sqrt(w) (u x d)_z, whose square is the pair's term.
  // Steps follow the damped Gauss-Newton direction, a preconditioned descent
  // direction; plain gradient steps crawl on this badly scaled objective.
  auto linearize = [&](const std::vector<Vec3>& c, Eigen::VectorXd& grad, Eigen::MatrixXd& jtj) {
    grad.setZero(2 * m);
    jtj.setZero(2 * m, 2 * m);
    for (const PairEstimate& e : pairs) {
      const auto it = dirs.find({e.i, e.j});
      if (it == dirs.end()) continue;
      const Vec3 delta = c[e.j] - c[e.i];
      const double len = delta.norm();
      if (len < 1e-15) continue;
      const Vec2 u = delta.head<2>() / len;
      const Vec2 d = it->second.head<2>();
      const double sw = std::sqrt(e.weight);
      const double r = sw * (u.x() * d.y() - u.y() * d.x());
      const Vec2 perp(d.y(), -d.x());
      const Vec2 J = sw * (perp - u * u.dot(perp)) / len;  // d r / d C_j
      const int sj = slot[e.j];
      const int si = slot[e.i];
      if (sj >= 0) grad.segment<2>(2 * sj) += 2.0 * r * J;
      if (si >= 0) grad.segment<2>(2 * si) -= 2.0 * r * J;
      const Eigen::Matrix2d JJ = J * J.transpose();
      if (sj >= 0) jtj.block<2, 2>(2 * sj, 2 * sj) += JJ;
      if (si >= 0) jtj.block<2, 2>(2 * si, 2 * si) += JJ;
      if (sj >= 0 && si >= 0) {
        jtj.block<2, 2>(2 * sj, 2 * si) -= JJ;
        jtj.block<2, 2>(2 * si, 2 * sj) -= JJ;
      }
    }
  };

  Eigen::VectorXd x(2 * m);
  for (int k = 0; k < m; ++k) x.segment<2>(2 * k) = out.centers[free_cams[k]].head<2>();
  double f = out.objective;
  Eigen::VectorXd g;
  Eigen::MatrixXd jtj;
  linearize(out.centers, g, jtj);
  double mu = 1e-6;

  for (int it = 0; it < params.max_steps; ++it) {
    if (g.norm() < params.gradient_tolerance) break;
    bool accepted = false;
    for (int bt = 0; bt < 60 && !accepted; ++bt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += mu * (1.0 + jtj.diagonal().maxCoeff());
      const Eigen::VectorXd step = damped.ldlt().solve(-0.5 * g);
      if (!step.allFinite() || step.dot(g) >= 0.0) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd candidate = x + step;
      const double fc = position_objective(unpack(candidate), dirs, pairs);
      if (fc <= f + 1e-4 * step.dot(g)) {
        x = candidate;
        f = fc;
        accepted = true;
        mu = std::max(mu * 0.1, 1e-12);
      } else {
        mu *= 10.0;
      }
    }
    if (!accepted) break;
    out.steps = it + 1;
    out.history.push_back(f);
    linearize(unpack(x), g, jtj);
  }
  out.centers = unpack(x);
  out.objective = f;
  return out;
}

MultiviewPoint triangulate_multiview(std::span<const RayObservation> observations,
                                     std::span<const CameraPose> poses) {
  if (observations.size() < 2) {
    throw Error(ErrorCategory::DegenerateTrack, "a track needs at least two observations");
  }
  std::vector<Vec3> dirs;
  std::vector<Vec3> origins;
  for (const RayObservation& o : observations) {
    if (o.camera < 0 || o.camera >= int(poses.size())) {
      throw Error(ErrorCategory::InvalidArgument, "observation references an unknown camera");
    }
    dirs.push_back(poses[o.camera].R.transpose() * o.bearing.vec());
    origins.push_back(poses[o.camera].C);
  }
  double spread = 0.0;
  for (const Vec3& d : dirs) spread = std::max(spread, d.cross(dirs[0]).norm());
  if (spread <= 1e-9) throw Error(ErrorCategory::DegenerateTrack, "all rays are parallel");

  Mat3 A = Mat3::Zero();
  Vec3 rhs = Vec3::Zero();
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const Mat3 proj = Mat3::Identity() - dirs[k] * dirs[k].transpose();
    A += proj;
    rhs += proj * origins[k];
  }
  MultiviewPoint out;
  out.P = A.ldlt().solve(rhs);
  double sq = 0.0;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const double r = dirs[k].dot(out.P - origins[k]);
    out.ranges.push_back(r);
    if (r < 0.0) out.accepted = false;
    sq += (origins[k] + r * dirs[k] - out.P).squaredNorm();
  }
  out.rms_residual = std::sqrt(sq / double(dirs.size()));
  return out;
}

MultiviewPoint triangulate_track(const Track& track, std::span<const CameraPose> poses,
                                 std::span<const ImageSize> sizes) {
  std::vector<RayObservation> obs;
  for (const auto& [camera, pixel] : track.observations) {
    if (camera < 0 || camera >= int(sizes.size())) {
      throw Error(ErrorCategory::InvalidArgument, "track references an unknown camera");
    }
    obs.push_back({camera, pixel_to_bearing(pixel, sizes[camera])});
  }
  return triangulate_multiview(obs, poses);
}

}  // namespace spheresfm
