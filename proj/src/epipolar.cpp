#include "spheresfm/epipolar.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <Eigen/SVD>

#include "spheresfm/error.hpp"
#include "spheresfm/rng.hpp"

namespace spheresfm {

namespace {

constexpr int kMinimalSample = 8;

Mat3 canonical_sign(const Mat3& m) {
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  m.cwiseAbs().maxCoeff(&r, &c);
  return m(r, c) < 0.0 ? Mat3(-m) : m;
}

Vec3 least_aligned_axis(const Vec3& v) {
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(v[i]) < std::abs(v[best])) best = i;
  }
  return Vec3::Unit(best);
}

FundamentalMatrix fit_linear(std::span<const BearingPair> pairs) {
  const Eigen::Index rows = std::max<Eigen::Index>(Eigen::Index(pairs.size()), 9);
  Eigen::Matrix<double, Eigen::Dynamic, 9> A = Eigen::Matrix<double, Eigen::Dynamic, 9>::Zero(rows, 9);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Vec3& z1 = pairs[k].z1;
    const Vec3& z2 = pairs[k].z2;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) A(Eigen::Index(k), 3 * i + j) = z1[i] * z2[j];
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv[7] >= 1e-10 * sv[0])) {
    throw Error(ErrorCategory::DegenerateConfiguration,
                "correspondences do not determine a unique fundamental matrix");
  }
  const Eigen::Matrix<double, 9, 1> f = svd.matrixV().col(8);
  Mat3 F;
  F << f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8];
  return FundamentalMatrix::from_matrix(F);
}

int count_inliers(std::span<const BearingPair> pairs, const FundamentalMatrix& F, double threshold,
                  std::vector<bool>* mask) {
  int count = 0;
  if (mask) mask->assign(pairs.size(), false);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (epipolar_residual(pairs[i], F) < threshold) {
      ++count;
      if (mask) (*mask)[i] = true;
    }
  }
  return count;
}

// Eight distinct indices drawn from an iteration-indexed stream, so that the
// sample for iteration k does not depend on scheduling.
std::array<std::size_t, kMinimalSample> draw_sample(std::uint64_t seed, int iteration,
                                                     std::size_t n) {
  std::mt19937_64 gen(stream_seed(seed, std::uint64_t(iteration)));
  std::array<std::size_t, kMinimalSample> idx{};
  for (int k = 0; k < kMinimalSample; ++k) {
    bool fresh = false;
    while (!fresh) {
      idx[k] = uniform_index(gen, n);
      fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) == idx.begin() + k;
    }
  }
  return idx;
}

RansacResult ransac_impl(std::span<const BearingPair> pairs, const RansacParams& params,
                         bool parallel) {
  if (pairs.size() < kMinimalSample) {
    throw Error(ErrorCategory::InsufficientPairs,
                "RANSAC needs at least 8 pairs, got " + std::to_string(pairs.size()));
  }
  if (!(params.threshold > 0.0) || params.max_iterations < 1) {
    throw Error(ErrorCategory::InvalidArgument, "invalid RANSAC parameters");
  }
  const int iterations = params.max_iterations;
  std::vector<int> counts(iterations, -1);
  std::vector<Mat3> models(iterations, Mat3::Zero());

#pragma omp parallel for schedule(dynamic, 32) if (parallel)
  for (int it = 0; it < iterations; ++it) {
    const auto idx = draw_sample(params.seed, it, pairs.size());
    std::array<BearingPair, kMinimalSample> sample;
    for (int k = 0; k < kMinimalSample; ++k) sample[k] = pairs[idx[k]];
    try {
      const FundamentalMatrix F = fit_linear(sample);
      counts[it] = count_inliers(pairs, F, params.threshold, nullptr);
      models[it] = F.matrix();
    } catch (const Error&) {
      counts[it] = -1;
    }
  }

  const auto best_it = std::max_element(counts.begin(), counts.end());
  const int best_count = *best_it;
  if (best_count < params.min_inliers) {
    throw Error(ErrorCategory::NoConsensus,
                "best model explains " + std::to_string(std::max(best_count, 0)) + " pairs, need " +
                    std::to_string(params.min_inliers));
  }
  RansacResult result;
  result.F = FundamentalMatrix::from_raw(models[std::size_t(best_it - counts.begin())]);
  result.inlier_count = count_inliers(pairs, result.F, params.threshold, &result.inliers);

  std::vector<BearingPair> support;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (result.inliers[i]) support.push_back(pairs[i]);
  }
  if (support.size() >= kMinimalSample) {
    try {
      const FundamentalMatrix refit = fit_linear(support);
      std::vector<bool> mask;
      const int refit_count = count_inliers(pairs, refit, params.threshold, &mask);
      if (refit_count >= result.inlier_count) {
        result.F = refit;
        result.inliers = std::move(mask);
        result.inlier_count = refit_count;
      }
    } catch (const Error&) {
      // keep the sampled model
    }
  }
  return result;
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

FundamentalMatrix FundamentalMatrix::from_matrix(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0)) throw Error(ErrorCategory::RankDeficient, "zero fundamental matrix");
  sv[2] = 0.0;
  Mat3 r2 = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
  r2 /= r2.norm();
  return FundamentalMatrix(canonical_sign(r2));
}

FundamentalMatrix FundamentalMatrix::from_raw(const Mat3& m) {
  const double n = m.norm();
  return FundamentalMatrix(n > 0.0 ? Mat3(m / n) : m);
}

FundamentalMatrix fundamental_from_pose(const Mat3& R, const Vec3& T) {
  return FundamentalMatrix::from_matrix(skew(T) * R.transpose());
}

double epipolar_residual(const BearingPair& pair, const FundamentalMatrix& F) {
  return std::abs(pair.z1.vec().dot(F.matrix() * pair.z2.vec()));
}

FundamentalMatrix estimate_F_linear(std::span<const BearingPair> pairs) {
  if (pairs.size() < kMinimalSample) {
    throw Error(ErrorCategory::InsufficientPairs,
                "eight-point fit needs at least 8 pairs, got " + std::to_string(pairs.size()));
  }
  return fit_linear(pairs);
}

RansacResult estimate_F_ransac(std::span<const BearingPair> pairs, const RansacParams& params) {
  return ransac_impl(pairs, params, true);
}

RansacResult estimate_F_ransac_serial(std::span<const BearingPair> pairs,
                                      const RansacParams& params) {
  return ransac_impl(pairs, params, false);
}

EpipolePair epipoles_from_F(const FundamentalMatrix& F) {
  Eigen::JacobiSVD<Mat3> svd(F.matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()[1] < 1e-10) {
    throw Error(ErrorCategory::RankDeficient, "fundamental matrix has rank < 2");
  }
  EpipolePair ep;
  ep.e1 = Bearing::normalize(svd.matrixU().col(2));
  ep.e2 = Bearing::normalize(svd.matrixV().col(2));
  ep.sign_resolved = false;
  return ep;
}

Mat3 rotation_from_epipoles(const Bearing& e1, const Bearing& e2) {
  const Vec3 a = -e1.vec();
  const Vec3 v = a.cross(e2.vec());
  const double s = v.norm();
  const double c = a.dot(e2.vec());
  if (s < 1e-9) {
    if (c > 0.0) return Mat3::Identity();
    const Vec3 axis = e1.vec().cross(least_aligned_axis(e1.vec())).normalized();
    return 2.0 * axis * axis.transpose() - Mat3::Identity();
  }
  const Mat3 K = skew(v);
  return Mat3::Identity() + K + K * K * ((1.0 - c) / (s * s));
}

TwoViewTriangulation triangulate_rays(const Vec3& o1, const Vec3& d1, const Vec3& o2,
                                      const Vec3& d2) {
  if (d1.cross(d2).norm() <= 1e-9) {
    throw Error(ErrorCategory::ParallelRays, "rays are parallel");
  }
  // Normal equations of min |a d1 - b d2 - (o2 - o1)| in closed form.
  const Vec3 t = o2 - o1;
  const double d11 = d1.dot(d1);
  const double d22 = d2.dot(d2);
  const double d12 = d1.dot(d2);
  const double r1 = d1.dot(t);
  const double r2 = -d2.dot(t);
  const double det = d11 * d22 - d12 * d12;
  TwoViewTriangulation out;
  out.a = (d22 * r1 + d12 * r2) / det;
  out.b = (d12 * r1 + d11 * r2) / det;
  const Vec3 p1 = o1 + out.a * d1;
  const Vec3 p2 = o2 + out.b * d2;
  out.P = 0.5 * (p1 + p2);
  out.gap = (p1 - p2).norm();
  return out;
}

TwoViewTriangulation triangulate_two_view(const Bearing& z1, const Bearing& z2, const Mat3& R,
                                          const Bearing& e1) {
  return triangulate_rays(Vec3::Zero(), z1.vec(), e1.vec(), R.transpose() * z2.vec());
}

SignResolution resolve_signs(const Bearing& e1, const Bearing& e2,
                             std::span<const BearingPair> samples) {
  if (samples.empty()) {
    throw Error(ErrorCategory::InsufficientPairs, "sign resolution needs at least one pair");
  }
  std::array<SignResolution, 4> candidates;
  int k = 0;
  for (const double s1 : {1.0, -1.0}) {
    for (const double s2 : {1.0, -1.0}) {
      SignResolution& c = candidates[k++];
      c.e1 = Bearing::from_unit(s1 * e1.vec());
      c.e2 = Bearing::from_unit(s2 * e2.vec());
      c.R = rotation_from_epipoles(c.e1, c.e2);
      double gap_sum = 0.0;
      int triangulated = 0;
      for (const BearingPair& p : samples) {
        try {
          const TwoViewTriangulation t = triangulate_two_view(p.z1, p.z2, c.R, c.e1);
          if (t.a > 0.0 && t.b > 0.0) ++c.in_front;
          gap_sum += t.gap;
          ++triangulated;
        } catch (const Error&) {
          // a pair along the baseline carries no signal
        }
      }
      c.mean_gap = triangulated > 0 ? gap_sum / triangulated
                                    : std::numeric_limits<double>::infinity();
    }
  }
  auto better = [](const SignResolution& a, const SignResolution& b) {
    if (a.in_front != b.in_front) return a.in_front > b.in_front;
    return a.mean_gap < b.mean_gap;
  };
  std::stable_sort(candidates.begin(), candidates.end(), better);
  const SignResolution& best = candidates[0];
  const SignResolution& runner = candidates[1];
  const bool gap_tie = best.mean_gap == runner.mean_gap ||
                       std::abs(best.mean_gap - runner.mean_gap) <=
                           1e-12 * std::max(1.0, std::abs(best.mean_gap));
  if (best.in_front == runner.in_front && gap_tie) {
    throw Error(ErrorCategory::AmbiguousCheirality,
                "sample pairs do not distinguish the epipole signs");
  }
  return best;
}

std::vector<std::size_t> filter_indices_by_F(std::span<const BearingPair> pairs,
                                             const FundamentalMatrix& F, double epsilon) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double r = epipolar_residual(pairs[i], F);
    if (r < epsilon || r == 0.0) kept.push_back(i);
  }
  return kept;
}

std::vector<BearingPair> filter_matches_by_F(std::span<const BearingPair> pairs,
                                             const FundamentalMatrix& F, double epsilon) {
  std::vector<BearingPair> kept;
  for (const std::size_t i : filter_indices_by_F(pairs, F, epsilon)) kept.push_back(pairs[i]);
  return kept;
}

std::vector<std::vector<PixelCoord>> epipolar_curve(const FundamentalMatrix& F, const Bearing& z1,
                                                    const ImageSize& size, int n_samples) {
  if (n_samples < 2) throw Error(ErrorCategory::InvalidArgument, "need at least 2 samples");
  const Vec3 normal = F.matrix().transpose() * z1.vec();
  if (normal.norm() < 1e-12) {
    throw Error(ErrorCategory::DegenerateCurve, "the clicked point is the epipole");
  }
  const Vec3 n = normal.normalized();
  const Vec3 u = n.cross(least_aligned_axis(n)).normalized();
  const Vec3 w = n.cross(u);

  std::vector<std::vector<PixelCoord>> segments(1);
  PixelCoord prev{};
  for (int k = 0; k < n_samples; ++k) {
    const double t = kTwoPi * double(k) / double(n_samples - 1);
    const Vec3 q = std::cos(t) * u + std::sin(t) * w;
    const PixelCoord p = bearing_to_pixel(Bearing::from_unit(q), size);
    if (k > 0 && std::abs(p.x - prev.x) > 0.5 * size.width) segments.emplace_back();
    segments.back().push_back(p);
    prev = p;
  }
  return segments;
}

TwoViewSolution solve_pose(const FundamentalMatrix& F, std::span<const BearingPair> samples) {
  const EpipolePair ep = epipoles_from_F(F);
  const SignResolution s = resolve_signs(ep.e1, ep.e2, samples);
  TwoViewSolution sol;
  sol.F = F;
  sol.e1 = s.e1;
  sol.e2 = s.e2;
  sol.R = s.R;
  sol.inliers.assign(samples.size(), true);
  return sol;
}

}  // namespace spheresfm
