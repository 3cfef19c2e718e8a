#pragma once

// Two-view spherical epipolar geometry.
//
// Camera 1 defines the world frame. Camera 2 sits at T and observes
// z2 = R (P - T) / |P - T|. Corresponding bearings satisfy z1' F z2 = 0 with
// F = [T]x R^-1, so e1 = T / |T| spans the null space of F' and
// e2 = -R T / |T| spans the null space of F.

#include <cstdint>
#include <span>
#include <vector>

#include "spheresfm/sphere_cam.hpp"

namespace spheresfm {

struct BearingPair {
  Bearing z1;
  Bearing z2;
};

// Rank-2, unit Frobenius norm, sign fixed so the largest-magnitude entry is
// positive.
class FundamentalMatrix {
 public:
  FundamentalMatrix() = default;

  // Projects to rank 2, normalizes and canonicalizes the sign. Throws
  // RankDeficient for a (numerically) zero matrix.
  static FundamentalMatrix from_matrix(const Mat3& m);
  // Stores m after Frobenius normalization only; used for matrices loaded
  // from disk and for tests that need a rank-deficient input.
  static FundamentalMatrix from_raw(const Mat3& m);

  const Mat3& matrix() const { return m_; }

 private:
  explicit FundamentalMatrix(const Mat3& m) : m_(m) {}
  Mat3 m_ = Mat3::Zero();
};

// [T]x R^-1 for a pose with camera 2 at T, normalized.
FundamentalMatrix fundamental_from_pose(const Mat3& R, const Vec3& T);

Mat3 skew(const Vec3& v);

struct EpipolePair {
  Bearing e1;
  Bearing e2;
  bool sign_resolved = false;
};

struct RansacParams {
  double threshold = 0.01;
  int max_iterations = 2000;
  std::uint64_t seed = 0;
  int min_inliers = 12;
};

struct RansacResult {
  FundamentalMatrix F;
  std::vector<bool> inliers;
  int inlier_count = 0;
};

struct TwoViewTriangulation {
  Vec3 P;
  double a = 0.0;  // range along z1
  double b = 0.0;  // range along R^-1 z2 from camera 2
  double gap = 0.0;
};

struct SignResolution {
  Bearing e1;
  Bearing e2;
  Mat3 R = Mat3::Identity();
  int in_front = 0;
  double mean_gap = 0.0;
};

struct TwoViewSolution {
  FundamentalMatrix F;
  Bearing e1;
  Bearing e2;
  Mat3 R = Mat3::Identity();
  std::vector<bool> inliers;
};

// |z1' F z2|.
double epipolar_residual(const BearingPair& pair, const FundamentalMatrix& F);

// Eight-point solve on unit bearings. Throws InsufficientPairs (< 8) or
// DegenerateConfiguration (null space of dimension > 1).
FundamentalMatrix estimate_F_linear(std::span<const BearingPair> pairs);

// Seeded RANSAC over eight-point samples; iterations run in parallel and the
// result is identical to estimate_F_ransac_serial. Throws InsufficientPairs
// or NoConsensus.
RansacResult estimate_F_ransac(std::span<const BearingPair> pairs, const RansacParams& params);
RansacResult estimate_F_ransac_serial(std::span<const BearingPair> pairs,
                                      const RansacParams& params);

// Null vectors of F' and F; signs are arbitrary. Throws RankDeficient.
EpipolePair epipoles_from_F(const FundamentalMatrix& F);

// Minimal rotation R with -R e1 = e2.
Mat3 rotation_from_epipoles(const Bearing& e1, const Bearing& e2);

// Chooses among (+-e1, +-e2) by counting samples reconstructed in front of
// both cameras; ties are broken by the smaller mean triangulation gap.
// Throws AmbiguousCheirality when the best two candidates tie on both.
SignResolution resolve_signs(const Bearing& e1, const Bearing& e2,
                             std::span<const BearingPair> samples);

// Closest approach between o1 + a d1 and o2 + b d2; P is the midpoint and gap
// the segment length. Throws ParallelRays when |d1 x d2| <= 1e-9.
TwoViewTriangulation triangulate_rays(const Vec3& o1, const Vec3& d1, const Vec3& o2,
                                      const Vec3& d2);

// Midpoint of the closest approach between a z1 and e1 + b R^-1 z2 (unit
// baseline). Throws ParallelRays when |z1 x R^-1 z2| <= 1e-9.
TwoViewTriangulation triangulate_two_view(const Bearing& z1, const Bearing& z2, const Mat3& R,
                                          const Bearing& e1);

// Pairs with residual strictly below epsilon, in input order. Exact zeros
// are also kept, so epsilon = 0 selects residual-free pairs.
std::vector<BearingPair> filter_matches_by_F(std::span<const BearingPair> pairs,
                                             const FundamentalMatrix& F, double epsilon);
// Same filter, returning indices into pairs.
std::vector<std::size_t> filter_indices_by_F(std::span<const BearingPair> pairs,
                                             const FundamentalMatrix& F, double epsilon);

// Great circle {z2 : z1' F z2 = 0} sampled at n_samples evenly spaced points
// (the first point repeated at the end) in image-2 pixels, split into
// polylines at the longitude seam. Throws DegenerateCurve when z1 is the
// epipole.
std::vector<std::vector<PixelCoord>> epipolar_curve(const FundamentalMatrix& F, const Bearing& z1,
                                                    const ImageSize& size, int n_samples);

// Epipoles, rotation and sign resolution for an already estimated F.
TwoViewSolution solve_pose(const FundamentalMatrix& F, std::span<const BearingPair> samples);

}  // namespace spheresfm
