#include "spheresfm/rectify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spheresfm/error.hpp"

namespace spheresfm {

namespace {

constexpr float kNoMatch = -2.0f;

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  double at(int col, int row) const { return v[std::size_t(row) * width + col]; }
};

GrayImage to_gray(const Raster& r) {
  GrayImage g{r.width, r.height, std::vector<double>(r.pixels.size())};
  for (std::size_t k = 0; k < r.pixels.size(); ++k) {
    const Rgb& c = r.pixels[k];
    g.v[k] = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  }
  return g;
}

int wrap_row(int r, int rows) { return ((r % rows) + rows) % rows; }

void rectify_row(const EquirectImage& img1, const EquirectImage& img2, const Mat3& back1,
                 const Mat3& back2, const ImageSize& rect_size, int row, RectifiedPair& out) {
  for (int col = 0; col < out.cols(); ++col) {
    const Vec3 b = rectified_bearing(col + 0.5, row + 0.5, rect_size);
    const PixelCoord p1 = bearing_to_pixel(Bearing::normalize(back1 * b), img1.size());
    const PixelCoord p2 = bearing_to_pixel(Bearing::normalize(back2 * b), img2.size());
    out.rect1.at(col, row) = to_rgb(sample_bilinear(img1, p1));
    out.rect2.at(col, row) = to_rgb(sample_bilinear(img2, p2));
  }
}

RectifiedPair rectify_impl(const EquirectImage& img1, const EquirectImage& img2, const Bearing& e1,
                           const Mat3& R, const ImageSize& rect_size, bool parallel) {
  rect_size.validate();
  const RectificationFrames frames = rectification_rotations(e1, R);
  RectifiedPair out;
  out.rect_size = rect_size;
  out.R_rect1 = frames.R_rect1;
  out.R_rect2 = frames.R_rect2;
  out.rect1 = Raster(rect_size.height, rect_size.width);
  out.rect2 = Raster(rect_size.height, rect_size.width);
  const Mat3 back1 = frames.R_rect1.transpose();
  const Mat3 back2 = frames.R_rect2.transpose();
  const int rows = out.rows();
#pragma omp parallel for schedule(static) if (parallel)
  for (int row = 0; row < rows; ++row) rectify_row(img1, img2, back1, back2, rect_size, row, out);
  return out;
}

// Search geometry shared by both matchers.
struct Layout {
  int rows = 0;
  int cols = 0;
  int half = 0;
  int lo = 0;  // first matchable column
  int hi = 0;  // one past the last matchable column
  int d_min = 0;
  int d_max = 0;
  int n_disp() const { return d_max - d_min + 1; }
};

Layout make_layout(const RectifiedPair& pair, const DisparityParams& params) {
  if (params.window < 1 || params.window % 2 == 0) {
    throw Error(ErrorCategory::InvalidArgument, "window must be a positive odd number");
  }
  Layout L;
  L.rows = pair.rows();
  L.cols = pair.cols();
  L.half = params.window / 2;
  const int margin = int(std::ceil(params.epipole_margin * L.cols));
  L.lo = std::max(L.half, margin);
  L.hi = std::min(L.cols - L.half, L.cols - margin);
  L.d_min = std::max(0, params.d_min);
  L.d_max = params.d_max < 0 ? L.cols / 4 : params.d_max;
  if (L.d_max < L.d_min) throw Error(ErrorCategory::InvalidArgument, "empty disparity range");
  return L;
}

// cost[(c - lo) * n_disp + (d - d_min)] holds the NCC of column c in image 1
// against column c + d in image 2, or kNoMatch.
void select_row(const Layout& L, const DisparityParams& params, const std::vector<float>& cost,
                int row, DisparityMap& out) {
  const int nd = L.n_disp();
  const int span = std::max(0, L.hi - L.lo);
  auto cost_at = [&](int c, int d) { return cost[std::size_t(c - L.lo) * nd + (d - L.d_min)]; };

  std::vector<int> best_left(span, -1);
  std::vector<int> best_right(span, -1);
  std::vector<float> right_score(span, kNoMatch);
  for (int c = L.lo; c < L.hi; ++c) {
    float best = kNoMatch;
    for (int d = L.d_min; d <= L.d_max; ++d) {
      const float v = cost_at(c, d);
      if (v > best) {
        best = v;
        best_left[c - L.lo] = d;
      }
      const int c2 = c + d;
      if (v > kNoMatch && c2 < L.hi && v > right_score[c2 - L.lo]) {
        right_score[c2 - L.lo] = v;
        best_right[c2 - L.lo] = d;
      }
    }
    // Right-to-left ties keep the smaller disparity, matching the left pass.
  }

  for (int c = L.lo; c < L.hi; ++c) {
    const int d = best_left[c - L.lo];
    if (d < 0) continue;
    const float score = cost_at(c, d);
    if (score < params.ncc_floor) continue;
    const int c2 = c + d;
    if (c2 >= L.hi || best_right[c2 - L.lo] < 0) continue;
    if (std::abs(best_right[c2 - L.lo] - d) > params.lr_tolerance) continue;
    double refined = d;
    if (params.subpixel && d > L.d_min && d < L.d_max) {
      const float cm = cost_at(c, d - 1);
      const float cp = cost_at(c, d + 1);
      if (cm > kNoMatch && cp > kNoMatch) {
        const double denom = double(cm) - 2.0 * score + double(cp);
        if (denom < 0.0) refined += std::clamp(0.5 * (double(cm) - double(cp)) / denom, -0.5, 0.5);
      }
    }
    if (c + 0.5 + refined >= L.cols) continue;  // x2 must stay below pi
    const std::size_t idx = std::size_t(row) * L.cols + c;
    out.disparity[idx] = float(refined);
    out.valid[idx] = 1;
  }
}

DisparityMap empty_map(const Layout& L) {
  DisparityMap m;
  m.width = L.cols;
  m.height = L.rows;
  m.disparity.assign(std::size_t(L.rows) * L.cols, 0.0f);
  m.valid.assign(std::size_t(L.rows) * L.cols, 0);
  m.radians_per_pixel = kPi / L.cols;
  return m;
}

struct WindowStats {
  std::vector<double> mean;
  std::vector<double> sdev;
};

// Box mean and standard deviation with rows wrapping; columns within half
// of the border are left at zero.
WindowStats window_stats(const GrayImage& g, int half, bool parallel) {
  WindowStats s;
  s.mean.assign(g.v.size(), 0.0);
  s.sdev.assign(g.v.size(), 0.0);
  const double n = double((2 * half + 1) * (2 * half + 1));
#pragma omp parallel for schedule(static) if (parallel)
  for (int r = 0; r < g.height; ++r) {
    std::vector<double> col_sum(g.width, 0.0);
    std::vector<double> col_sq(g.width, 0.0);
    for (int k = -half; k <= half; ++k) {
      const int rr = wrap_row(r + k, g.height);
      for (int c = 0; c < g.width; ++c) {
        const double v = g.at(c, rr);
        col_sum[c] += v;
        col_sq[c] += v * v;
      }
    }
    for (int c = half; c < g.width - half; ++c) {
      double sum = 0.0;
      double sq = 0.0;
      for (int k = -half; k <= half; ++k) {
        sum += col_sum[c + k];
        sq += col_sq[c + k];
      }
      const double mu = sum / n;
      const std::size_t idx = std::size_t(r) * g.width + c;
      s.mean[idx] = mu;
      s.sdev[idx] = std::sqrt(std::max(0.0, sq / n - mu * mu));
    }
  }
  return s;
}

}  // namespace

RectificationFrames rectification_rotations(const Bearing& e1, const Mat3& R) {
  const Vec3 z = e1.vec();
  if (!(z.norm() > 0.5)) throw Error(ErrorCategory::FrameDegenerate, "epipole is not a unit vector");
  Vec3 ref = Vec3::UnitZ();
  if (z.cross(ref).norm() < 1e-9) ref = Vec3::UnitX();
  const Vec3 x = (ref - ref.dot(z) * z).normalized();
  const Vec3 y = z.cross(x);
  RectificationFrames f;
  f.R_rect1.row(0) = x.transpose();
  f.R_rect1.row(1) = y.transpose();
  f.R_rect1.row(2) = z.transpose();
  f.R_rect2 = f.R_rect1 * R.transpose();
  return f;
}

Vec3 rectified_bearing(double col, double row, const ImageSize& rect_size) {
  const double lat = col * kPi / rect_size.height;
  const double lon = row * kTwoPi / rect_size.width;
  const double s = std::sin(lat);
  return {s * std::cos(lon), s * std::sin(lon), std::cos(lat)};
}

Vec2 rectified_coords(const Vec3& b, const ImageSize& rect_size) {
  const SphericalAngles a = bearing_to_angles(Bearing::normalize(b));
  return {a.phi * rect_size.height / kPi, a.theta * rect_size.width / kTwoPi};
}

RectifiedPair rectify_pair(const EquirectImage& img1, const EquirectImage& img2,
                           const Bearing& e1, const Mat3& R, const ImageSize& rect_size) {
  return rectify_impl(img1, img2, e1, R, rect_size, true);
}

RectifiedPair rectify_pair_serial(const EquirectImage& img1, const EquirectImage& img2,
                                  const Bearing& e1, const Mat3& R, const ImageSize& rect_size) {
  return rectify_impl(img1, img2, e1, R, rect_size, false);
}

RectifiedPair rectify_pair(const EquirectImage& img1, const EquirectImage& img2,
                           const TwoViewSolution& solution, const ImageSize& rect_size) {
  return rectify_impl(img1, img2, solution.e1, solution.R, rect_size, true);
}

std::size_t DisparityMap::valid_count() const {
  return std::size_t(std::count(valid.begin(), valid.end(), std::uint8_t(1)));
}

DisparityMap compute_disparity(const RectifiedPair& pair, const DisparityParams& params) {
  const Layout L = make_layout(pair, params);
  DisparityMap out = empty_map(L);
  if (L.hi <= L.lo) return out;
  const GrayImage g1 = to_gray(pair.rect1);
  const GrayImage g2 = to_gray(pair.rect2);
  const WindowStats s1 = window_stats(g1, L.half, true);
  const WindowStats s2 = window_stats(g2, L.half, true);
  const int nd = L.n_disp();
  const int span = L.hi - L.lo;
  const double n = double(params.window * params.window);

#pragma omp parallel for schedule(dynamic, 4)
  for (int r = 0; r < L.rows; ++r) {
    std::vector<float> cost(std::size_t(span) * nd, kNoMatch);
    std::vector<double> col_prod(L.cols, 0.0);
    for (int d = L.d_min; d <= L.d_max; ++d) {
      const int c_end = L.hi - d;  // c + d < hi
      if (c_end <= L.lo) break;
      const int first = L.lo - L.half;
      const int last = c_end + L.half;  // exclusive
      std::fill(col_prod.begin(), col_prod.end(), 0.0);
      for (int k = -L.half; k <= L.half; ++k) {
        const int rr = wrap_row(r + k, L.rows);
        const double* row1 = &g1.v[std::size_t(rr) * L.cols];
        const double* row2 = &g2.v[std::size_t(rr) * L.cols];
        for (int c = first; c < last; ++c) col_prod[c] += row1[c] * row2[c + d];
      }
      double window = 0.0;
      for (int c = first; c < first + params.window - 1; ++c) window += col_prod[c];
      for (int c = L.lo; c < c_end; ++c) {
        window += col_prod[c + L.half];
        const std::size_t i1 = std::size_t(r) * L.cols + c;
        const std::size_t i2 = i1 + d;
        const double sd1 = s1.sdev[i1];
        const double sd2 = s2.sdev[i2];
        if (sd1 >= params.min_texture && sd2 >= params.min_texture) {
          const double cov = window / n - s1.mean[i1] * s2.mean[i2];
          cost[std::size_t(c - L.lo) * nd + (d - L.d_min)] = float(cov / (sd1 * sd2));
        }
        window -= col_prod[c - L.half];
      }
    }
    select_row(L, params, cost, r, out);
  }
  return out;
}

DisparityMap compute_disparity_reference(const RectifiedPair& pair, const DisparityParams& params) {
  const Layout L = make_layout(pair, params);
  DisparityMap out = empty_map(L);
  if (L.hi <= L.lo) return out;
  const GrayImage g1 = to_gray(pair.rect1);
  const GrayImage g2 = to_gray(pair.rect2);
  const int nd = L.n_disp();
  const double n = double(params.window * params.window);

  auto patch_stats = [&](const GrayImage& g, int c, int r, double& mu, double& sd) {
    double sum = 0.0;
    for (int k = -L.half; k <= L.half; ++k) {
      for (int j = -L.half; j <= L.half; ++j) sum += g.at(c + j, wrap_row(r + k, L.rows));
    }
    mu = sum / n;
    double var = 0.0;
    for (int k = -L.half; k <= L.half; ++k) {
      for (int j = -L.half; j <= L.half; ++j) {
        const double e = g.at(c + j, wrap_row(r + k, L.rows)) - mu;
        var += e * e;
      }
    }
    sd = std::sqrt(var / n);
  };

  for (int r = 0; r < L.rows; ++r) {
    std::vector<float> cost(std::size_t(L.hi - L.lo) * nd, kNoMatch);
    for (int c = L.lo; c < L.hi; ++c) {
      double mu1 = 0.0;
      double sd1 = 0.0;
      patch_stats(g1, c, r, mu1, sd1);
      for (int d = L.d_min; d <= L.d_max && c + d < L.hi; ++d) {
        double mu2 = 0.0;
        double sd2 = 0.0;
        patch_stats(g2, c + d, r, mu2, sd2);
        if (sd1 < params.min_texture || sd2 < params.min_texture) continue;
        double cross = 0.0;
        for (int k = -L.half; k <= L.half; ++k) {
          const int rr = wrap_row(r + k, L.rows);
          for (int j = -L.half; j <= L.half; ++j) {
            cross += (g1.at(c + j, rr) - mu1) * (g2.at(c + d + j, rr) - mu2);
          }
        }
        cost[std::size_t(c - L.lo) * nd + (d - L.d_min)] = float(cross / n / (sd1 * sd2));
      }
    }
    select_row(L, params, cost, r, out);
  }
  return out;
}

RangePair disparity_to_range(double x1, double d, double baseline) {
  if (!(d > 1e-9) || !(x1 + d < kPi)) {
    throw Error(ErrorCategory::DegenerateDisparity, "disparity does not define a finite point");
  }
  if (!(x1 > 0.0 && x1 < kPi)) {
    throw Error(ErrorCategory::InvalidArgument, "latitude outside (0, pi)");
  }
  const double x2 = x1 + d;
  const double s = std::sin(d);
  return {baseline * std::sin(x2) / s, baseline * std::sin(x1) / s};
}

DenseCloud dense_cloud(const DisparityMap& disp, const RectifiedPair& pair, double baseline,
                       const std::optional<CameraPose>& camera_1) {
  if (disp.width != pair.cols() || disp.height != pair.rows()) {
    throw Error(ErrorCategory::InvalidArgument, "disparity map does not match the rectified pair");
  }
  DenseCloud cloud;
  const Mat3 back = pair.R_rect1.transpose();
  for (int r = 0; r < disp.height; ++r) {
    for (int c = 0; c < disp.width; ++c) {
      if (!disp.is_valid(c, r)) continue;
      const double x1 = (c + 0.5) * disp.radians_per_pixel;
      const double d = double(disp.at(c, r)) * disp.radians_per_pixel;
      RangePair rp;
      try {
        rp = disparity_to_range(x1, d, baseline);
      } catch (const Error&) {
        continue;
      }
      Vec3 P = back * (rp.range1 * rectified_bearing(c + 0.5, r + 0.5, pair.rect_size));
      if (camera_1) P = camera_1->R.transpose() * P + camera_1->C;
      if (!P.allFinite()) continue;
      cloud.points.push_back({P, pair.rect1.at(c, r)});
    }
  }
  return cloud;
}

}  // namespace spheresfm
