// OpenMP kernels against their serial reference implementations.
// Run with --benchmark_filter to select a kernel; thread count follows
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cmath>
#include <random>

#include "spheresfm/correspondence.hpp"
#include "spheresfm/epipolar.hpp"
#include "spheresfm/rectify.hpp"
#include "spheresfm/synth.hpp"

using namespace spheresfm;

namespace {

struct RoomPair {
  EquirectImage img1;
  EquirectImage img2;
  Bearing e1;
  Mat3 R;
  ImageSize size;
};

const RoomPair& room_pair() {
  static const RoomPair pair = [] {
    const ImageSize size{512, 256};
    const CubeRoom room;
    const CameraPose cam2{Eigen::AngleAxisd(0.4, Vec3::UnitZ()).toRotationMatrix(), Vec3(0.8, 0.5, 0.0)};
    return RoomPair{render_room(room, CameraPose{}, size), render_room(room, cam2, size),
                    Bearing::normalize(cam2.C), cam2.R, size};
  }();
  return pair;
}

const RectifiedPair& rectified() {
  static const RectifiedPair r = [] {
    const RoomPair& p = room_pair();
    return rectify_pair(p.img1, p.img2, p.e1, p.R, p.size);
  }();
  return r;
}

// 200 exact correspondences plus 30% uniform outliers.
std::vector<BearingPair> ransac_input() {
  const PlanarScene s = random_planar_scene(2, 200, 11);
  std::vector<BearingPair> pairs;
  const auto poses = s.rig.poses();
  for (const Vec3& P : s.points) {
    pairs.push_back({Bearing::normalize(poses[0].R * (P - poses[0].C)),
                     Bearing::normalize(poses[1].R * (P - poses[1].C))});
  }
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 86; ++k) {
    pairs.push_back({Bearing::normalize(Vec3(n(gen), n(gen), n(gen))), Bearing::normalize(Vec3(n(gen), n(gen), n(gen)))});
  }
  return pairs;
}

void BM_rectify_parallel(benchmark::State& state) {
  const RoomPair& p = room_pair();
  for (auto _ : state) benchmark::DoNotOptimize(rectify_pair(p.img1, p.img2, p.e1, p.R, p.size));
}

void BM_rectify_serial(benchmark::State& state) {
  const RoomPair& p = room_pair();
  for (auto _ : state) benchmark::DoNotOptimize(rectify_pair_serial(p.img1, p.img2, p.e1, p.R, p.size));
}

void BM_disparity_parallel(benchmark::State& state) {
  const RectifiedPair& r = rectified();
  for (auto _ : state) benchmark::DoNotOptimize(compute_disparity(r));
}

void BM_disparity_single_thread(benchmark::State& state) {
  const RectifiedPair& r = rectified();
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  for (auto _ : state) benchmark::DoNotOptimize(compute_disparity(r));
  omp_set_num_threads(saved);
}

void BM_disparity_reference(benchmark::State& state) {
  const RectifiedPair& r = rectified();
  for (auto _ : state) benchmark::DoNotOptimize(compute_disparity_reference(r));
}

void BM_ransac_parallel(benchmark::State& state) {
  const auto pairs = ransac_input();
  RansacParams params;
  params.seed = 3;
  for (auto _ : state) benchmark::DoNotOptimize(estimate_F_ransac(pairs, params));
}

void BM_ransac_serial(benchmark::State& state) {
  const auto pairs = ransac_input();
  RansacParams params;
  params.seed = 3;
  for (auto _ : state) benchmark::DoNotOptimize(estimate_F_ransac_serial(pairs, params));
}

void BM_cubemap_parallel(benchmark::State& state) {
  const RoomPair& p = room_pair();
  for (auto _ : state) benchmark::DoNotOptimize(equirect_to_cubemap(p.img1, 256));
}

void BM_cubemap_serial(benchmark::State& state) {
  const RoomPair& p = room_pair();
  for (auto _ : state) benchmark::DoNotOptimize(equirect_to_cubemap_serial(p.img1, 256));
}

}  // namespace

BENCHMARK(BM_rectify_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rectify_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_disparity_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_disparity_single_thread)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_disparity_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ransac_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ransac_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_cubemap_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_cubemap_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
