// Serial references against the OpenMP kernels. The thread-count argument
// applies to the parallel variants only.
#include <omp.h>

#include <random>

#include <benchmark/benchmark.h>

#include "extend3d/decode.hpp"
#include "extend3d/patchwork.hpp"
#include "extend3d/reference.hpp"
#include "extend3d/ssim.hpp"

using namespace extend3d;

namespace {

// Default scene geometry: a = b = 2, N = 8 (SS) and M = 32 (SLat), d = 4.
const PatchGrid kSsGrid(2, 2, 8, 4);
const PatchGrid kSlatGrid(2, 2, 32, 4);

std::vector<DenseLatent> random_patches(const PatchGrid& grid, int channels) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-1.f, 1.f);
    std::vector<DenseLatent> out;
    for (std::size_t w = 0; w < grid.size(); ++w) {
        DenseLatent p({grid.K(), grid.K(), grid.K()}, channels);
        for (auto& v : p.values()) v = u(rng);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<SdfGrid> random_sdfs(const PatchGrid& grid) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<SdfGrid> out;
    for (std::size_t w = 0; w < grid.size(); ++w) {
        SdfGrid g({grid.K(), grid.K(), grid.K()}, 0.0);
        for (auto& v : g.values) v = u(rng);
        out.push_back(std::move(g));
    }
    return out;
}

Image random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w);
    for (auto& v : img.rgb) v = u(rng);
    return img;
}

void BM_merge_vectors_serial(benchmark::State& state) {
    const auto patches = random_patches(kSlatGrid, 8);
    for (auto _ : state) benchmark::DoNotOptimize(reference::merge_vectors(patches, kSlatGrid));
}

void BM_merge_vectors_parallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto patches = random_patches(kSlatGrid, 8);
    for (auto _ : state) benchmark::DoNotOptimize(merge_vectors(patches, kSlatGrid));
}

void BM_ssim_grad_serial(benchmark::State& state) {
    const Image a = random_image(64, 64, 3), b = random_image(64, 64, 4);
    std::vector<double> g(a.rgb.size());
    for (auto _ : state) benchmark::DoNotOptimize(reference::ssim(a, b, g));
}

void BM_ssim_grad_parallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const Image a = random_image(64, 64, 3), b = random_image(64, 64, 4);
    std::vector<double> g(a.rgb.size());
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b, g));
}

void BM_merge_sdf_serial(benchmark::State& state) {
    const auto patches = random_sdfs(kSlatGrid);
    for (auto _ : state) benchmark::DoNotOptimize(reference::merge_sdf_patches(patches, kSlatGrid));
}

void BM_merge_sdf_parallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto patches = random_sdfs(kSlatGrid);
    for (auto _ : state) benchmark::DoNotOptimize(merge_sdf_patches(patches, kSlatGrid));
}

void BM_merge_vectors_ss_parallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto patches = random_patches(kSsGrid, 8);
    for (auto _ : state) benchmark::DoNotOptimize(merge_vectors(patches, kSsGrid));
}

}  // namespace

BENCHMARK(BM_merge_vectors_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_merge_vectors_parallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_merge_vectors_ss_parallel)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ssim_grad_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ssim_grad_parallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_merge_sdf_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_merge_sdf_parallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
