#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "partdisent/geometry.hpp"
#include "partdisent/partcore.hpp"
#include "partdisent/rng.hpp"

using namespace partdisent;

namespace {

ActivationMaps random_maps(int64_t b, int64_t k, int64_t n) {
    torch::manual_seed(0);
    return {torch::rand({b, k, n, n}) + 1e-3};
}

void BM_ComputeMoments(benchmark::State& st) {
    const int64_t n = st.range(0);
    auto maps = random_maps(8, 16, n);
    auto grid = make_identity_grid(n, n);
    for (auto _ : st) benchmark::DoNotOptimize(compute_moments(maps, grid).cov);
}
BENCHMARK(BM_ComputeMoments)->Arg(32)->Arg(64);

void BM_RenderApprox(benchmark::State& st) {
    const int64_t n = st.range(0);
    auto grid = make_identity_grid(n, n);
    auto mom = decoder_moments(compute_moments(random_maps(8, 16, n), grid), CovarianceMode::Full, 0.02);
    for (auto _ : st) benchmark::DoNotOptimize(render_approx_maps(mom, grid).values);
}
BENCHMARK(BM_RenderApprox)->Arg(32)->Arg(64);

void BM_PoolProject(benchmark::State& st) {
    const int64_t n = 64;
    auto maps = random_maps(8, 16, n);
    LocalizedFeatures f{torch::rand({8, 64, n, n})};
    for (auto _ : st) {
        auto a = pool_appearance(f, maps);
        benchmark::DoNotOptimize(project_appearance(a, maps).values);
    }
}
BENCHMARK(BM_PoolProject);

void BM_SampleTps(benchmark::State& st) {
    SeededRng rng(1);
    TpsSamplingConfig cfg;
    for (auto _ : st) benchmark::DoNotOptimize(sample_tps(cfg, rng).affine);
}
BENCHMARK(BM_SampleTps);

void BM_WarpImage(benchmark::State& st) {
    const int64_t n = st.range(0);
    SeededRng rng(2);
    auto t = sample_tps({}, rng);
    auto grid = make_identity_grid(n, n);
    auto img = torch::rand({3, n, n});
    for (auto _ : st) benchmark::DoNotOptimize(warp_image(img, apply_transform(t, grid)));
}
BENCHMARK(BM_WarpImage)->Arg(64)->Arg(128);

}  // namespace
