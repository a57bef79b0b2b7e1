#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "partdisent/config.hpp"
#include "partdisent/data.hpp"
#include "partdisent/trainer.hpp"

using namespace partdisent;

namespace {

RunConfig small_config() {
    auto cfg = preset("sprites");
    cfg.data.sprites.count = 64;
    return cfg;
}

void BM_GenerateSprites(benchmark::State& st) {
    auto cfg = small_config();
    for (auto _ : st) {
        SeededRng rng(3);
        benchmark::DoNotOptimize(generate_sprites(cfg.data.sprites, rng));
    }
}
BENCHMARK(BM_GenerateSprites)->Unit(benchmark::kMillisecond);

void BM_EvaluateLosses(benchmark::State& st) {
    auto cfg = small_config();
    SeededRng rng(cfg.seed);
    auto data = generate_sprites(cfg.data.sprites, rng);
    TrainState state(cfg);
    auto batch = make_batch(cfg, data, 0);
    for (auto _ : st) benchmark::DoNotOptimize(evaluate_losses(state, batch).total);
}
BENCHMARK(BM_EvaluateLosses)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
    auto cfg = small_config();
    SeededRng rng(cfg.seed);
    auto data = generate_sprites(cfg.data.sprites, rng);
    TrainState state(cfg);
    int64_t step = 0;
    for (auto _ : st) {
        st.PauseTiming();
        auto batch = make_batch(cfg, data, step++);
        st.ResumeTiming();
        benchmark::DoNotOptimize(train_step(state, batch).total);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
