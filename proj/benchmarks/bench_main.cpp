#include <benchmark/benchmark.h>

#include "superdec/analysis.hpp"
#include "superdec/blocks.hpp"
#include "superdec/ops.hpp"
#include "superdec/optim.hpp"
#include "superdec/wavelet.hpp"

using namespace superdec;

namespace {

TensorF random_input(const Shape4& s, std::uint64_t seed) {
    Rng rng(seed);
    return TensorF::uniform(s, rng, -1.f, 1.f);
}

void BM_DwtHaar(benchmark::State& state) {
    TensorF x = random_input(Shape4{1, 8, 64, 64}, 1);
    for (auto _ : state) {
        auto bands = dwt_haar(x);
        benchmark::DoNotOptimize(bands.ll.values().data());
    }
}
BENCHMARK(BM_DwtHaar);

void BM_IdwtHaar(benchmark::State& state) {
    auto bands = dwt_haar(random_input(Shape4{1, 8, 64, 64}, 2));
    for (auto _ : state) {
        TensorF img = idwt_haar(bands);
        benchmark::DoNotOptimize(img.values().data());
    }
}
BENCHMARK(BM_IdwtHaar);

void BM_Conv2dForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    TensorF x = random_input(Shape4{8, c, 16, 16}, 3);
    TensorF w = random_input(Shape4{c, c, 3, 3}, 4);
    TensorF b = TensorF::zeros(Shape4{1, c, 1, 1});
    for (auto _ : state) {
        TensorF y = conv2d(x, w, b, 1, 1);
        benchmark::DoNotOptimize(y.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 *
                            conv2d_macs(8, c, c, 16, 16, 3, 3));
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(64);

void BM_SuperBlockForward(benchmark::State& state) {
    ParamStore<float> store(5);
    auto blk = SuperBlock<float>::create(SuperBlockConfig{8, 16, FusionMode::sum_ll, true, false},
                                         "blk", store, 0.1);
    TensorF xe = random_input(Shape4{1, 8, 64, 64}, 6);
    TensorF xd = random_input(Shape4{1, 16, 32, 32}, 7);
    for (auto _ : state) {
        TensorF out = blk.forward(xe, xd);
        benchmark::DoNotOptimize(out.values().data());
    }
}
BENCHMARK(BM_SuperBlockForward);

void BM_TrainStep(benchmark::State& state) {
    ModelSpec spec;
    spec.depth = 2;
    spec.stem_channels = 8;
    spec.decoder = state.range(0) == 0 ? DecoderKind::super : DecoderKind::baseline;
    Model<float> model = Model<float>::build(spec, 8);
    TensorF x = random_input(Shape4{8, 1, 64, 64}, 9);
    TensorF target = TensorF::zeros(x.shape());
    AdamState<float> opt_state;
    const AdamConfig opt_cfg{};
    for (auto _ : state) {
        model.zero_grads();
        TensorF loss = bce_with_logits_mean(model.forward(x), target);
        backward(loss);
        adam_step(model.parameters(), opt_state, opt_cfg);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SpectralNorm(benchmark::State& state) {
    TensorD x0 = TensorD::zeros(Shape4{1, 2, 16, 16});
    PowerIterOptions opts;
    for (auto _ : state) {
        auto est = jacobian_spectral_norm<double>(
            [](const TensorD& t) { return stack_bands(dwt_haar(t)); }, x0, opts);
        benchmark::DoNotOptimize(est.sigma);
    }
}
BENCHMARK(BM_SpectralNorm);

} // namespace

BENCHMARK_MAIN();
