#include <doctest.h>
#include <cmath>
#include <cstring>

#include "../support/oracles.hpp"
#include "superdec/gradcheck.hpp"
#include "superdec/ops.hpp"

using namespace superdec;

TEST_CASE("conv2d: 1x1 identity kernel over channels is the identity") {
    Rng rng(21);
    TensorF x = TensorF::uniform(Shape4{2, 3, 5, 5}, rng, -1.f, 1.f);
    TensorF w = TensorF::zeros(Shape4{3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) w.values_mut()[c * 3 + c] = 1.f;
    TensorF y = conv2d(x, w, TensorF{});
    CHECK(oracles::max_abs_diff(y.values(), x.values()) == 0.0);
}

TEST_CASE("conv2d: all-ones 4x4 input, all-ones 3x3 kernel, pad 1") {
    TensorF x = TensorF::full(Shape4{1, 1, 4, 4}, 1.f);
    TensorF w = TensorF::full(Shape4{1, 1, 3, 3}, 1.f);
    TensorF y = conv2d(x, w, TensorF{}, 1, 1);
    auto v = y.values();
    CHECK(v[0] == 4.f);   // corner
    CHECK(v[3] == 4.f);
    CHECK(v[5] == 9.f);   // interior
    CHECK(v[10] == 9.f);
    CHECK(v[15] == 4.f);
}

TEST_CASE("conv2d matches the naive reference over strides and paddings") {
    Rng rng(22);
    for (const auto& [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}, {1, 2}, {2, 0}}) {
        const Shape4 is{2, 3, 7, 6};
        const Shape4 ws{4, 3, 3, 3};
        if ((is.h + 2 * pad - ws.h) % stride != 0 || (is.w + 2 * pad - ws.w) % stride != 0)
            continue;
        TensorD x = TensorD::uniform(is, rng, -1.0, 1.0);
        TensorD w = TensorD::uniform(ws, rng, -1.0, 1.0);
        TensorD b = TensorD::uniform(Shape4{1, 4, 1, 1}, rng, -1.0, 1.0);
        TensorD y = conv2d(x, w, b, stride, pad);
        const std::vector<double> xv(x.values().begin(), x.values().end());
        const std::vector<double> wv(w.values().begin(), w.values().end());
        const std::vector<double> bv(b.values().begin(), b.values().end());
        const auto ref = oracles::naive_conv2d(xv, is, wv, ws, bv, stride, pad);
        REQUIRE(ref.size() == static_cast<std::size_t>(y.numel()));
        CHECK(oracles::max_abs_diff<double>(y.values(), ref) <= 1e-12);
    }
}

TEST_CASE("conv2d: weight gradient vs finite differences in f32") {
    Rng rng(23);
    TensorF x = TensorF::uniform(Shape4{2, 3, 6, 6}, rng, -1.f, 1.f);
    TensorF w = TensorF::uniform(Shape4{2, 3, 3, 3}, rng, -0.2f, 0.2f);
    const double err = grad_check<float>(
        [&](const TensorF& t) { return sum_all(conv2d(x, t, TensorF{}, 1, 1)); }, w, 1e-3);
    CHECK(err <= 1e-3);
}

TEST_CASE("conv2d shape errors name the offending dimension") {
    TensorF x = TensorF::zeros(Shape4{1, 3, 4, 4});
    CHECK_THROWS_WITH_AS(conv2d(x, TensorF::zeros(Shape4{2, 2, 3, 3}), TensorF{}),
                         doctest::Contains("channels"), ShapeError);
    CHECK_THROWS_WITH_AS(conv2d(x, TensorF::zeros(Shape4{2, 3, 2, 2}), TensorF{}),
                         doctest::Contains("odd"), ShapeError);
    CHECK_THROWS_AS(conv2d(x, TensorF::zeros(Shape4{2, 3, 3, 3}), TensorF{}, 2, 0), ShapeError);
}

TEST_CASE("elementwise basics") {
    Rng rng(24);
    TensorF x = TensorF::uniform(Shape4{1, 2, 3, 3}, rng, -1.f, 1.f);
    TensorF z = TensorF::zeros(x.shape());

    TensorF s = sub(x, z);
    CHECK(oracles::max_abs_diff(s.values(), x.values()) == 0.0);

    TensorF sg = sigmoid(z);
    for (const float v : sg.values()) CHECK(v == 0.5f);

    TensorF r = relu(TensorF::from_data(Shape4{1, 1, 1, 3}, {-1.f, 0.f, 2.f}));
    CHECK(r.values()[0] == 0.f);
    CHECK(r.values()[1] == 0.f);
    CHECK(r.values()[2] == 2.f);

    // scalar-with-tensor is the only permitted broadcast
    TensorF scaled = mul(x, TensorF::scalar(2.f));
    CHECK(scaled.values()[3] == doctest::Approx(2.f * x.values()[3]));
    CHECK_THROWS_AS(add(x, TensorF::zeros(Shape4{1, 2, 3, 2})), ShapeError);

    const TensorF y = TensorF::zeros(x.shape());
    CHECK_THROWS_AS(elementwise(EwKind::relu, x, &y), ValueError);
    CHECK_THROWS_AS(elementwise(EwKind::add, x), ValueError);
    TensorF ew = elementwise(EwKind::add, x, &y);
    CHECK(ew.values()[0] == x.values()[0]);
}

TEST_CASE("concat/chunk are mutually inverse and validate divisibility") {
    Rng rng(25);
    TensorF a = TensorF::uniform(Shape4{1, 2, 4, 4}, rng, -1.f, 1.f);
    TensorF b = TensorF::uniform(Shape4{1, 2, 4, 4}, rng, -1.f, 1.f);
    auto parts = chunk_channels(concat_channels<float>({a, b}), 2);
    CHECK(oracles::max_abs_diff(parts[0].values(), a.values()) == 0.0);
    CHECK(oracles::max_abs_diff(parts[1].values(), b.values()) == 0.0);

    TensorF c = TensorF::from_data(Shape4{1, 4, 2, 2},
                                   [] {
                                       std::vector<float> v(16);
                                       for (int i = 0; i < 16; ++i) v[i] = static_cast<float>(i);
                                       return v;
                                   }());
    auto slices = chunk_channels(c, 4);
    REQUIRE(slices.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(slices[i].shape() == Shape4{1, 1, 2, 2});
        CHECK(slices[i].values()[0] == static_cast<float>(4 * i));  // channel order preserved
    }
    CHECK_THROWS_AS(chunk_channels(TensorF::zeros(Shape4{1, 6, 2, 2}), 4), ShapeError);
}

TEST_CASE("pool kinds") {
    TensorF c = TensorF::full(Shape4{2, 3, 4, 4}, 2.5f);
    TensorF avg = pool(PoolKind::global_avg, c);
    CHECK(avg.shape() == Shape4{2, 3, 1, 1});
    for (const float v : avg.values()) CHECK(v == doctest::Approx(2.5f));

    TensorF m = TensorF::from_data(Shape4{1, 3, 1, 1}, {1.f, 3.f, -2.f});
    TensorF gm = pool(PoolKind::global_max, m);
    CHECK(gm.values()[1] == 3.f);
    TensorF smx = pool(PoolKind::spatial_max_over_channels, m);
    CHECK(smx.values()[0] == 3.f);

    // spatial max over a single channel is the identity
    Rng rng(26);
    TensorF x = TensorF::uniform(Shape4{2, 1, 3, 5}, rng, -1.f, 1.f);
    TensorF sm = pool(PoolKind::spatial_max_over_channels, x);
    CHECK(sm.shape() == x.shape());
    CHECK(oracles::max_abs_diff(sm.values(), x.values()) == 0.0);

    // max gradient routes to the first maximum in scan order
    TensorD ties = TensorD::from_data(Shape4{1, 1, 2, 2}, {5.0, 5.0, 1.0, 5.0});
    ties.set_requires_grad(true);
    backward(sum_all(pool(PoolKind::global_max, ties)));
    CHECK(ties.grad()[0] == 1.0);
    CHECK(ties.grad()[1] == 0.0);
    CHECK(ties.grad()[3] == 0.0);
}

TEST_CASE("avg_pool2x2") {
    TensorF x = TensorF::from_data(Shape4{1, 1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    TensorF pooled = avg_pool2x2(x);
    CHECK(pooled.values()[0] == doctest::Approx(2.5f));
    CHECK_THROWS_AS(avg_pool2x2(TensorF::zeros(Shape4{1, 1, 3, 4})), ShapeError);
}

TEST_CASE("upsample nearest and bilinear") {
    TensorF x = TensorF::from_data(Shape4{1, 1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    TensorF up = upsample(x, UpsampleMode::nearest);
    CHECK(up.shape() == Shape4{1, 1, 4, 4});
    const std::vector<float> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(oracles::max_abs_diff<float>(up.values(), expect) == 0.0);

    // constant input stays constant under both modes
    TensorF c = TensorF::full(Shape4{2, 2, 3, 3}, 0.7f);
    for (const auto mode : {UpsampleMode::nearest, UpsampleMode::bilinear}) {
        TensorF cu = upsample(c, mode);
        for (const float v : cu.values()) CHECK(v == doctest::Approx(0.7f));
    }

    // average-downsampling a nearest-upsampled image recovers it exactly
    Rng rng(27);
    TensorF r = TensorF::uniform(Shape4{2, 3, 4, 5}, rng, -1.f, 1.f);
    TensorF ru = upsample(r, UpsampleMode::nearest);
    const std::vector<float> down = oracles::naive_downsample_avg(
        std::vector<float>(ru.values().begin(), ru.values().end()), ru.shape());
    CHECK(oracles::max_abs_diff<float>(r.values(), down) <= 1e-7);

    CHECK_THROWS_AS(upsample(x, UpsampleMode::nearest, 3), ValueError);
}

TEST_CASE("scale gates validate shapes") {
    Rng rng(28);
    TensorF x = TensorF::uniform(Shape4{2, 3, 4, 4}, rng, -1.f, 1.f);
    CHECK_THROWS_AS(scale_channels(x, TensorF::zeros(Shape4{2, 2, 1, 1})), ShapeError);
    CHECK_THROWS_AS(scale_spatial(x, TensorF::zeros(Shape4{2, 1, 4, 3})), ShapeError);
    TensorF g = TensorF::full(Shape4{2, 3, 1, 1}, 0.5f);
    TensorF y = scale_channels(x, g);
    CHECK(y.values()[10] == doctest::Approx(0.5f * x.values()[10]));
}

TEST_CASE("losses") {
    // bce at logit 0 against target 1 is ln 2
    TensorD z = TensorD::zeros(Shape4{1, 1, 1, 1});
    TensorD one = TensorD::full(Shape4{1, 1, 1, 1}, 1.0);
    CHECK(bce_with_logits_mean(z, one).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(29);
    TensorD x = TensorD::uniform(Shape4{1, 2, 3, 3}, rng, -2.0, 2.0);
    CHECK(mse_mean(x, x).item() == 0.0);

    TensorD targets = TensorD::zeros(x.shape());
    for (auto& v : targets.values_mut()) v = rng.next_double() < 0.5 ? 0.0 : 1.0;
    const double bce_err = grad_check<double>(
        [&](const TensorD& t) { return bce_with_logits_mean(t, targets); }, x, 1e-5);
    CHECK(bce_err <= 1e-6);
}

TEST_CASE("ops are deterministic across repeated evaluation") {
    Rng rng(30);
    TensorF x = TensorF::uniform(Shape4{2, 4, 8, 8}, rng, -1.f, 1.f);
    TensorF w = TensorF::uniform(Shape4{4, 4, 3, 3}, rng, -1.f, 1.f);
    TensorF y1 = conv2d(x, w, TensorF{}, 1, 1);
    TensorF y2 = conv2d(x, w, TensorF{}, 1, 1);
    CHECK(std::memcmp(y1.values().data(), y2.values().data(),
                      y1.values().size() * sizeof(float)) == 0);
}
