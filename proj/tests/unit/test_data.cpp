#include <doctest.h>

#include <cmath>
#include <cstring>

#include "superdec/data.hpp"
#include "superdec/metrics.hpp"
#include "superdec/wavelet.hpp"

using namespace superdec;

TEST_CASE("thin lines: determinism, binary masks, value range") {
    DatasetSpec spec;
    spec.size = 64;
    auto a = gen_thin_lines<float>(spec, 5, 8);
    auto b = gen_thin_lines<float>(spec, 5, 8);
    REQUIRE(a.size() == 8);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::memcmp(a[i].input.values().data(), b[i].input.values().data(),
                          sizeof(float) * a[i].input.numel()) == 0);
        CHECK(a[i].width_px == b[i].width_px);
        CHECK(a[i].width_px >= 1);
        CHECK(a[i].width_px <= 4);
        for (const float m : a[i].target.values()) CHECK((m == 0.f || m == 1.f));
        for (const float v : a[i].input.values()) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
        // every image contains at least one stroke pixel
        double mask_sum = 0;
        for (const float m : a[i].target.values()) mask_sum += m;
        CHECK(mask_sum > 0);
    }
    // different seed changes the data
    auto c = gen_thin_lines<float>(spec, 6, 1);
    CHECK(std::memcmp(a[0].input.values().data(), c[0].input.values().data(),
                      sizeof(float) * a[0].input.numel()) != 0);
}

TEST_CASE("thin lines: width-1 mask pixel count tracks the stroke length") {
    DatasetSpec spec;
    spec.size = 64;
    spec.min_width = 1;
    spec.max_width = 1;
    spec.max_lines = 1;
    auto samples = gen_thin_lines<float>(spec, 17, 24);
    for (const auto& s : samples) {
        double count = 0;
        for (const float m : s.target.values()) count += m;
        CHECK(count >= 0.8 * s.stroke_length_px - 3.0);
        CHECK(count <= 1.2 * s.stroke_length_px + 3.0);
    }
}

TEST_CASE("denoise: sigma 0 gives noisy == clean; clean images are LL-dominant") {
    DatasetSpec spec;
    spec.task = TaskKind::denoise;
    spec.size = 64;
    spec.noise_sigma = 0.0;
    auto zero = gen_denoise<float>(spec, 3, 4);
    for (const auto& s : zero)
        CHECK(std::memcmp(s.input.values().data(), s.target.values().data(),
                          sizeof(float) * s.input.numel()) == 0);

    spec.noise_sigma = 0.1;
    auto noisy = gen_denoise<float>(spec, 3, 8);
    for (const auto& s : noisy) {
        const auto e = subband_energy(dwt_haar(s.target));
        CHECK(e[0] > 0.8);
        for (const float v : s.input.values()) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
    }
}

TEST_CASE("denoise: identity-model PSNR concentrates at -20*log10(sigma)") {
    DatasetSpec spec;
    spec.task = TaskKind::denoise;
    spec.size = 64;
    spec.noise_sigma = 0.1;
    auto samples = gen_denoise<double>(spec, 11, 100);
    double psnr_sum = 0;
    for (const auto& s : samples) {
        double mse = 0;
        for (std::int64_t i = 0; i < s.input.numel(); ++i) {
            const double d = s.input.values()[i] - s.target.values()[i];
            mse += d * d;
        }
        psnr_sum += psnr_db(mse / static_cast<double>(s.input.numel()));
    }
    const double mean_psnr = psnr_sum / 100.0;
    CHECK(mean_psnr == doctest::Approx(20.0).epsilon(0.015));  // 20 dB +- 0.3
}

TEST_CASE("dataset spec validation") {
    DatasetSpec bad;
    bad.size = 48;  // not a power of two
    CHECK_THROWS_AS(gen_thin_lines<float>(bad, 1, 1), ValueError);
    DatasetSpec bad2;
    bad2.min_width = 3;
    bad2.max_width = 2;
    CHECK_THROWS_AS(gen_thin_lines<float>(bad2, 1, 1), ValueError);
}
