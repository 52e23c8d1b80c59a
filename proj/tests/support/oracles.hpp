#pragma once

// Independent reference implementations used as oracles. These deliberately
// avoid the library's im2col/GEMM and butterfly code paths: plain nested
// loops only, so a bug in the production kernels cannot hide here.

#include <vector>

#include "superdec/tensor.hpp"

namespace oracles {

using superdec::Shape4;

// Naive direct cross-correlation.
template <typename T>
std::vector<T> naive_conv2d(const std::vector<T>& in, const Shape4& is, const std::vector<T>& w,
                            const Shape4& ws, const std::vector<T>& bias, int stride, int pad) {
    const std::int64_t hout = (is.h + 2 * pad - ws.h) / stride + 1;
    const std::int64_t wout = (is.w + 2 * pad - ws.w) / stride + 1;
    std::vector<T> out(static_cast<std::size_t>(is.b * ws.b * hout * wout), T(0));
    for (std::int64_t b = 0; b < is.b; ++b)
        for (std::int64_t co = 0; co < ws.b; ++co)
            for (std::int64_t oy = 0; oy < hout; ++oy)
                for (std::int64_t ox = 0; ox < wout; ++ox) {
                    double acc = bias.empty() ? 0.0 : static_cast<double>(bias[co]);
                    for (std::int64_t ci = 0; ci < is.c; ++ci)
                        for (std::int64_t ky = 0; ky < ws.h; ++ky)
                            for (std::int64_t kx = 0; kx < ws.w; ++kx) {
                                const std::int64_t iy = oy * stride + ky - pad;
                                const std::int64_t ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= is.h || ix < 0 || ix >= is.w) continue;
                                acc += static_cast<double>(
                                           in[((b * is.c + ci) * is.h + iy) * is.w + ix]) *
                                       static_cast<double>(
                                           w[((co * ws.c + ci) * ws.h + ky) * ws.w + kx]);
                            }
                    out[((b * ws.b + co) * hout + oy) * wout + ox] = static_cast<T>(acc);
                }
    return out;
}

// 2x2 block average, the inverse of nearest-neighbor x2 upsampling.
template <typename T>
std::vector<T> naive_downsample_avg(const std::vector<T>& in, const Shape4& is) {
    std::vector<T> out(static_cast<std::size_t>(is.numel() / 4));
    const std::int64_t oh = is.h / 2, ow = is.w / 2;
    for (std::int64_t bc = 0; bc < is.b * is.c; ++bc)
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x) {
                const T* p = in.data() + bc * is.h * is.w + 2 * y * is.w + 2 * x;
                out[bc * oh * ow + y * ow + x] = (p[0] + p[1] + p[is.w] + p[is.w + 1]) / T(4);
            }
    return out;
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return worst;
}

template <typename T>
double rel_l2_diff(std::span<const T> a, std::span<const T> b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        num += d * d;
        den += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace oracles
