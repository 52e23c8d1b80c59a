#include "superdec/wavelet.hpp"

#include <cmath>

#include "superdec/ops.hpp"

namespace superdec {
namespace {

// Haar butterfly signs for [LL, LH, HL, HH] over block entries (a,b,c,d).
constexpr double kSign[4][4] = {
    {1, 1, 1, 1},    // LL
    {1, -1, 1, -1},  // LH
    {1, 1, -1, -1},  // HL
    {1, -1, -1, 1},  // HH
};

template <typename T>
void check_even(const Shape4& s, const char* what) {
    if (s.h < 2 || s.w < 2 || s.h % 2 != 0 || s.w % 2 != 0)
        throw ShapeError(std::string(what) + ": odd spatial extent " + s.str() +
                         " (H and W must be even and >= 2)");
}

template <typename T>
void check_bands(const WaveletBands<T>& bands, const char* what) {
    const Shape4 s = bands.ll.shape();
    for (const Tensor<T>* b : bands.all())
        if (!(b->shape() == s))
            throw ShapeError(std::string(what) + ": inconsistent band shapes " + s.str() +
                             " vs " + b->shape().str());
}

} // namespace

template <typename T>
WaveletBands<T> dwt_haar(const Tensor<T>& x) {
    check_even<T>(x.shape(), "dwt_haar");
    const Shape4& s = x.shape();
    const Shape4 os{s.b, s.c, s.h / 2, s.w / 2};
    const std::int64_t oplane = os.h * os.w;

    std::array<std::vector<T>, 4> band_vals;
    for (auto& v : band_vals) v.resize(static_cast<std::size_t>(os.numel()));
    const T* px = x.values().data();
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const T* plane = px + bc * s.h * s.w;
        for (std::int64_t oy = 0; oy < os.h; ++oy)
            for (std::int64_t ox = 0; ox < os.w; ++ox) {
                const T* p = plane + (2 * oy) * s.w + 2 * ox;
                const T a = p[0], b = p[1], c = p[s.w], d = p[s.w + 1];
                const std::int64_t o = bc * oplane + oy * os.w + ox;
                band_vals[0][o] = (a + b + c + d) * T(0.5);
                band_vals[1][o] = (a - b + c - d) * T(0.5);
                band_vals[2][o] = (a + b - c - d) * T(0.5);
                band_vals[3][o] = (a - b - c + d) * T(0.5);
            }
    }

    WaveletBands<T> bands;
    bands.source_shape = s;
    Tensor<T>* outs[4] = {&bands.ll, &bands.lh, &bands.hl, &bands.hh};
    auto xn = x.node();
    for (int band = 0; band < 4; ++band) {
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = os;
        n->value = std::move(band_vals[band]);
        *outs[band] = Tensor<T>(std::move(n));
        if (x.requires_grad()) {
            auto on = outs[band]->node();
            on->requires_grad = true;
            on->parents.push_back(xn);
            on->backward_fn = [xn, band, oplane](detail::Node<T>& self) {
                xn->ensure_grad();
                const Shape4& ss = xn->shape;
                const Shape4& os2 = self.shape;
                const T* g = self.grad.data();
                const T s0 = static_cast<T>(kSign[band][0] * 0.5);
                const T s1 = static_cast<T>(kSign[band][1] * 0.5);
                const T s2 = static_cast<T>(kSign[band][2] * 0.5);
                const T s3 = static_cast<T>(kSign[band][3] * 0.5);
                for (std::int64_t bc = 0; bc < ss.b * ss.c; ++bc) {
                    T* plane = xn->grad.data() + bc * ss.h * ss.w;
                    const T* gsrc = g + bc * oplane;
                    for (std::int64_t oy = 0; oy < os2.h; ++oy)
                        for (std::int64_t ox = 0; ox < os2.w; ++ox) {
                            const T gi = gsrc[oy * os2.w + ox];
                            T* p = plane + (2 * oy) * ss.w + 2 * ox;
                            p[0] += s0 * gi;
                            p[1] += s1 * gi;
                            p[ss.w] += s2 * gi;
                            p[ss.w + 1] += s3 * gi;
                        }
                }
            };
        }
    }
    return bands;
}

template <typename T>
Tensor<T> idwt_haar(const WaveletBands<T>& bands) {
    check_bands(bands, "idwt_haar");
    const Shape4 bs = bands.ll.shape();
    const Shape4 os{bs.b, bs.c, bs.h * 2, bs.w * 2};
    const std::int64_t bplane = bs.h * bs.w;

    std::vector<T> out(static_cast<std::size_t>(os.numel()));
    const T* pll = bands.ll.values().data();
    const T* plh = bands.lh.values().data();
    const T* phl = bands.hl.values().data();
    const T* phh = bands.hh.values().data();
    for (std::int64_t bc = 0; bc < bs.b * bs.c; ++bc) {
        T* plane = out.data() + bc * os.h * os.w;
        for (std::int64_t oy = 0; oy < bs.h; ++oy)
            for (std::int64_t ox = 0; ox < bs.w; ++ox) {
                const std::int64_t i = bc * bplane + oy * bs.w + ox;
                const T ll = pll[i], lh = plh[i], hl = phl[i], hh = phh[i];
                T* p = plane + (2 * oy) * os.w + 2 * ox;
                p[0] = (ll + lh + hl + hh) * T(0.5);
                p[1] = (ll - lh + hl - hh) * T(0.5);
                p[os.w] = (ll + lh - hl - hh) * T(0.5);
                p[os.w + 1] = (ll - lh - hl + hh) * T(0.5);
            }
    }

    auto n = std::make_shared<detail::Node<T>>();
    n->shape = os;
    n->value = std::move(out);
    Tensor<T> res(std::move(n));

    bool rg = false;
    for (const Tensor<T>* b : bands.all()) rg = rg || b->requires_grad();
    if (!rg) return res;

    std::array<typename Tensor<T>::NodePtr, 4> pnodes = {
        bands.ll.node(), bands.lh.node(), bands.hl.node(), bands.hh.node()};
    auto rn = res.node();
    rn->requires_grad = true;
    for (auto& p : pnodes) rn->parents.push_back(p);
    rn->backward_fn = [pnodes, bplane](detail::Node<T>& self) {
        const Shape4& os = self.shape;
        const Shape4& bs = pnodes[0]->shape;
        const T* g = self.grad.data();
        for (int band = 0; band < 4; ++band) {
            auto& pn = pnodes[band];
            if (!pn->requires_grad) continue;
            pn->ensure_grad();
            const T s0 = static_cast<T>(kSign[band][0] * 0.5);
            const T s1 = static_cast<T>(kSign[band][1] * 0.5);
            const T s2 = static_cast<T>(kSign[band][2] * 0.5);
            const T s3 = static_cast<T>(kSign[band][3] * 0.5);
            for (std::int64_t bc = 0; bc < bs.b * bs.c; ++bc) {
                const T* plane = g + bc * os.h * os.w;
                T* dst = pn->grad.data() + bc * bplane;
                for (std::int64_t oy = 0; oy < bs.h; ++oy)
                    for (std::int64_t ox = 0; ox < bs.w; ++ox) {
                        const T* p = plane + (2 * oy) * os.w + 2 * ox;
                        dst[oy * bs.w + ox] +=
                            s0 * p[0] + s1 * p[1] + s2 * p[os.w] + s3 * p[os.w + 1];
                    }
            }
        }
    };
    return res;
}

template <typename T>
Tensor<T> stack_bands(const WaveletBands<T>& bands) {
    check_bands(bands, "stack_bands");
    return concat_channels<T>({bands.ll, bands.lh, bands.hl, bands.hh});
}

template <typename T>
WaveletBands<T> unstack_bands(const Tensor<T>& stacked) {
    const Shape4& s = stacked.shape();
    if (s.c % 4 != 0)
        throw ShapeError("unstack_bands: channel count " + std::to_string(s.c) +
                         " not divisible by 4");
    auto parts = chunk_channels(stacked, 4);
    WaveletBands<T> bands;
    bands.ll = parts[0];
    bands.lh = parts[1];
    bands.hl = parts[2];
    bands.hh = parts[3];
    bands.source_shape = Shape4{s.b, s.c / 4, s.h * 2, s.w * 2};
    return bands;
}

template <typename T>
std::array<double, 4> subband_energy(const WaveletBands<T>& bands) {
    check_bands(bands, "subband_energy");
    std::array<double, 4> e{};
    int i = 0;
    for (const Tensor<T>* b : bands.all()) {
        double acc = 0;
        for (const T v : b->values()) acc += static_cast<double>(v) * static_cast<double>(v);
        e[i++] = acc;
    }
    const double total = e[0] + e[1] + e[2] + e[3];
    if (total == 0.0) throw ValueError("subband_energy: zero energy input");
    for (auto& v : e) v /= total;
    return e;
}

#define SUPERDEC_INSTANTIATE_WAVELET(T)                          \
    template WaveletBands<T> dwt_haar<T>(const Tensor<T>&);      \
    template Tensor<T> idwt_haar<T>(const WaveletBands<T>&);     \
    template Tensor<T> stack_bands<T>(const WaveletBands<T>&);   \
    template WaveletBands<T> unstack_bands<T>(const Tensor<T>&); \
    template std::array<double, 4> subband_energy<T>(const WaveletBands<T>&);

SUPERDEC_INSTANTIATE_WAVELET(float)
SUPERDEC_INSTANTIATE_WAVELET(double)

#undef SUPERDEC_INSTANTIATE_WAVELET

} // namespace superdec
