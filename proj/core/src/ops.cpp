#include "superdec/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace superdec {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> parents) {
    for (const auto* p : parents)
        if (p->defined() && p->requires_grad()) return true;
    return false;
}

template <typename T>
Tensor<T> make_result(const Shape4& shape, std::vector<T> value) {
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = shape;
    n->value = std::move(value);
    return Tensor<T>(std::move(n));
}

template <typename T>
void attach(Tensor<T>& out, std::initializer_list<const Tensor<T>*> parents,
            std::function<void(detail::Node<T>&)> backward_fn) {
    auto n = out.node();
    n->requires_grad = true;
    for (const auto* p : parents)
        if (p->defined()) n->parents.push_back(p->node());
    n->backward_fn = std::move(backward_fn);
}

template <typename T>
std::span<T> grad_of(const NodePtr<T>& n) {
    n->ensure_grad();
    return n->grad;
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

using EMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace {

enum class BinOp { add, sub, mul };

// a and b must have equal shapes, or one of them one element.
template <typename T>
Tensor<T> binary_ew(BinOp op, const Tensor<T>& a, const Tensor<T>& b) {
    const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
    if (!(a.shape() == b.shape()) && !a_scalar && !b_scalar)
        throw ShapeError("elementwise: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str() + " (only scalar-with-tensor broadcasts)");

    const Shape4 out_shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = static_cast<std::size_t>(out_shape.numel());
    std::vector<T> out(n);
    const T* pa = a.values().data();
    const T* pb = b.values().data();
    for (std::size_t i = 0; i < n; ++i) {
        const T va = a_scalar ? pa[0] : pa[i];
        const T vb = b_scalar ? pb[0] : pb[i];
        out[i] = op == BinOp::add ? va + vb : op == BinOp::sub ? va - vb : va * vb;
    }
    Tensor<T> res = make_result(out_shape, std::move(out));
    if (!any_requires_grad<T>({&a, &b})) return res;

    auto an = a.node(), bn = b.node();
    attach<T>(res, {&a, &b}, [op, an, bn, a_scalar, b_scalar](detail::Node<T>& self) {
        const std::size_t n = self.value.size();
        const T* g = self.grad.data();
        if (an->requires_grad) {
            auto ga = grad_of(an);
            const T* pb = bn->value.data();
            for (std::size_t i = 0; i < n; ++i) {
                T gi = g[i];
                if (op == BinOp::mul) gi *= b_scalar ? pb[0] : pb[i];
                ga[a_scalar ? 0 : i] += gi;
            }
        }
        if (bn->requires_grad) {
            auto gb = grad_of(bn);
            const T* pa = an->value.data();
            for (std::size_t i = 0; i < n; ++i) {
                T gi = g[i];
                if (op == BinOp::mul) gi *= a_scalar ? pa[0] : pa[i];
                else if (op == BinOp::sub) gi = -gi;
                gb[b_scalar ? 0 : i] += gi;
            }
        }
    });
    return res;
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary_ew(BinOp::add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary_ew(BinOp::sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary_ew(BinOp::mul, a, b); }

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    const std::size_t n = static_cast<std::size_t>(a.numel());
    std::vector<T> out(n);
    const T* pa = a.values().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] > T(0) ? pa[i] : T(0);
    Tensor<T> res = make_result(a.shape(), std::move(out));
    if (!any_requires_grad<T>({&a})) return res;
    auto an = a.node();
    attach<T>(res, {&a}, [an](detail::Node<T>& self) {
        auto ga = grad_of(an);
        const T* x = an->value.data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            if (x[i] > T(0)) ga[i] += g[i];
    });
    return res;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    const std::size_t n = static_cast<std::size_t>(a.numel());
    std::vector<T> out(n);
    const T* pa = a.values().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = stable_sigmoid(pa[i]);
    Tensor<T> res = make_result(a.shape(), std::move(out));
    if (!any_requires_grad<T>({&a})) return res;
    auto an = a.node();
    attach<T>(res, {&a}, [an](detail::Node<T>& self) {
        auto ga = grad_of(an);
        const T* y = self.value.data();
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            ga[i] += g[i] * y[i] * (T(1) - y[i]);
    });
    return res;
}

template <typename T>
Tensor<T> elementwise(EwKind kind, const Tensor<T>& a, const Tensor<T>* b) {
    const bool unary = kind == EwKind::relu || kind == EwKind::sigmoid;
    if (unary && b)
        throw ValueError("elementwise: unary kind takes no second operand");
    if (!unary && (!b || !b->defined()))
        throw ValueError("elementwise: binary kind requires a second operand");
    switch (kind) {
        case EwKind::add: return add(a, *b);
        case EwKind::sub: return sub(a, *b);
        case EwKind::mul: return mul(a, *b);
        case EwKind::relu: return relu(a);
        case EwKind::sigmoid: return sigmoid(a);
    }
    throw ValueError("elementwise: unknown kind");
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    std::int64_t B, Cin, H, W, Cout, kh, kw, Hout, Wout;
    int stride, pad;
};

template <typename T>
ConvDims conv_check(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                    int stride, int padding) {
    const Shape4& is = input.shape();
    const Shape4& ws = weight.shape();
    if (ws.h % 2 == 0 || ws.w % 2 == 0)
        throw ShapeError("conv2d: kernel extents must be odd, got kh=" + std::to_string(ws.h) +
                         " kw=" + std::to_string(ws.w));
    if (is.c != ws.c)
        throw ShapeError("conv2d: input channels " + std::to_string(is.c) +
                         " != weight Cin " + std::to_string(ws.c));
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    if (padding < 0) throw ValueError("conv2d: padding must be >= 0");
    const std::int64_t hn = is.h + 2 * padding - ws.h;
    const std::int64_t wn = is.w + 2 * padding - ws.w;
    if (hn < 0 || hn % stride != 0)
        throw ShapeError("conv2d: H=" + std::to_string(is.h) + " with pad " +
                         std::to_string(padding) + ", kh=" + std::to_string(ws.h) +
                         ", stride " + std::to_string(stride) + " gives no integer output height");
    if (wn < 0 || wn % stride != 0)
        throw ShapeError("conv2d: W=" + std::to_string(is.w) + " with pad " +
                         std::to_string(padding) + ", kw=" + std::to_string(ws.w) +
                         ", stride " + std::to_string(stride) + " gives no integer output width");
    if (bias.defined()) {
        const Shape4 want{1, ws.b, 1, 1};
        if (!(bias.shape() == want))
            throw ShapeError("conv2d: bias shape " + bias.shape().str() + " != " + want.str());
    }
    return ConvDims{is.b, is.c, is.h, is.w, ws.b, ws.h, ws.w,
                    hn / stride + 1, wn / stride + 1, stride, padding};
}

// Columns are (oy, ox); rows are (ci, ky, kx). Out-of-image taps are zero.
template <typename T>
void im2col(const T* in, const ConvDims& d, T* col) {
    const std::int64_t cols = d.Hout * d.Wout;
    for (std::int64_t ci = 0; ci < d.Cin; ++ci) {
        const T* plane = in + ci * d.H * d.W;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                T* row = col + ((ci * d.kh + ky) * d.kw + kx) * cols;
                for (std::int64_t oy = 0; oy < d.Hout; ++oy) {
                    const std::int64_t iy = oy * d.stride + ky - d.pad;
                    T* dst = row + oy * d.Wout;
                    if (iy < 0 || iy >= d.H) {
                        std::fill(dst, dst + d.Wout, T(0));
                        continue;
                    }
                    const T* src = plane + iy * d.W;
                    for (std::int64_t ox = 0; ox < d.Wout; ++ox) {
                        const std::int64_t ix = ox * d.stride + kx - d.pad;
                        dst[ox] = (ix >= 0 && ix < d.W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add of an im2col-layout gradient back onto the input plane.
template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* gin) {
    const std::int64_t cols = d.Hout * d.Wout;
    for (std::int64_t ci = 0; ci < d.Cin; ++ci) {
        T* plane = gin + ci * d.H * d.W;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const T* row = col + ((ci * d.kh + ky) * d.kw + kx) * cols;
                for (std::int64_t oy = 0; oy < d.Hout; ++oy) {
                    const std::int64_t iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.H) continue;
                    T* dst = plane + iy * d.W;
                    const T* src = row + oy * d.Wout;
                    for (std::int64_t ox = 0; ox < d.Wout; ++ox) {
                        const std::int64_t ix = ox * d.stride + kx - d.pad;
                        if (ix >= 0 && ix < d.W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

} // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
    const ConvDims d = conv_check(input, weight, bias, stride, padding);
    const std::int64_t krows = d.Cin * d.kh * d.kw;
    const std::int64_t cols = d.Hout * d.Wout;

    std::vector<T> out(static_cast<std::size_t>(d.B * d.Cout * cols));
    std::vector<T> colbuf(static_cast<std::size_t>(krows * cols));
    Eigen::Map<const EMat<T>> wmat(weight.values().data(), d.Cout, krows);
    for (std::int64_t b = 0; b < d.B; ++b) {
        im2col(input.values().data() + b * d.Cin * d.H * d.W, d, colbuf.data());
        Eigen::Map<const EMat<T>> kmat(colbuf.data(), krows, cols);
        Eigen::Map<EMat<T>> omat(out.data() + b * d.Cout * cols, d.Cout, cols);
        omat.noalias() = wmat * kmat;
    }
    if (bias.defined()) {
        const T* pb = bias.values().data();
        for (std::int64_t b = 0; b < d.B; ++b)
            for (std::int64_t co = 0; co < d.Cout; ++co) {
                T* dst = out.data() + (b * d.Cout + co) * cols;
                const T bv = pb[co];
                for (std::int64_t i = 0; i < cols; ++i) dst[i] += bv;
            }
    }

    Tensor<T> res = make_result(Shape4{d.B, d.Cout, d.Hout, d.Wout}, std::move(out));
    if (!any_requires_grad<T>({&input, &weight, &bias})) return res;

    auto xn = input.node(), wn = weight.node();
    auto bn = bias.defined() ? bias.node() : NodePtr<T>{};
    attach<T>(res, {&input, &weight, &bias}, [d, krows, cols, xn, wn, bn](detail::Node<T>& self) {
        const T* g = self.grad.data();
        Eigen::Map<const EMat<T>> wmat(wn->value.data(), d.Cout, krows);

        std::vector<T> colbuf;
        EMat<T> wacc;
        if (wn->requires_grad) wacc = EMat<T>::Zero(d.Cout, krows);
        if (xn->requires_grad || wn->requires_grad)
            colbuf.resize(static_cast<std::size_t>(krows * cols));

        for (std::int64_t b = 0; b < d.B; ++b) {
            Eigen::Map<const EMat<T>> gmat(g + b * d.Cout * cols, d.Cout, cols);
            if (xn->requires_grad) {
                Eigen::Map<EMat<T>> gcol(colbuf.data(), krows, cols);
                gcol.noalias() = wmat.transpose() * gmat;
                xn->ensure_grad();
                col2im_add(colbuf.data(), d, xn->grad.data() + b * d.Cin * d.H * d.W);
            }
            if (wn->requires_grad) {
                im2col(xn->value.data() + b * d.Cin * d.H * d.W, d, colbuf.data());
                Eigen::Map<const EMat<T>> kmat(colbuf.data(), krows, cols);
                wacc.noalias() += gmat * kmat.transpose();
            }
        }
        if (wn->requires_grad) {
            auto gw = grad_of(wn);
            for (std::int64_t i = 0; i < d.Cout * krows; ++i) gw[i] += wacc.data()[i];
        }
        if (bn && bn->requires_grad) {
            auto gb = grad_of(bn);
            for (std::int64_t b = 0; b < d.B; ++b)
                for (std::int64_t co = 0; co < d.Cout; ++co) {
                    const T* src = g + (b * d.Cout + co) * cols;
                    T s(0);
                    for (std::int64_t i = 0; i < cols; ++i) s += src[i];
                    gb[co] += s;
                }
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Concat / chunk over channels
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ValueError("concat_channels: no inputs");
    const Shape4 s0 = parts[0].shape();
    std::int64_t ctotal = 0;
    for (const auto& p : parts) {
        const Shape4& s = p.shape();
        if (s.b != s0.b || s.h != s0.h || s.w != s0.w)
            throw ShapeError("concat_channels: incompatible shape " + s.str() + " vs " + s0.str());
        ctotal += s.c;
    }
    const std::int64_t plane = s0.h * s0.w;
    const Shape4 os{s0.b, ctotal, s0.h, s0.w};
    std::vector<T> out(static_cast<std::size_t>(os.numel()));
    for (std::int64_t b = 0; b < s0.b; ++b) {
        std::int64_t coff = 0;
        for (const auto& p : parts) {
            const std::int64_t pc = p.shape().c;
            std::memcpy(out.data() + (b * ctotal + coff) * plane,
                        p.values().data() + b * pc * plane,
                        static_cast<std::size_t>(pc * plane) * sizeof(T));
            coff += pc;
        }
    }
    Tensor<T> res = make_result(os, std::move(out));

    bool rg = false;
    for (const auto& p : parts) rg = rg || p.requires_grad();
    if (!rg) return res;

    std::vector<NodePtr<T>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    auto n = res.node();
    n->requires_grad = true;
    for (auto& p : pnodes) n->parents.push_back(p);
    n->backward_fn = [pnodes, ctotal, plane](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const std::int64_t B = self.shape.b;
        std::int64_t coff = 0;
        for (const auto& p : pnodes) {
            const std::int64_t pc = p->shape.c;
            if (p->requires_grad) {
                auto gp = grad_of(p);
                for (std::int64_t b = 0; b < B; ++b) {
                    const T* src = g + (b * ctotal + coff) * plane;
                    T* dst = gp.data() + b * pc * plane;
                    for (std::int64_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
                }
            }
            coff += pc;
        }
    };
    return res;
}

template <typename T>
std::vector<Tensor<T>> chunk_channels(const Tensor<T>& x, int n) {
    const Shape4& s = x.shape();
    if (n < 1) throw ValueError("chunk_channels: n must be >= 1");
    if (s.c % n != 0)
        throw ShapeError("chunk_channels: channel count " + std::to_string(s.c) +
                         " not divisible by " + std::to_string(n));
    const std::int64_t cs = s.c / n;
    const std::int64_t plane = s.h * s.w;
    std::vector<Tensor<T>> outs;
    outs.reserve(static_cast<std::size_t>(n));
    auto xn = x.node();
    for (int i = 0; i < n; ++i) {
        const Shape4 os{s.b, cs, s.h, s.w};
        std::vector<T> val(static_cast<std::size_t>(os.numel()));
        for (std::int64_t b = 0; b < s.b; ++b)
            std::memcpy(val.data() + b * cs * plane,
                        x.values().data() + (b * s.c + i * cs) * plane,
                        static_cast<std::size_t>(cs * plane) * sizeof(T));
        Tensor<T> part = make_result(os, std::move(val));
        if (x.requires_grad()) {
            const std::int64_t coff = i * cs;
            attach<T>(part, {&x}, [xn, coff, cs, plane](detail::Node<T>& self) {
                auto gx = grad_of(xn);
                const T* g = self.grad.data();
                const std::int64_t C = xn->shape.c;
                for (std::int64_t b = 0; b < self.shape.b; ++b) {
                    T* dst = gx.data() + (b * C + coff) * plane;
                    const T* src = g + b * cs * plane;
                    for (std::int64_t j = 0; j < cs * plane; ++j) dst[j] += src[j];
                }
            });
        }
        outs.push_back(std::move(part));
    }
    return outs;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> pool(PoolKind kind, const Tensor<T>& x) {
    const Shape4& s = x.shape();
    if (s.h < 1 || s.w < 1)
        throw ShapeError("pool: spatial extents must be >= 1, got " + s.str());
    const std::int64_t plane = s.h * s.w;
    const T* px = x.values().data();

    if (kind == PoolKind::global_avg || kind == PoolKind::global_max) {
        const Shape4 os{s.b, s.c, 1, 1};
        std::vector<T> out(static_cast<std::size_t>(os.numel()));
        std::vector<std::int64_t> argmax;
        if (kind == PoolKind::global_max) argmax.resize(out.size());
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            const T* src = px + bc * plane;
            if (kind == PoolKind::global_avg) {
                double acc = 0;
                for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
                out[bc] = static_cast<T>(acc / static_cast<double>(plane));
            } else {
                std::int64_t best = 0;
                for (std::int64_t i = 1; i < plane; ++i)
                    if (src[i] > src[best]) best = i;
                out[bc] = src[best];
                argmax[bc] = best;
            }
        }
        Tensor<T> res = make_result(os, std::move(out));
        if (!x.requires_grad()) return res;
        auto xn = x.node();
        attach<T>(res, {&x}, [xn, kind, plane, argmax = std::move(argmax)](detail::Node<T>& self) {
            auto gx = grad_of(xn);
            const T* g = self.grad.data();
            for (std::int64_t bc = 0; bc < self.shape.b * self.shape.c; ++bc) {
                if (kind == PoolKind::global_avg) {
                    const T gi = g[bc] / static_cast<T>(plane);
                    T* dst = gx.data() + bc * plane;
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] += gi;
                } else {
                    gx[bc * plane + argmax[bc]] += g[bc];
                }
            }
        });
        return res;
    }

    // spatial kinds: reduce over channels
    const Shape4 os{s.b, 1, s.h, s.w};
    std::vector<T> out(static_cast<std::size_t>(os.numel()));
    std::vector<std::int32_t> argmax;
    const bool is_max = kind == PoolKind::spatial_max_over_channels;
    if (is_max) argmax.resize(out.size());
    for (std::int64_t b = 0; b < s.b; ++b) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const T* base = px + b * s.c * plane + i;
            if (is_max) {
                std::int32_t best = 0;
                T bv = base[0];
                for (std::int64_t c = 1; c < s.c; ++c)
                    if (base[c * plane] > bv) { bv = base[c * plane]; best = static_cast<std::int32_t>(c); }
                out[b * plane + i] = bv;
                argmax[b * plane + i] = best;
            } else {
                double acc = 0;
                for (std::int64_t c = 0; c < s.c; ++c) acc += static_cast<double>(base[c * plane]);
                out[b * plane + i] = static_cast<T>(acc / static_cast<double>(s.c));
            }
        }
    }
    Tensor<T> res = make_result(os, std::move(out));
    if (!x.requires_grad()) return res;
    auto xn = x.node();
    attach<T>(res, {&x}, [xn, is_max, plane, argmax = std::move(argmax)](detail::Node<T>& self) {
        auto gx = grad_of(xn);
        const T* g = self.grad.data();
        const std::int64_t C = xn->shape.c;
        for (std::int64_t b = 0; b < self.shape.b; ++b)
            for (std::int64_t i = 0; i < plane; ++i) {
                const T gi = g[b * plane + i];
                T* base = gx.data() + b * C * plane + i;
                if (is_max) {
                    base[static_cast<std::int64_t>(argmax[b * plane + i]) * plane] += gi;
                } else {
                    const T gc = gi / static_cast<T>(C);
                    for (std::int64_t c = 0; c < C; ++c) base[c * plane] += gc;
                }
            }
    });
    return res;
}

template <typename T>
Tensor<T> avg_pool2x2(const Tensor<T>& x) {
    const Shape4& s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw ShapeError("avg_pool2x2: odd spatial extent " + s.str());
    const Shape4 os{s.b, s.c, s.h / 2, s.w / 2};
    std::vector<T> out(static_cast<std::size_t>(os.numel()));
    const T* px = x.values().data();
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const T* plane = px + bc * s.h * s.w;
        T* dst = out.data() + bc * os.h * os.w;
        for (std::int64_t oy = 0; oy < os.h; ++oy)
            for (std::int64_t ox = 0; ox < os.w; ++ox) {
                const T* p = plane + (2 * oy) * s.w + 2 * ox;
                dst[oy * os.w + ox] = (p[0] + p[1] + p[s.w] + p[s.w + 1]) * T(0.25);
            }
    }
    Tensor<T> res = make_result(os, std::move(out));
    if (!x.requires_grad()) return res;
    auto xn = x.node();
    attach<T>(res, {&x}, [xn](detail::Node<T>& self) {
        auto gx = grad_of(xn);
        const Shape4& s = xn->shape;
        const Shape4& os = self.shape;
        const T* g = self.grad.data();
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            T* plane = gx.data() + bc * s.h * s.w;
            const T* src = g + bc * os.h * os.w;
            for (std::int64_t oy = 0; oy < os.h; ++oy)
                for (std::int64_t ox = 0; ox < os.w; ++ox) {
                    const T gi = src[oy * os.w + ox] * T(0.25);
                    T* p = plane + (2 * oy) * s.w + 2 * ox;
                    p[0] += gi;
                    p[1] += gi;
                    p[s.w] += gi;
                    p[s.w + 1] += gi;
                }
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Upsampling
// ---------------------------------------------------------------------------

namespace {

// Source taps for one output axis under align-corners=false, factor 2.
struct AxisTap {
    std::int64_t i0, i1;
    double w0, w1;
};

std::vector<AxisTap> bilinear_taps(std::int64_t n_out, std::int64_t n_in) {
    std::vector<AxisTap> taps(static_cast<std::size_t>(n_out));
    for (std::int64_t o = 0; o < n_out; ++o) {
        const double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
        const double f = std::floor(src);
        double frac = src - f;
        std::int64_t i0 = static_cast<std::int64_t>(f);
        std::int64_t i1 = i0 + 1;
        i0 = std::clamp<std::int64_t>(i0, 0, n_in - 1);
        i1 = std::clamp<std::int64_t>(i1, 0, n_in - 1);
        taps[o] = {i0, i1, 1.0 - frac, frac};
    }
    return taps;
}

} // namespace

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, UpsampleMode mode, int factor) {
    if (factor != 2) throw ValueError("upsample: only factor 2 is supported");
    const Shape4& s = x.shape();
    const Shape4 os{s.b, s.c, s.h * 2, s.w * 2};
    std::vector<T> out(static_cast<std::size_t>(os.numel()));
    const T* px = x.values().data();

    if (mode == UpsampleMode::nearest) {
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            const T* plane = px + bc * s.h * s.w;
            T* dst = out.data() + bc * os.h * os.w;
            for (std::int64_t y = 0; y < os.h; ++y) {
                const T* row = plane + (y / 2) * s.w;
                for (std::int64_t xw = 0; xw < os.w; ++xw) dst[y * os.w + xw] = row[xw / 2];
            }
        }
    } else {
        const auto ty = bilinear_taps(os.h, s.h);
        const auto tx = bilinear_taps(os.w, s.w);
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            const T* plane = px + bc * s.h * s.w;
            T* dst = out.data() + bc * os.h * os.w;
            for (std::int64_t y = 0; y < os.h; ++y) {
                const AxisTap& ay = ty[y];
                const T* r0 = plane + ay.i0 * s.w;
                const T* r1 = plane + ay.i1 * s.w;
                for (std::int64_t xw = 0; xw < os.w; ++xw) {
                    const AxisTap& ax = tx[xw];
                    const double v = ay.w0 * (ax.w0 * r0[ax.i0] + ax.w1 * r0[ax.i1]) +
                                     ay.w1 * (ax.w0 * r1[ax.i0] + ax.w1 * r1[ax.i1]);
                    dst[y * os.w + xw] = static_cast<T>(v);
                }
            }
        }
    }
    Tensor<T> res = make_result(os, std::move(out));
    if (!x.requires_grad()) return res;
    auto xn = x.node();
    attach<T>(res, {&x}, [xn, mode](detail::Node<T>& self) {
        auto gx = grad_of(xn);
        const Shape4& s = xn->shape;
        const Shape4& os = self.shape;
        const T* g = self.grad.data();
        if (mode == UpsampleMode::nearest) {
            for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
                T* plane = gx.data() + bc * s.h * s.w;
                const T* src = g + bc * os.h * os.w;
                for (std::int64_t y = 0; y < os.h; ++y)
                    for (std::int64_t xw = 0; xw < os.w; ++xw)
                        plane[(y / 2) * s.w + xw / 2] += src[y * os.w + xw];
            }
        } else {
            const auto ty = bilinear_taps(os.h, s.h);
            const auto tx = bilinear_taps(os.w, s.w);
            for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
                T* plane = gx.data() + bc * s.h * s.w;
                const T* src = g + bc * os.h * os.w;
                for (std::int64_t y = 0; y < os.h; ++y) {
                    const AxisTap& ay = ty[y];
                    for (std::int64_t xw = 0; xw < os.w; ++xw) {
                        const AxisTap& ax = tx[xw];
                        const T gi = src[y * os.w + xw];
                        plane[ay.i0 * s.w + ax.i0] += static_cast<T>(ay.w0 * ax.w0) * gi;
                        plane[ay.i0 * s.w + ax.i1] += static_cast<T>(ay.w0 * ax.w1) * gi;
                        plane[ay.i1 * s.w + ax.i0] += static_cast<T>(ay.w1 * ax.w0) * gi;
                        plane[ay.i1 * s.w + ax.i1] += static_cast<T>(ay.w1 * ax.w1) * gi;
                    }
                }
            }
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Broadcast gates
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& gate) {
    const Shape4& s = x.shape();
    const Shape4 want{s.b, s.c, 1, 1};
    if (!(gate.shape() == want))
        throw ShapeError("scale_channels: gate shape " + gate.shape().str() + " != " + want.str());
    const std::int64_t plane = s.h * s.w;
    std::vector<T> out(static_cast<std::size_t>(s.numel()));
    const T* px = x.values().data();
    const T* pg = gate.values().data();
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const T gv = pg[bc];
        for (std::int64_t i = 0; i < plane; ++i) out[bc * plane + i] = px[bc * plane + i] * gv;
    }
    Tensor<T> res = make_result(s, std::move(out));
    if (!any_requires_grad<T>({&x, &gate})) return res;
    auto xn = x.node(), gn = gate.node();
    attach<T>(res, {&x, &gate}, [xn, gn, plane](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const std::int64_t n = self.shape.b * self.shape.c;
        if (xn->requires_grad) {
            auto gx = grad_of(xn);
            const T* pg = gn->value.data();
            for (std::int64_t bc = 0; bc < n; ++bc)
                for (std::int64_t i = 0; i < plane; ++i)
                    gx[bc * plane + i] += g[bc * plane + i] * pg[bc];
        }
        if (gn->requires_grad) {
            auto gg = grad_of(gn);
            const T* px = xn->value.data();
            for (std::int64_t bc = 0; bc < n; ++bc) {
                T acc(0);
                for (std::int64_t i = 0; i < plane; ++i)
                    acc += g[bc * plane + i] * px[bc * plane + i];
                gg[bc] += acc;
            }
        }
    });
    return res;
}

template <typename T>
Tensor<T> scale_spatial(const Tensor<T>& x, const Tensor<T>& gate) {
    const Shape4& s = x.shape();
    const Shape4 want{s.b, 1, s.h, s.w};
    if (!(gate.shape() == want))
        throw ShapeError("scale_spatial: gate shape " + gate.shape().str() + " != " + want.str());
    const std::int64_t plane = s.h * s.w;
    std::vector<T> out(static_cast<std::size_t>(s.numel()));
    const T* px = x.values().data();
    const T* pg = gate.values().data();
    for (std::int64_t b = 0; b < s.b; ++b)
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* gp = pg + b * plane;
            const std::int64_t off = (b * s.c + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) out[off + i] = px[off + i] * gp[i];
        }
    Tensor<T> res = make_result(s, std::move(out));
    if (!any_requires_grad<T>({&x, &gate})) return res;
    auto xn = x.node(), gn = gate.node();
    attach<T>(res, {&x, &gate}, [xn, gn, plane](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const Shape4& s = self.shape;
        if (xn->requires_grad) {
            auto gx = grad_of(xn);
            const T* pg = gn->value.data();
            for (std::int64_t b = 0; b < s.b; ++b)
                for (std::int64_t c = 0; c < s.c; ++c) {
                    const std::int64_t off = (b * s.c + c) * plane;
                    const T* gp = pg + b * plane;
                    for (std::int64_t i = 0; i < plane; ++i) gx[off + i] += g[off + i] * gp[i];
                }
        }
        if (gn->requires_grad) {
            auto gg = grad_of(gn);
            const T* px = xn->value.data();
            for (std::int64_t b = 0; b < s.b; ++b)
                for (std::int64_t c = 0; c < s.c; ++c) {
                    const std::int64_t off = (b * s.c + c) * plane;
                    T* gp = gg.data() + b * plane;
                    for (std::int64_t i = 0; i < plane; ++i) gp[i] += g[off + i] * px[off + i];
                }
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    double acc = 0;
    for (const T v : x.values()) acc += static_cast<double>(v);
    Tensor<T> res = Tensor<T>::scalar(static_cast<T>(acc));
    if (!x.requires_grad()) return res;
    auto xn = x.node();
    attach<T>(res, {&x}, [xn](detail::Node<T>& self) {
        auto gx = grad_of(xn);
        const T g = self.grad[0];
        for (auto& v : gx) v += g;
    });
    return res;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    const std::int64_t n = x.numel();
    double acc = 0;
    for (const T v : x.values()) acc += static_cast<double>(v);
    Tensor<T> res = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    if (!x.requires_grad()) return res;
    auto xn = x.node();
    attach<T>(res, {&x}, [xn, n](detail::Node<T>& self) {
        auto gx = grad_of(xn);
        const T g = self.grad[0] / static_cast<T>(n);
        for (auto& v : gx) v += g;
    });
    return res;
}

template <typename T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& targets) {
    check_same_shape(logits.shape(), targets.shape(), "bce_with_logits_mean");
    const std::int64_t n = logits.numel();
    const T* z = logits.values().data();
    const T* t = targets.values().data();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double zi = static_cast<double>(z[i]);
        acc += std::max(zi, 0.0) - zi * static_cast<double>(t[i]) +
               std::log1p(std::exp(-std::abs(zi)));
    }
    Tensor<T> res = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    if (!any_requires_grad<T>({&logits, &targets})) return res;
    auto zn = logits.node(), tn = targets.node();
    attach<T>(res, {&logits, &targets}, [zn, tn, n](detail::Node<T>& self) {
        const T g = self.grad[0] / static_cast<T>(n);
        if (zn->requires_grad) {
            auto gz = grad_of(zn);
            const T* z = zn->value.data();
            const T* t = tn->value.data();
            for (std::int64_t i = 0; i < n; ++i)
                gz[i] += g * (stable_sigmoid(z[i]) - t[i]);
        }
        if (tn->requires_grad) {
            auto gt = grad_of(tn);
            const T* z = zn->value.data();
            for (std::int64_t i = 0; i < n; ++i) gt[i] += g * (-z[i]);
        }
    });
    return res;
}

template <typename T>
Tensor<T> mse_mean(const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred.shape(), target.shape(), "mse_mean");
    const std::int64_t n = pred.numel();
    const T* p = pred.values().data();
    const T* t = target.values().data();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    Tensor<T> res = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    if (!any_requires_grad<T>({&pred, &target})) return res;
    auto pn = pred.node(), tn = target.node();
    attach<T>(res, {&pred, &target}, [pn, tn, n](detail::Node<T>& self) {
        const T g = self.grad[0] * T(2) / static_cast<T>(n);
        const T* p = pn->value.data();
        const T* t = tn->value.data();
        if (pn->requires_grad) {
            auto gp = grad_of(pn);
            for (std::int64_t i = 0; i < n; ++i) gp[i] += g * (p[i] - t[i]);
        }
        if (tn->requires_grad) {
            auto gt = grad_of(tn);
            for (std::int64_t i = 0; i < n; ++i) gt[i] += g * (t[i] - p[i]);
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

#define SUPERDEC_INSTANTIATE_OPS(T)                                                              \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                             \
    template Tensor<T> elementwise<T>(EwKind, const Tensor<T>&, const Tensor<T>*);               \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
    template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                        \
    template std::vector<Tensor<T>> chunk_channels<T>(const Tensor<T>&, int);                    \
    template Tensor<T> pool<T>(PoolKind, const Tensor<T>&);                                      \
    template Tensor<T> avg_pool2x2<T>(const Tensor<T>&);                                         \
    template Tensor<T> upsample<T>(const Tensor<T>&, UpsampleMode, int);                         \
    template Tensor<T> scale_channels<T>(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> scale_spatial<T>(const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                             \
    template Tensor<T> mean_all<T>(const Tensor<T>&);                                            \
    template Tensor<T> bce_with_logits_mean<T>(const Tensor<T>&, const Tensor<T>&);              \
    template Tensor<T> mse_mean<T>(const Tensor<T>&, const Tensor<T>&);

SUPERDEC_INSTANTIATE_OPS(float)
SUPERDEC_INSTANTIATE_OPS(double)

#undef SUPERDEC_INSTANTIATE_OPS

} // namespace superdec
