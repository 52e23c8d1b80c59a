#include "superdec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace superdec {
namespace {

template <typename T>
double max_abs(std::span<const T> v) {
    double m = 0;
    for (const T x : v) m = std::max(m, std::abs(static_cast<double>(x)));
    return m;
}

template <typename T>
double l2_norm(std::span<const T> v) {
    double acc = 0;
    for (const T x : v) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

template <typename T>
double l2_norm_multi(const std::vector<std::vector<T>>& vs) {
    double acc = 0;
    for (const auto& v : vs)
        for (const T x : v) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

template <typename T>
double default_fd_step() {
    return std::cbrt(static_cast<double>(std::numeric_limits<T>::epsilon()));
}

} // namespace

template <typename T>
PrCheck verify_pr(const Tensor<T>& x, double tol) {
    Tensor<T> base = x.detach();
    Tensor<T> rt = idwt_haar(dwt_haar(base));
    double residual = 0;
    const T* a = rt.values().data();
    const T* b = base.values().data();
    for (std::int64_t i = 0; i < base.numel(); ++i)
        residual = std::max(residual, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return PrCheck{residual, residual <= tol};
}

std::string NormEstimate::to_json() const {
    nlohmann::json j{{"sigma", sigma},
                     {"iterations", iterations},
                     {"converged", converged},
                     {"residual", residual}};
    return j.dump();
}

std::string NormEstimate::csv_header() { return "sigma,iterations,converged,residual"; }

std::string NormEstimate::to_csv_row() const {
    std::ostringstream os;
    os << sigma << "," << iterations << "," << (converged ? 1 : 0) << "," << residual;
    return os.str();
}

template <typename T>
NormEstimate jacobian_spectral_norm_multi(
    const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& fn,
    const std::vector<Tensor<T>>& x0, const PowerIterOptions& opts) {
    if (x0.empty()) throw ValueError("jacobian_spectral_norm: no inputs");

    std::vector<Tensor<T>> base;
    base.reserve(x0.size());
    double xmag = 0;
    for (const auto& x : x0) {
        base.push_back(x.detach());
        xmag = std::max(xmag, max_abs<T>(x.values()));
    }
    const double h = (opts.fd_step > 0 ? opts.fd_step : default_fd_step<T>()) * (1.0 + xmag);

    // fixed-seed random unit start direction over the direct sum
    Rng rng(opts.seed);
    std::vector<std::vector<T>> v(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        v[i].resize(static_cast<std::size_t>(base[i].numel()));
        for (auto& e : v[i]) e = static_cast<T>(rng.normal());
    }
    {
        const double nv = l2_norm_multi(v);
        if (nv == 0) throw ValueError("jacobian_spectral_norm: degenerate start vector");
        for (auto& vi : v)
            for (auto& e : vi) e = static_cast<T>(static_cast<double>(e) / nv);
    }

    auto shifted = [&](double scale) {
        std::vector<Tensor<T>> xs;
        xs.reserve(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            Tensor<T> x = base[i].detach();
            auto vals = x.values_mut();
            for (std::size_t j = 0; j < vals.size(); ++j)
                vals[j] += static_cast<T>(scale * static_cast<double>(v[i][j]));
            xs.push_back(std::move(x));
        }
        return xs;
    };

    NormEstimate est;
    double sigma_prev = -1;
    for (int it = 1; it <= opts.max_iters; ++it) {
        est.iterations = it;

        // u = J v by central difference
        Tensor<T> yp = fn(shifted(h));
        Tensor<T> ym = fn(shifted(-h));
        check_same_shape(yp.shape(), ym.shape(), "jacobian_spectral_norm");
        std::vector<T> u(static_cast<std::size_t>(yp.numel()));
        const T* pp = yp.values().data();
        const T* pm = ym.values().data();
        for (std::size_t i = 0; i < u.size(); ++i)
            u[i] = static_cast<T>((static_cast<double>(pp[i]) - static_cast<double>(pm[i])) / (2.0 * h));
        est.sigma = l2_norm<T>(u);
        if (!std::isfinite(est.sigma))
            throw ValueError("jacobian_spectral_norm: non-finite function output");

        est.residual = std::abs(est.sigma - sigma_prev) / std::max(est.sigma, 1e-300);
        if (sigma_prev >= 0 && est.residual <= opts.tol) {
            est.converged = true;
            return est;
        }
        sigma_prev = est.sigma;
        if (est.sigma == 0) {  // v is in the null space; nothing to amplify
            est.converged = true;
            return est;
        }

        // w = J^T u by reverse mode: d/dx <fn(x), u>
        std::vector<Tensor<T>> xs;
        xs.reserve(base.size());
        for (const auto& b : base) {
            Tensor<T> x = b.detach();
            x.set_requires_grad(true);
            xs.push_back(std::move(x));
        }
        Tensor<T> y = fn(xs);
        Tensor<T> loss = sum_all(mul(y, Tensor<T>::from_data(y.shape(), std::move(u))));
        backward(loss);

        std::vector<std::vector<T>> w(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (xs[i].has_grad()) {
                auto g = xs[i].grad();
                w[i].assign(g.begin(), g.end());
            } else {
                w[i].assign(static_cast<std::size_t>(base[i].numel()), T(0));
            }
        }
        const double nw = l2_norm_multi(w);
        if (nw == 0) {  // u orthogonal to the range; current sigma is the answer
            est.converged = true;
            return est;
        }
        for (auto& wi : w)
            for (auto& e : wi) e = static_cast<T>(static_cast<double>(e) / nw);
        v = std::move(w);
    }
    est.converged = false;
    return est;
}

template <typename T>
NormEstimate jacobian_spectral_norm(const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                                    const Tensor<T>& x0, const PowerIterOptions& opts) {
    auto wrapped = [&fn](const std::vector<Tensor<T>>& xs) { return fn(xs[0]); };
    return jacobian_spectral_norm_multi<T>(wrapped, {x0}, opts);
}

template <typename T>
StageBoundReport stage_bound_check(const Model<T>& model, const Tensor<T>& x,
                                   const PowerIterOptions& opts, double slack) {
    if (model.spec().decoder != DecoderKind::super)
        throw ValueError("stage_bound_check: model must use the super decoder");

    InferenceGuard<T> guard(model);
    auto trace = model.forward_trace(x.detach());
    const int depth = model.depth();

    StageBoundReport rep;
    rep.bound = 1.0;
    for (int k = 1; k <= depth; ++k) {
        // deeper input frozen at its realized forward value
        Tensor<T> frozen = (k == depth ? trace.bottleneck_out
                                       : trace.decoder_outs[static_cast<std::size_t>(k)])
                               .detach();
        auto suppression = [&model, k, frozen](const Tensor<T>& e) {
            return sub(e, model.run_decoder_stage(k, e, frozen));
        };
        NormEstimate est = jacobian_spectral_norm<T>(
            suppression, trace.skips[static_cast<std::size_t>(k - 1)], opts);
        rep.eps_per_stage.push_back(est.sigma);
        rep.stage_estimates.push_back(est);
        rep.bound *= 1.0 + est.sigma;
    }

    std::vector<Tensor<T>> inputs;
    for (const auto& s : trace.skips) inputs.push_back(s.detach());
    inputs.push_back(trace.bottleneck_out.detach());
    auto decoder = [&model, depth](const std::vector<Tensor<T>>& xs) {
        std::vector<Tensor<T>> skips(xs.begin(), xs.begin() + depth);
        return model.decode(skips, xs[static_cast<std::size_t>(depth)]);
    };
    rep.total_estimate = jacobian_spectral_norm_multi<T>(decoder, inputs, opts);
    rep.sigma_total = rep.total_estimate.sigma;

    rep.contraction_premise = std::all_of(rep.eps_per_stage.begin(), rep.eps_per_stage.end(),
                                          [](double e) { return e < 1.0; });
    rep.pass = rep.sigma_total <= rep.bound * (1.0 + slack);
    return rep;
}

template <typename T>
std::vector<double> suppression_residual(const Model<T>& model, const Tensor<T>& x) {
    InferenceGuard<T> guard(model);
    auto trace = model.forward_trace(x.detach());
    std::vector<double> ratios;
    for (int k = 1; k <= model.depth(); ++k) {
        const auto& skip = trace.skips[static_cast<std::size_t>(k - 1)];
        const auto& out = trace.decoder_outs[static_cast<std::size_t>(k - 1)];
        const double denom = l2_norm<T>(skip.values());
        if (denom == 0)
            throw ValueError("suppression_residual: zero-norm skip at stage " + std::to_string(k));
        double acc = 0;
        const T* a = out.values().data();
        const T* b = skip.values().data();
        for (std::int64_t i = 0; i < skip.numel(); ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            acc += d * d;
        }
        ratios.push_back(std::sqrt(acc) / denom);
    }
    return ratios;
}

template <typename T>
double model_grad_check(Model<T>& model, const Tensor<T>& x, double step) {
    if (step <= 0) throw ValueError("model_grad_check: step must be positive");
    const Tensor<T> probe = x.detach();

    // Loss is mean(out^2) scaled by 1e-3: the scale puts negligible gradient
    // coordinates under the 1e-8 relative-error floor, where the
    // central-difference round-off noise (~eps*|loss|/step) would otherwise
    // dominate the comparison.
    const T loss_scale = T(1e-3);

    model.zero_grads();
    Tensor<T> out = model.forward(probe);
    backward(mul(mean_all(mul(out, out)), Tensor<T>::scalar(loss_scale)));
    std::vector<std::vector<T>> analytic;
    for (const auto& p : model.parameters()) {
        auto g = p.value.grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    auto loss_at = [&]() {
        InferenceGuard<T> guard(model);
        Tensor<T> out = model.forward(probe);
        double acc = 0;
        for (const T v : out.values()) acc += static_cast<double>(v) * static_cast<double>(v);
        return static_cast<double>(loss_scale) * acc / static_cast<double>(out.numel());
    };

    double worst = 0;
    auto& params = model.parameters();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto vals = params[pi].value.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const T orig = vals[i];
            vals[i] = orig + static_cast<T>(step);
            const double fp = loss_at();
            vals[i] = orig - static_cast<T>(step);
            const double fm = loss_at();
            vals[i] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = static_cast<double>(analytic[pi][i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// MAC accounting
// ---------------------------------------------------------------------------

namespace {

struct MacBuilder {
    std::vector<MacRow> rows;

    void add(std::string name, const Shape4& out, std::int64_t macs, std::int64_t params = 0) {
        rows.push_back(MacRow{std::move(name), out, macs, params, out.numel()});
    }

    // conv + its parameter count; kernel k x k, stride 1, padding preserving H/W
    Shape4 conv(const std::string& name, const Shape4& in, int cout, int k) {
        const Shape4 out{in.b, cout, in.h, in.w};
        add(name, out, conv2d_macs(in.b, in.c, cout, out.h, out.w, k, k),
            static_cast<std::int64_t>(cout) * in.c * k * k + cout);
        return out;
    }

    Shape4 unary(const std::string& name, const Shape4& s, std::int64_t per_elt) {
        add(name, s, s.numel() * per_elt);
        return s;
    }

    void double_conv(const std::string& prefix, Shape4& s, int cout, bool final_relu) {
        s = conv(prefix + ".conv1", s, cout, 3);
        s = unary(prefix + ".relu1", s, mac_cost::relu);
        s = conv(prefix + ".conv2", s, cout, 3);
        if (final_relu) s = unary(prefix + ".relu2", s, mac_cost::relu);
    }

    void cbam(const std::string& prefix, const Shape4& s, int reduction, int spatial_kernel) {
        const std::int64_t reduced = std::max<std::int64_t>(1, s.c / std::max(1, reduction));
        const Shape4 pooled{s.b, s.c, 1, 1};
        add(prefix + ".avg_pool", pooled, s.numel() * mac_cost::pool_per_input);
        add(prefix + ".max_pool", pooled, s.numel() * mac_cost::pool_per_input);
        // shared MLP applied to both pooled descriptors
        const std::int64_t mlp1_params = static_cast<std::int64_t>(reduced) * s.c + reduced;
        const std::int64_t mlp2_params = static_cast<std::int64_t>(s.c) * reduced + s.c;
        add(prefix + ".mlp1", Shape4{s.b, reduced, 1, 1},
            2 * conv2d_macs(s.b, s.c, reduced, 1, 1, 1, 1), mlp1_params);
        add(prefix + ".mlp1_relu", Shape4{s.b, reduced, 1, 1},
            2 * s.b * reduced * mac_cost::relu);
        add(prefix + ".mlp2", pooled, 2 * conv2d_macs(s.b, reduced, s.c, 1, 1, 1, 1), mlp2_params);
        add(prefix + ".channel_gate", pooled,
            pooled.numel() * (mac_cost::elementwise + mac_cost::sigmoid));
        add(prefix + ".channel_scale", s, s.numel() * mac_cost::elementwise);
        const Shape4 spatial{s.b, 1, s.h, s.w};
        add(prefix + ".spatial_mean", spatial, s.numel() * mac_cost::pool_per_input);
        add(prefix + ".spatial_max", spatial, s.numel() * mac_cost::pool_per_input);
        add(prefix + ".spatial_conv", spatial,
            conv2d_macs(s.b, 2, 1, s.h, s.w, spatial_kernel, spatial_kernel),
            static_cast<std::int64_t>(2) * spatial_kernel * spatial_kernel + 1);
        add(prefix + ".spatial_gate", spatial, spatial.numel() * mac_cost::sigmoid);
        add(prefix + ".spatial_scale", s, s.numel() * mac_cost::elementwise);
    }
};

} // namespace

MacReport count_macs(const ModelSpec& spec, const Shape4& input_shape) {
    spec.validate();
    const std::int64_t div = std::int64_t(1) << spec.depth;
    if (input_shape.h % div != 0 || input_shape.w % div != 0)
        throw ShapeError("count_macs: input " + input_shape.str() + " not divisible by 2^depth");
    if (input_shape.c != spec.in_channels)
        throw ShapeError("count_macs: input channels " + std::to_string(input_shape.c) +
                         " != spec in_channels " + std::to_string(spec.in_channels));

    MacBuilder mb;
    Shape4 s = input_shape;
    std::vector<Shape4> skip_shapes;
    for (int k = 1; k <= spec.depth; ++k) {
        const std::string prefix = "enc.stage" + std::to_string(k);
        mb.double_conv(prefix, s, spec.stage_channels(k), true);
        skip_shapes.push_back(s);
        s = Shape4{s.b, s.c, s.h / 2, s.w / 2};
        mb.add(prefix + ".pool", s, s.numel() * mac_cost::avg_pool2x2);
    }
    mb.double_conv("bottleneck", s, spec.stage_channels(spec.depth + 1), true);

    for (int k = spec.depth; k >= 1; --k) {
        const std::string prefix = "dec.stage" + std::to_string(k);
        const Shape4 skip = skip_shapes[static_cast<std::size_t>(k - 1)];
        const int ck = spec.stage_channels(k);
        if (spec.decoder == DecoderKind::super) {
            const Shape4 bands{skip.b, 4 * ck, skip.h / 2, skip.w / 2};
            mb.add(prefix + ".dwt", bands, bands.numel() * mac_cost::dwt);
            Shape4 fd_in = bands;
            if (spec.fusion == FusionMode::sum_ll) {
                const Shape4 ll{skip.b, ck, skip.h / 2, skip.w / 2};
                mb.add(prefix + ".proj", ll, conv2d_macs(s.b, s.c, ck, s.h, s.w, 1, 1),
                       static_cast<std::int64_t>(ck) * s.c + ck);
                mb.add(prefix + ".fuse_add", ll, ll.numel() * mac_cost::elementwise);
            } else {
                fd_in = Shape4{bands.b, bands.c + s.c, bands.h, bands.w};
            }
            Shape4 t = fd_in;
            mb.double_conv(prefix + ".fd", t, 4 * ck, false);
            if (spec.use_cbam) mb.cbam(prefix + ".cbam", t, 4, 7);
            mb.add(prefix + ".sub", bands, bands.numel() * mac_cost::elementwise);
            s = skip;
            mb.add(prefix + ".idwt", s, s.numel() * mac_cost::idwt);
        } else {
            const Shape4 up{s.b, s.c, s.h * 2, s.w * 2};
            mb.add(prefix + ".upsample", up, up.numel() * mac_cost::upsample_bilinear);
            Shape4 t{skip.b, skip.c + up.c, skip.h, skip.w};
            mb.double_conv(prefix + ".fd", t, ck, true);
            s = t;
        }
    }
    mb.conv("head", s, 1, 1);

    MacReport rep;
    rep.rows = std::move(mb.rows);
    for (const auto& r : rep.rows) {
        rep.total_macs += r.macs;
        rep.total_params += r.params;
    }
    return rep;
}

std::string MacReport::to_csv() const {
    std::ostringstream os;
    os << "name,output_shape,macs,params,element_volume\n";
    for (const auto& r : rows)
        os << r.name << "," << r.output_shape.str() << "," << r.macs << "," << r.params << ","
           << r.element_volume << "\n";
    os << "total,," << total_macs << "," << total_params << ",\n";
    return os.str();
}

std::string MacReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"name", r.name},
                             {"output_shape", {r.output_shape.b, r.output_shape.c,
                                               r.output_shape.h, r.output_shape.w}},
                             {"macs", r.macs},
                             {"params", r.params},
                             {"element_volume", r.element_volume}});
    nlohmann::json j{{"rows", rows_json},
                     {"total_macs", total_macs},
                     {"total_params", total_params}};
    return j.dump(2);
}

#define SUPERDEC_INSTANTIATE_ANALYSIS(T)                                                       \
    template PrCheck verify_pr<T>(const Tensor<T>&, double);                                   \
    template NormEstimate jacobian_spectral_norm<T>(                                           \
        const std::function<Tensor<T>(const Tensor<T>&)>&, const Tensor<T>&,                   \
        const PowerIterOptions&);                                                              \
    template NormEstimate jacobian_spectral_norm_multi<T>(                                     \
        const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>&,                        \
        const std::vector<Tensor<T>>&, const PowerIterOptions&);                               \
    template StageBoundReport stage_bound_check<T>(const Model<T>&, const Tensor<T>&,          \
                                                   const PowerIterOptions&, double);           \
    template std::vector<double> suppression_residual<T>(const Model<T>&, const Tensor<T>&);   \
    template double model_grad_check<T>(Model<T>&, const Tensor<T>&, double);

SUPERDEC_INSTANTIATE_ANALYSIS(float)
SUPERDEC_INSTANTIATE_ANALYSIS(double)

#undef SUPERDEC_INSTANTIATE_ANALYSIS

} // namespace superdec
