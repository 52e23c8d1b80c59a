#include "superdec/blocks.hpp"

#include <algorithm>
#include <cmath>

namespace superdec {

void ModelSpec::validate() const {
    if (depth < 1) throw ValueError("model: depth must be >= 1");
    if (in_channels < 1) throw ValueError("model: in_channels must be >= 1");
    if (stem_channels < 1) throw ValueError("model: stem_channels must be >= 1");
    if (init_gain < 0) throw ValueError("model: init_gain must be >= 0");
}

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> ParamStore<T>::insert(const std::string& name, Tensor<T> t) {
    for (const auto& p : params_)
        if (p.name == name) throw ValueError("parameter name not unique: '" + name + "'");
    t.set_requires_grad(true);
    t.set_name(name);
    params_.push_back(Parameter<T>{name, t});
    return t;
}

template <typename T>
Tensor<T> ParamStore<T>::conv_weight(const std::string& name, int cout, int cin, int kh, int kw,
                                     double gain, bool zero) {
    const Shape4 s{cout, cin, kh, kw};
    if (zero || gain == 0.0) return insert(name, Tensor<T>::zeros(s));
    Rng rng(hash_name(seed_, name));
    const double fan_in = static_cast<double>(cin) * kh * kw;
    const double bound = gain * std::sqrt(6.0 / fan_in);
    return insert(name, Tensor<T>::uniform(s, rng, static_cast<T>(-bound), static_cast<T>(bound)));
}

template <typename T>
Tensor<T> ParamStore<T>::zeros_bias(const std::string& name, int channels) {
    return insert(name, Tensor<T>::zeros(Shape4{1, channels, 1, 1}));
}

template <typename T>
Parameter<T>* ParamStore<T>::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

// ---------------------------------------------------------------------------
// DoubleConv
// ---------------------------------------------------------------------------

template <typename T>
DoubleConv<T> DoubleConv<T>::create(const DoubleConvSpec& spec, const std::string& prefix,
                                    ParamStore<T>& store, double gain) {
    if (spec.in_channels < 1 || spec.out_channels < 1)
        throw ValueError("double_conv: channel counts must be >= 1 at " + prefix);
    DoubleConv dc;
    dc.spec = spec;
    dc.w1 = store.conv_weight(prefix + ".conv1.weight", spec.out_channels, spec.in_channels, 3, 3, gain);
    dc.b1 = store.zeros_bias(prefix + ".conv1.bias", spec.out_channels);
    dc.w2 = store.conv_weight(prefix + ".conv2.weight", spec.out_channels, spec.out_channels, 3, 3,
                              gain, spec.zero_init_final);
    dc.b2 = store.zeros_bias(prefix + ".conv2.bias", spec.out_channels);
    return dc;
}

template <typename T>
Tensor<T> DoubleConv<T>::forward(const Tensor<T>& x) const {
    Tensor<T> h = relu(conv2d(x, w1, b1, 1, 1));
    Tensor<T> y = conv2d(h, w2, b2, 1, 1);
    return spec.final_relu ? relu(y) : y;
}

// ---------------------------------------------------------------------------
// CBAM
// ---------------------------------------------------------------------------

template <typename T>
Cbam<T> Cbam<T>::create(const CbamSpec& spec, const std::string& prefix, ParamStore<T>& store,
                        double gain) {
    if (spec.spatial_kernel % 2 == 0)
        throw ValueError("cbam: spatial kernel must be odd at " + prefix);
    Cbam cb;
    cb.spec = spec;
    const int reduced = std::max(1, spec.channels / std::max(1, spec.reduction));
    cb.mlp_w1 = store.conv_weight(prefix + ".mlp1.weight", reduced, spec.channels, 1, 1, gain);
    cb.mlp_b1 = store.zeros_bias(prefix + ".mlp1.bias", reduced);
    cb.mlp_w2 = store.conv_weight(prefix + ".mlp2.weight", spec.channels, reduced, 1, 1, gain);
    cb.mlp_b2 = store.zeros_bias(prefix + ".mlp2.bias", spec.channels);
    cb.sp_w = store.conv_weight(prefix + ".spatial.weight", 1, 2, spec.spatial_kernel,
                                spec.spatial_kernel, gain);
    cb.sp_b = store.zeros_bias(prefix + ".spatial.bias", 1);
    return cb;
}

template <typename T>
Tensor<T> Cbam<T>::forward(const Tensor<T>& x) const {
    if (x.shape().c != spec.channels)
        throw ShapeError("cbam: channel mismatch, got " + std::to_string(x.shape().c) +
                         " expected " + std::to_string(spec.channels));
    // channel attention: shared MLP over both pooled descriptors
    Tensor<T> avg = pool(PoolKind::global_avg, x);
    Tensor<T> mx = pool(PoolKind::global_max, x);
    Tensor<T> ha = conv2d(relu(conv2d(avg, mlp_w1, mlp_b1)), mlp_w2, mlp_b2);
    Tensor<T> hm = conv2d(relu(conv2d(mx, mlp_w1, mlp_b1)), mlp_w2, mlp_b2);
    Tensor<T> mc = sigmoid(add(ha, hm));
    Tensor<T> xc = scale_channels(x, mc);
    // spatial attention on the channel-refined feature
    Tensor<T> sm = pool(PoolKind::spatial_mean_over_channels, xc);
    Tensor<T> sx = pool(PoolKind::spatial_max_over_channels, xc);
    Tensor<T> ms = sigmoid(conv2d(concat_channels<T>({sm, sx}), sp_w, sp_b, 1,
                                  (spec.spatial_kernel - 1) / 2));
    return scale_spatial(xc, ms);
}

// ---------------------------------------------------------------------------
// SuperBlock
// ---------------------------------------------------------------------------

template <typename T>
SuperBlock<T> SuperBlock<T>::create(const SuperBlockConfig& cfg, const std::string& prefix,
                                    ParamStore<T>& store, double gain) {
    SuperBlock blk;
    blk.cfg = cfg;
    const int bands_c = 4 * cfg.skip_channels;
    int fd_in = bands_c;
    if (cfg.fusion == FusionMode::sum_ll) {
        blk.proj_w = store.conv_weight(prefix + ".proj.weight", cfg.skip_channels,
                                       cfg.deeper_channels, 1, 1, gain);
        blk.proj_b = store.zeros_bias(prefix + ".proj.bias", cfg.skip_channels);
    } else {
        fd_in = bands_c + cfg.deeper_channels;
    }
    DoubleConvSpec fd_spec{fd_in, bands_c, /*final_relu=*/false, cfg.zero_init_fd};
    blk.fd = DoubleConv<T>::create(fd_spec, prefix + ".fd", store, gain);
    if (cfg.use_cbam)
        blk.cbam = Cbam<T>::create(CbamSpec{bands_c}, prefix + ".cbam", store, gain);
    return blk;
}

template <typename T>
Tensor<T> SuperBlock<T>::forward(const Tensor<T>& x_e, const Tensor<T>& x_d) const {
    const Shape4& es = x_e.shape();
    const Shape4& ds = x_d.shape();
    if (es.c != cfg.skip_channels)
        throw ShapeError("super_block: skip has " + std::to_string(es.c) + " channels, expected " +
                         std::to_string(cfg.skip_channels));
    if (ds.c != cfg.deeper_channels)
        throw ShapeError("super_block: deeper input has " + std::to_string(ds.c) +
                         " channels, expected " + std::to_string(cfg.deeper_channels));
    if (ds.h * 2 != es.h || ds.w * 2 != es.w || ds.b != es.b)
        throw ShapeError("super_block: deeper resolution " + ds.str() +
                         " is not exactly half of skip " + es.str());

    Tensor<T> stacked = stack_bands(dwt_haar(x_e));

    Tensor<T> fused;
    if (cfg.fusion == FusionMode::sum_ll) {
        // project the deeper feature and add it into the LL slice only
        Tensor<T> proj = conv2d(x_d, proj_w, proj_b);
        auto parts = chunk_channels(stacked, 4);
        fused = concat_channels<T>({add(parts[0], proj), parts[1], parts[2], parts[3]});
    } else {
        fused = concat_channels<T>({stacked, x_d});
    }

    Tensor<T> res = fd.forward(fused);
    if (res.shape().c != 4 * cfg.skip_channels)
        throw ShapeError("super_block: fd produced " + std::to_string(res.shape().c) +
                         " channels, expected " + std::to_string(4 * cfg.skip_channels));
    if (cfg.use_cbam) res = cbam.forward(res);

    return idwt_haar(unstack_bands(sub(stacked, res)));
}

// ---------------------------------------------------------------------------
// Baseline decoder / encoder stages
// ---------------------------------------------------------------------------

template <typename T>
BaselineDecoderBlock<T> BaselineDecoderBlock<T>::create(int skip_channels, int deeper_channels,
                                                        const std::string& prefix,
                                                        ParamStore<T>& store, double gain) {
    BaselineDecoderBlock blk;
    blk.skip_channels = skip_channels;
    blk.deeper_channels = deeper_channels;
    blk.fd = DoubleConv<T>::create(DoubleConvSpec{skip_channels + deeper_channels, skip_channels},
                                   prefix + ".fd", store, gain);
    return blk;
}

template <typename T>
Tensor<T> BaselineDecoderBlock<T>::forward(const Tensor<T>& x_e, const Tensor<T>& x_d) const {
    const Shape4& es = x_e.shape();
    const Shape4& ds = x_d.shape();
    if (ds.h * 2 != es.h || ds.w * 2 != es.w || ds.b != es.b)
        throw ShapeError("baseline_decoder: deeper resolution " + ds.str() +
                         " is not exactly half of skip " + es.str());
    Tensor<T> up = upsample(x_d, UpsampleMode::bilinear);
    return fd.forward(concat_channels<T>({x_e, up}));
}

template <typename T>
EncoderStage<T> EncoderStage<T>::create(int in_channels, int out_channels,
                                        const std::string& prefix, ParamStore<T>& store,
                                        double gain) {
    EncoderStage st;
    st.fe = DoubleConv<T>::create(DoubleConvSpec{in_channels, out_channels}, prefix, store, gain);
    return st;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> EncoderStage<T>::forward(const Tensor<T>& x) const {
    Tensor<T> skip = fe.forward(x);
    return {skip, avg_pool2x2(skip)};
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <typename T>
Model<T> Model<T>::build(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Model m(seed);
    m.spec_ = spec;
    const double g = spec.init_gain;

    int cin = spec.in_channels;
    for (int k = 1; k <= spec.depth; ++k) {
        const int cout = spec.stage_channels(k);
        m.enc_.push_back(EncoderStage<T>::create(cin, cout, "enc.stage" + std::to_string(k),
                                                 m.store_, g));
        cin = cout;
    }
    const int cbot = spec.stage_channels(spec.depth + 1);
    m.bottleneck_ = DoubleConv<T>::create(DoubleConvSpec{cin, cbot}, "bottleneck", m.store_, g);

    for (int k = 1; k <= spec.depth; ++k) {
        const std::string prefix = "dec.stage" + std::to_string(k);
        const int ck = spec.stage_channels(k);
        const int cdeep = spec.stage_channels(k + 1);
        if (spec.decoder == DecoderKind::super) {
            m.super_.push_back(SuperBlock<T>::create(
                SuperBlockConfig{ck, cdeep, spec.fusion, spec.use_cbam, spec.zero_init_fd},
                prefix, m.store_, g));
        } else {
            m.base_.push_back(BaselineDecoderBlock<T>::create(ck, cdeep, prefix, m.store_, g));
        }
    }

    m.head_w_ = m.store_.conv_weight("head.weight", 1, spec.stage_channels(1), 1, 1, g);
    m.head_b_ = m.store_.zeros_bias("head.bias", 1);
    return m;
}

template <typename T>
Tensor<T> Model<T>::run_decoder_stage(int k, const Tensor<T>& skip, const Tensor<T>& deeper) const {
    if (k < 1 || k > spec_.depth) throw ValueError("decoder stage out of range");
    if (spec_.decoder == DecoderKind::super)
        return super_[static_cast<std::size_t>(k - 1)].forward(skip, deeper);
    return base_[static_cast<std::size_t>(k - 1)].forward(skip, deeper);
}

template <typename T>
Tensor<T> Model<T>::decode(const std::vector<Tensor<T>>& skips, const Tensor<T>& deepest) const {
    if (static_cast<int>(skips.size()) != spec_.depth)
        throw ShapeError("decode: expected " + std::to_string(spec_.depth) + " skip inputs");
    Tensor<T> d = deepest;
    for (int k = spec_.depth; k >= 1; --k)
        d = run_decoder_stage(k, skips[static_cast<std::size_t>(k - 1)], d);
    return d;
}

template <typename T>
typename Model<T>::Trace Model<T>::forward_trace(const Tensor<T>& x) const {
    const Shape4& s = x.shape();
    const std::int64_t div = std::int64_t(1) << spec_.depth;
    if (s.c != spec_.in_channels)
        throw ShapeError("model: input has " + std::to_string(s.c) + " channels, expected " +
                         std::to_string(spec_.in_channels));
    if (s.h % div != 0 || s.w % div != 0)
        throw ShapeError("model: input " + s.str() + " not divisible by 2^depth = " +
                         std::to_string(div));

    Trace tr;
    Tensor<T> cur = x;
    for (const auto& stage : enc_) {
        auto [skip, pooled] = stage.forward(cur);
        tr.skips.push_back(skip);
        cur = pooled;
    }
    tr.bottleneck_out = bottleneck_.forward(cur);

    tr.decoder_outs.assign(static_cast<std::size_t>(spec_.depth), Tensor<T>{});
    Tensor<T> d = tr.bottleneck_out;
    for (int k = spec_.depth; k >= 1; --k) {
        d = run_decoder_stage(k, tr.skips[static_cast<std::size_t>(k - 1)], d);
        tr.decoder_outs[static_cast<std::size_t>(k - 1)] = d;
    }
    tr.head_out = conv2d(d, head_w_, head_b_);
    return tr;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x) const {
    return forward_trace(x).head_out;
}

template <typename T>
std::int64_t Model<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : store_.params()) n += p.value.numel();
    return n;
}

template <typename T>
void Model<T>::zero_grads() {
    for (auto& p : store_.params()) p.value.zero_grad();
}

#define SUPERDEC_INSTANTIATE_BLOCKS(T)  \
    template class ParamStore<T>;       \
    template struct DoubleConv<T>;      \
    template struct Cbam<T>;            \
    template struct SuperBlock<T>;      \
    template struct BaselineDecoderBlock<T>; \
    template struct EncoderStage<T>;    \
    template class Model<T>;

SUPERDEC_INSTANTIATE_BLOCKS(float)
SUPERDEC_INSTANTIATE_BLOCKS(double)

#undef SUPERDEC_INSTANTIATE_BLOCKS

} // namespace superdec
