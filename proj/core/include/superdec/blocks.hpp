#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "superdec/ops.hpp"
#include "superdec/wavelet.hpp"

namespace superdec {

enum class DecoderKind { super, baseline };
enum class FusionMode { sum_ll, concat };

// Two 3x3 convolutions, pad 1. The hidden width equals out_channels. The
// decoder residual branch drops the final relu so a zero-initialized final
// conv both starts at an exact zero output and still receives gradient.
struct DoubleConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    bool final_relu = true;
    bool zero_init_final = false;
};

struct CbamSpec {
    int channels = 0;
    int reduction = 4;
    int spatial_kernel = 7;  // odd
};

struct SuperBlockConfig {
    int skip_channels = 0;    // C_k
    int deeper_channels = 0;  // C_{k+1}
    FusionMode fusion = FusionMode::sum_ll;
    bool use_cbam = true;
    bool zero_init_fd = true;
};

// Toy U-Net: L encoder stages with doubling widths, bottleneck, L decoder
// stages of the chosen kind, 1x1 head to one channel.
struct ModelSpec {
    int depth = 2;
    int in_channels = 1;
    int stem_channels = 8;
    DecoderKind decoder = DecoderKind::super;
    FusionMode fusion = FusionMode::sum_ll;
    bool use_cbam = true;
    bool zero_init_fd = true;
    double init_gain = 1.0;

    // C_k for stage k in [1, depth+1]; stage depth+1 is the bottleneck width.
    int stage_channels(int k) const { return stem_channels << (k - 1); }
    void validate() const;
};

// Named-parameter registry. Initial values come from a per-name stream
// (hash of seed and name), so two models sharing parameter names share
// initial values regardless of construction order — this is what makes
// super/baseline comparisons encoder-paired at equal seeds.
template <typename T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    // He-uniform over fan_in = cin*kh*kw, scaled by gain; zero => all zeros.
    Tensor<T> conv_weight(const std::string& name, int cout, int cin, int kh, int kw,
                          double gain = 1.0, bool zero = false);
    Tensor<T> zeros_bias(const std::string& name, int channels);

    std::vector<Parameter<T>>& params() { return params_; }
    const std::vector<Parameter<T>>& params() const { return params_; }
    Parameter<T>* find(const std::string& name);
    std::uint64_t seed() const { return seed_; }

private:
    Tensor<T> insert(const std::string& name, Tensor<T> t);

    std::uint64_t seed_;
    std::vector<Parameter<T>> params_;
};

template <typename T>
struct DoubleConv {
    DoubleConvSpec spec;
    Tensor<T> w1, b1, w2, b2;

    static DoubleConv create(const DoubleConvSpec& spec, const std::string& prefix,
                             ParamStore<T>& store, double gain);
    Tensor<T> forward(const Tensor<T>& x) const;
};

// Channel gate sigmoid(MLP(avgpool) + MLP(maxpool)) followed by a spatial
// gate sigmoid(conv_k([mean_c; max_c])) on the channel-refined feature.
// Both gates are in (0,1), so cbam(0) = 0 and |cbam(x)| <= |x| elementwise.
template <typename T>
struct Cbam {
    CbamSpec spec;
    Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    Tensor<T> sp_w, sp_b;

    static Cbam create(const CbamSpec& spec, const std::string& prefix,
                       ParamStore<T>& store, double gain);
    Tensor<T> forward(const Tensor<T>& x) const;
};

// One suppressed-reconstruction decoder stage:
//   bands <- dwt(x_e), stacked to [B,4C,H/2,W/2]
//   fused <- bands with x_d projected into the LL slice (or concatenated)
//   res   <- cbam(fd(fused)), 4C channels
//   out   <- idwt(bands - res)
// With fd's final conv at zero this is the identity on x_e.
template <typename T>
struct SuperBlock {
    SuperBlockConfig cfg;
    Tensor<T> proj_w, proj_b;  // 1x1 projection C_{k+1} -> C_k (sum_ll mode)
    DoubleConv<T> fd;
    Cbam<T> cbam;

    static SuperBlock create(const SuperBlockConfig& cfg, const std::string& prefix,
                             ParamStore<T>& store, double gain);
    Tensor<T> forward(const Tensor<T>& x_e, const Tensor<T>& x_d) const;
};

// Conventional control arm: bilinear-upsample the deeper feature, concat
// [x_e; up(x_d)], DoubleConv down to C_k.
template <typename T>
struct BaselineDecoderBlock {
    int skip_channels = 0;
    int deeper_channels = 0;
    DoubleConv<T> fd;

    static BaselineDecoderBlock create(int skip_channels, int deeper_channels,
                                       const std::string& prefix, ParamStore<T>& store,
                                       double gain);
    Tensor<T> forward(const Tensor<T>& x_e, const Tensor<T>& x_d) const;
};

// DoubleConv features followed by 2x2 stride-2 average pooling; returns the
// pre-pool features (the skip) and the pooled output.
template <typename T>
struct EncoderStage {
    DoubleConv<T> fe;

    static EncoderStage create(int in_channels, int out_channels, const std::string& prefix,
                               ParamStore<T>& store, double gain);
    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x) const;
};

template <typename T>
class Model {
public:
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    static Model build(const ModelSpec& spec, std::uint64_t seed);

    Tensor<T> forward(const Tensor<T>& x) const;

    struct Trace {
        std::vector<Tensor<T>> skips;         // [k-1] = stage-k skip, stage 1 finest
        Tensor<T> bottleneck_out;
        std::vector<Tensor<T>> decoder_outs;  // [k-1] = stage-k output; [0] feeds the head
        Tensor<T> head_out;
    };
    Trace forward_trace(const Tensor<T>& x) const;

    // Runs the decoder alone from explicit inputs (skips[k-1] for stage k,
    // deepest in place of the bottleneck output). Returns the pre-head output.
    Tensor<T> decode(const std::vector<Tensor<T>>& skips, const Tensor<T>& deepest) const;

    Tensor<T> run_decoder_stage(int k, const Tensor<T>& skip, const Tensor<T>& deeper) const;

    const ModelSpec& spec() const { return spec_; }
    int depth() const { return spec_.depth; }
    std::uint64_t seed() const { return seed_; }
    std::vector<Parameter<T>>& parameters() { return store_.params(); }
    const std::vector<Parameter<T>>& parameters() const { return store_.params(); }
    Parameter<T>* find_parameter(const std::string& name) { return store_.find(name); }
    std::int64_t parameter_count() const;
    void zero_grads();

    const SuperBlock<T>& super_stage(int k) const { return super_.at(static_cast<std::size_t>(k - 1)); }

private:
    explicit Model(std::uint64_t seed) : store_(seed), seed_(seed) {}

    ModelSpec spec_;
    ParamStore<T> store_;
    std::uint64_t seed_ = 0;
    std::vector<EncoderStage<T>> enc_;
    DoubleConv<T> bottleneck_;
    std::vector<SuperBlock<T>> super_;
    std::vector<BaselineDecoderBlock<T>> base_;
    Tensor<T> head_w_, head_b_;
};

template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
    return Model<T>::build(spec, seed);
}

// Temporarily drops requires_grad on all model parameters so forward passes
// record no graph and touch no parameter gradients; restores the flags on
// scope exit.
template <typename T>
class InferenceGuard {
public:
    explicit InferenceGuard(const Model<T>& m) {
        for (const auto& p : m.parameters()) {
            auto n = p.value.node();
            saved_.emplace_back(n, n->requires_grad);
            n->requires_grad = false;
        }
    }
    ~InferenceGuard() {
        for (auto& [n, flag] : saved_) n->requires_grad = flag;
    }
    InferenceGuard(const InferenceGuard&) = delete;
    InferenceGuard& operator=(const InferenceGuard&) = delete;

private:
    std::vector<std::pair<typename Tensor<T>::NodePtr, bool>> saved_;
};

} // namespace superdec
