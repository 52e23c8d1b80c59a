#pragma once

#include <functional>

#include "superdec/blocks.hpp"

namespace superdec {

struct PrCheck {
    double max_abs_residual = 0;
    bool pass = false;
};

// Round-trip residual ||idwt(dwt(x)) - x||_inf against a tolerance.
template <typename T>
PrCheck verify_pr(const Tensor<T>& x, double tol);

struct PowerIterOptions {
    int max_iters = 200;
    double tol = 1e-6;  // relative change in sigma between iterations
    std::uint64_t seed = 0x5eedULL;
    double fd_step = 0;  // 0 => dtype- and scale-aware default
};

struct NormEstimate {
    double sigma = 0;  // estimate of the largest singular value (converges from below)
    int iterations = 0;
    bool converged = false;
    double residual = 0;  // relative change at the last iteration

    std::string to_json() const;
    static std::string csv_header();  // "sigma,iterations,converged,residual"
    std::string to_csv_row() const;
};

// Power iteration on J^T J at x0: one central-difference Jacobian-vector
// product and one reverse-mode vector-Jacobian product per step.
// Non-convergence within max_iters still returns the last estimate.
template <typename T>
NormEstimate jacobian_spectral_norm(const std::function<Tensor<T>(const Tensor<T>&)>& fn,
                                    const Tensor<T>& x0, const PowerIterOptions& opts = {});

// Same iteration over a direct sum of inputs (Euclidean norm across the
// tuple). Used for the joint Jacobian of the full decoder.
template <typename T>
NormEstimate jacobian_spectral_norm_multi(
    const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& fn,
    const std::vector<Tensor<T>>& x0, const PowerIterOptions& opts = {});

struct StageBoundReport {
    std::vector<double> eps_per_stage;  // sigma of e -> e - stage(e, frozen deeper)
    double sigma_total = 0;             // joint Jacobian norm of the full decoder map
    double bound = 0;                   // prod_k (1 + eps_k)
    bool pass = false;                  // sigma_total <= bound * (1 + slack)
    bool contraction_premise = false;   // all eps_k < 1
    std::vector<NormEstimate> stage_estimates;
    NormEstimate total_estimate;
};

// eps_k is measured at the realized forward point with the deeper input
// frozen; sigma_total is the spectral norm of the decoder as a joint map
// from (all skips, bottleneck output) to the pre-head output.
template <typename T>
StageBoundReport stage_bound_check(const Model<T>& model, const Tensor<T>& x,
                                   const PowerIterOptions& opts = {}, double slack = 0.01);

// Per-stage realized suppression ||skip_k - out_k||_2 / ||skip_k||_2.
template <typename T>
std::vector<double> suppression_residual(const Model<T>& model, const Tensor<T>& x);

// Central-difference check of every parameter gradient under
// loss = mean(model(x)^2). Returns the worst relative error over all
// parameter coordinates (denominator max(|analytic|, |numeric|, 1e-8)).
template <typename T>
double model_grad_check(Model<T>& model, const Tensor<T>& x, double step);

// ---------------------------------------------------------------------------
// MAC / parameter accounting
// ---------------------------------------------------------------------------

// Documented per-output-element MAC constants for channel-linear ops; pooling
// is charged per input element (its cost scales with what it reads).
namespace mac_cost {
inline constexpr std::int64_t elementwise = 1;
inline constexpr std::int64_t relu = 1;
inline constexpr std::int64_t sigmoid = 4;
inline constexpr std::int64_t dwt = 8;   // 4-tap butterfly + scale per output element
inline constexpr std::int64_t idwt = 8;
inline constexpr std::int64_t avg_pool2x2 = 4;
inline constexpr std::int64_t pool_per_input = 1;
inline constexpr std::int64_t upsample_nearest = 1;
inline constexpr std::int64_t upsample_bilinear = 4;
} // namespace mac_cost

inline std::int64_t conv2d_macs(std::int64_t b, std::int64_t cin, std::int64_t cout,
                                std::int64_t hout, std::int64_t wout,
                                std::int64_t kh, std::int64_t kw) {
    return b * hout * wout * cout * cin * kh * kw;
}

struct MacRow {
    std::string name;
    Shape4 output_shape;
    std::int64_t macs = 0;
    std::int64_t params = 0;
    std::int64_t element_volume = 0;  // output element count
};

struct MacReport {
    std::vector<MacRow> rows;
    std::int64_t total_macs = 0;
    std::int64_t total_params = 0;

    std::string to_csv() const;
    std::string to_json() const;
};

MacReport count_macs(const ModelSpec& spec, const Shape4& input_shape);

} // namespace superdec
