#pragma once

#include <optional>
#include <string>
#include <vector>

#include "superdec/blocks.hpp"
#include "superdec/data.hpp"

namespace superdec {

struct SegmentationMetrics {
    double iou_overall = 0;
    double iou_0_2 = 0;  // images with stroke width 1 or 2 px
    double iou_2_4 = 0;  // width 3 or 4 px
};

struct DenoiseMetrics {
    double psnr_mean = 0;        // model output vs clean
    double input_psnr_mean = 0;  // noisy input vs clean
};

// PSNR in dB on unit-range images, capped at 99 dB for identical inputs.
double psnr_db(double mse);

// prediction = sigmoid(logit) > threshold. IoU is micro-aggregated (summed
// intersections over summed unions) per bucket; a bucket whose union is
// empty scores 1.
template <typename T>
SegmentationMetrics eval_segmentation(const Model<T>& model, const std::vector<Sample<T>>& data,
                                      double threshold = 0.5);

// Same aggregation from precomputed logits (logits[i] pairs with data[i]).
template <typename T>
SegmentationMetrics eval_segmentation_logits(const std::vector<Tensor<T>>& logits,
                                             const std::vector<Sample<T>>& data,
                                             double threshold = 0.5);

// The model predicts the noise residual; the restored image is
// clamp(noisy - residual, 0, 1).
template <typename T>
DenoiseMetrics eval_denoise(const Model<T>& model, const std::vector<Sample<T>>& data);

struct MetricsReport {
    std::string task;
    std::string decoder;
    std::uint64_t seed = 0;
    std::uint64_t data_seed = 0;
    std::vector<double> loss_curve;  // mean training loss per epoch
    std::optional<SegmentationMetrics> segmentation;
    std::optional<DenoiseMetrics> denoise;
    double pr_roundtrip_residual = 0;  // ||idwt(dwt(probe)) - probe||_inf at init
    std::optional<double> identity_at_init_residual;       // super decoder only
    std::vector<std::vector<double>> suppression_curve;    // per epoch, per stage
    std::int64_t total_macs = 0;
    std::int64_t total_params = 0;
    double wall_clock_seconds = 0;  // kept out of to_json (see timing sidecar)

    // Deterministic fields only: identical config and seeds give identical
    // bytes. Wall clock goes to a separate timing file.
    std::string to_json() const;
};

} // namespace superdec
