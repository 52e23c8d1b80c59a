#include "superdec/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace superdec {

double psnr_db(double mse) {
    if (mse <= 0) return 99.0;
    return std::min(99.0, -10.0 * std::log10(mse));
}

namespace {

template <typename T>
double stable_sigmoid_val(T x) {
    const double xd = static_cast<double>(x);
    if (xd >= 0) return 1.0 / (1.0 + std::exp(-xd));
    const double e = std::exp(xd);
    return e / (1.0 + e);
}

struct IouAccum {
    std::int64_t intersection = 0;
    std::int64_t uni = 0;

    double iou() const {
        if (uni == 0) return 1.0;  // nothing predicted, nothing to find
        return static_cast<double>(intersection) / static_cast<double>(uni);
    }
};

} // namespace

template <typename T>
SegmentationMetrics eval_segmentation_logits(const std::vector<Tensor<T>>& logits,
                                             const std::vector<Sample<T>>& data,
                                             double threshold) {
    if (logits.size() != data.size())
        throw ShapeError("eval_segmentation: " + std::to_string(logits.size()) +
                         " logit tensors for " + std::to_string(data.size()) + " samples");
    IouAccum overall, narrow, wide;
    for (std::size_t k = 0; k < data.size(); ++k) {
        check_same_shape(logits[k].shape(), data[k].target.shape(), "eval_segmentation");
        const T* z = logits[k].values().data();
        const T* m = data[k].target.values().data();
        IouAccum img;
        for (std::int64_t i = 0; i < logits[k].numel(); ++i) {
            const bool p = stable_sigmoid_val(z[i]) > threshold;
            const bool g = m[i] > T(0.5);
            img.intersection += (p && g) ? 1 : 0;
            img.uni += (p || g) ? 1 : 0;
        }
        overall.intersection += img.intersection;
        overall.uni += img.uni;
        IouAccum& bucket = data[k].width_px <= 2 ? narrow : wide;
        bucket.intersection += img.intersection;
        bucket.uni += img.uni;
    }
    return SegmentationMetrics{overall.iou(), narrow.iou(), wide.iou()};
}

template <typename T>
SegmentationMetrics eval_segmentation(const Model<T>& model, const std::vector<Sample<T>>& data,
                                      double threshold) {
    InferenceGuard<T> guard(model);
    std::vector<Tensor<T>> logits;
    logits.reserve(data.size());
    for (const auto& sample : data) logits.push_back(model.forward(sample.input));
    return eval_segmentation_logits(logits, data, threshold);
}

template <typename T>
DenoiseMetrics eval_denoise(const Model<T>& model, const std::vector<Sample<T>>& data) {
    InferenceGuard<T> guard(model);
    double psnr_sum = 0, input_psnr_sum = 0;
    for (const auto& sample : data) {
        Tensor<T> residual = model.forward(sample.input);
        const T* r = residual.values().data();
        const T* x = sample.input.values().data();
        const T* c = sample.target.values().data();
        const std::int64_t n = residual.numel();
        double mse = 0, input_mse = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double pred = std::clamp(static_cast<double>(x[i]) - static_cast<double>(r[i]),
                                           0.0, 1.0);
            const double d = pred - static_cast<double>(c[i]);
            mse += d * d;
            const double di = static_cast<double>(x[i]) - static_cast<double>(c[i]);
            input_mse += di * di;
        }
        psnr_sum += psnr_db(mse / static_cast<double>(n));
        input_psnr_sum += psnr_db(input_mse / static_cast<double>(n));
    }
    const double count = static_cast<double>(data.size());
    return DenoiseMetrics{psnr_sum / count, input_psnr_sum / count};
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["task"] = task;
    j["decoder"] = decoder;
    j["seed"] = seed;
    j["data_seed"] = data_seed;
    j["loss_curve"] = loss_curve;
    if (segmentation) {
        j["iou"] = {{"overall", segmentation->iou_overall},
                    {"bucket_0_2", segmentation->iou_0_2},
                    {"bucket_2_4", segmentation->iou_2_4}};
    }
    if (denoise) {
        j["psnr"] = denoise->psnr_mean;
        j["input_psnr"] = denoise->input_psnr_mean;
    }
    j["pr_roundtrip_residual"] = pr_roundtrip_residual;
    if (identity_at_init_residual) j["identity_at_init_residual"] = *identity_at_init_residual;
    j["suppression_curve"] = suppression_curve;
    j["total_macs"] = total_macs;
    j["total_params"] = total_params;
    return j.dump(2) + "\n";
}

template SegmentationMetrics eval_segmentation<float>(const Model<float>&,
                                                      const std::vector<Sample<float>>&, double);
template SegmentationMetrics eval_segmentation<double>(const Model<double>&,
                                                       const std::vector<Sample<double>>&, double);
template SegmentationMetrics eval_segmentation_logits<float>(const std::vector<Tensor<float>>&,
                                                             const std::vector<Sample<float>>&,
                                                             double);
template SegmentationMetrics eval_segmentation_logits<double>(const std::vector<Tensor<double>>&,
                                                              const std::vector<Sample<double>>&,
                                                              double);
template DenoiseMetrics eval_denoise<float>(const Model<float>&, const std::vector<Sample<float>>&);
template DenoiseMetrics eval_denoise<double>(const Model<double>&,
                                             const std::vector<Sample<double>>&);

} // namespace superdec
