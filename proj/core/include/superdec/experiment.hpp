#pragma once

#include <optional>

#include "superdec/config.hpp"
#include "superdec/metrics.hpp"

namespace superdec {

template <typename T>
struct ExperimentResult {
    Model<T> model;
    MetricsReport report;
};

// Builds the model from cfg.train.seed, generates train/test splits from
// cfg.dataset.seed, trains, evaluates, and fills the full report.
template <typename T>
ExperimentResult<T> run_experiment(const ExperimentConfig& cfg);

// Writes metrics.json (deterministic), timing.json, checkpoint/ and a copy
// of the resolved config under out_dir.
template <typename T>
ExperimentResult<T> run_experiment_to_dir(const ExperimentConfig& cfg,
                                          const std::filesystem::path& out_dir);

struct CompareRow {
    std::uint64_t seed = 0;
    std::string decoder;
    std::optional<SegmentationMetrics> segmentation;
    std::optional<DenoiseMetrics> denoise;
};

struct CompareResult {
    TaskKind task = TaskKind::thin_lines;
    std::vector<CompareRow> rows;  // ordered (seed, super first then baseline)

    // thin_lines: "seed,decoder,bucket,iou"; denoise: "seed,decoder,psnr"
    std::string to_csv() const;
    double mean(const std::string& decoder, const std::string& metric) const;
};

// Paired comparison over n_seeds: seed i uses the same data split and the
// same encoder initialization for both decoder kinds (only decoder
// parameters differ). Trainings run on up to `jobs` threads; results are
// ordered deterministically regardless of scheduling.
CompareResult compare_decoders(const ExperimentConfig& base, int n_seeds, int jobs = 2);

} // namespace superdec
