#include "superdec/experiment.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "superdec/analysis.hpp"
#include "superdec/io.hpp"

namespace superdec {

template <typename T>
ExperimentResult<T> run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();

    ModelSpec mspec = cfg.model;
    auto train_set = generate_dataset<T>(cfg.dataset, cfg.dataset.seed, cfg.dataset.count);
    auto test_set = generate_dataset<T>(cfg.dataset, hash_name(cfg.dataset.seed, "test"),
                                        cfg.dataset.test_count);

    Model<T> model = Model<T>::build(mspec, cfg.train.seed);

    MetricsReport report;
    report.task = task_name(cfg.dataset.task);
    report.decoder = decoder_name(mspec.decoder);
    report.seed = cfg.train.seed;
    report.data_seed = cfg.dataset.seed;
    report.pr_roundtrip_residual = verify_pr(train_set[0].input, 1.0).max_abs_residual;

    TrainSummary<T> summary = train(model, train_set, cfg.train);
    report.loss_curve = summary.loss_curve;
    report.suppression_curve = summary.suppression_curve;
    report.identity_at_init_residual = summary.identity_at_init_residual;

    if (cfg.dataset.task == TaskKind::thin_lines)
        report.segmentation = eval_segmentation(model, test_set);
    else
        report.denoise = eval_denoise(model, test_set);

    const Shape4 input_shape{1, mspec.in_channels, cfg.dataset.size, cfg.dataset.size};
    const MacReport macs = count_macs(mspec, input_shape);
    report.total_macs = macs.total_macs;
    report.total_params = macs.total_params;

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return ExperimentResult<T>{std::move(model), std::move(report)};
}

template <typename T>
ExperimentResult<T> run_experiment_to_dir(const ExperimentConfig& cfg,
                                          const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ExperimentResult<T> result = run_experiment<T>(cfg);

    std::ofstream(out_dir / "metrics.json") << result.report.to_json();
    std::ofstream(out_dir / "config.json") << experiment_config_to_json(cfg);
    nlohmann::json timing{{"wall_clock_seconds", result.report.wall_clock_seconds}};
    std::ofstream(out_dir / "timing.json") << timing.dump(2) << "\n";
    save_checkpoint(out_dir / "checkpoint", result.model);
    return result;
}

std::string CompareResult::to_csv() const {
    std::ostringstream os;
    if (task == TaskKind::thin_lines) {
        os << "seed,decoder,bucket,iou\n";
        for (const auto& r : rows) {
            os << r.seed << "," << r.decoder << ",0_2," << r.segmentation->iou_0_2 << "\n";
            os << r.seed << "," << r.decoder << ",2_4," << r.segmentation->iou_2_4 << "\n";
            os << r.seed << "," << r.decoder << ",overall," << r.segmentation->iou_overall << "\n";
        }
    } else {
        os << "seed,decoder,psnr\n";
        for (const auto& r : rows)
            os << r.seed << "," << r.decoder << "," << r.denoise->psnr_mean << "\n";
    }
    return os.str();
}

double CompareResult::mean(const std::string& decoder, const std::string& metric) const {
    double acc = 0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.decoder != decoder) continue;
        if (metric == "iou_0_2") acc += r.segmentation->iou_0_2;
        else if (metric == "iou_2_4") acc += r.segmentation->iou_2_4;
        else if (metric == "iou_overall") acc += r.segmentation->iou_overall;
        else if (metric == "psnr") acc += r.denoise->psnr_mean;
        else if (metric == "input_psnr") acc += r.denoise->input_psnr_mean;
        else throw ValueError("compare: unknown metric " + metric);
        ++n;
    }
    if (n == 0) throw ValueError("compare: no rows for decoder " + decoder);
    return acc / n;
}

CompareResult compare_decoders(const ExperimentConfig& base, int n_seeds, int jobs) {
    if (n_seeds < 1) throw ValueError("compare: need at least one seed");
    jobs = std::max(1, jobs);

    struct Job {
        ExperimentConfig cfg;
        CompareRow row;
        std::exception_ptr error;
    };
    std::vector<Job> work;
    for (int i = 0; i < n_seeds; ++i) {
        for (const DecoderKind kind : {DecoderKind::super, DecoderKind::baseline}) {
            ExperimentConfig cfg = base;
            cfg.model.decoder = kind;
            cfg.train.seed = base.train.seed + static_cast<std::uint64_t>(i);
            cfg.dataset.seed = base.dataset.seed + static_cast<std::uint64_t>(i);
            Job job;
            job.cfg = cfg;
            job.row.seed = cfg.train.seed;
            job.row.decoder = decoder_name(kind);
            work.push_back(std::move(job));
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&work, &next]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= work.size()) return;
            try {
                auto result = run_experiment<float>(work[i].cfg);
                work[i].row.segmentation = result.report.segmentation;
                work[i].row.denoise = result.report.denoise;
            } catch (...) {
                work[i].error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(work.size())); ++t)
        pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (auto& job : work)
        if (job.error) std::rethrow_exception(job.error);

    CompareResult result;
    result.task = base.dataset.task;
    for (auto& job : work) result.rows.push_back(std::move(job.row));
    return result;
}

template ExperimentResult<float> run_experiment<float>(const ExperimentConfig&);
template ExperimentResult<double> run_experiment<double>(const ExperimentConfig&);
template ExperimentResult<float> run_experiment_to_dir<float>(const ExperimentConfig&,
                                                              const std::filesystem::path&);
template ExperimentResult<double> run_experiment_to_dir<double>(const ExperimentConfig&,
                                                                const std::filesystem::path&);

} // namespace superdec
