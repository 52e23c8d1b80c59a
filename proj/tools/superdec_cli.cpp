// Command-line workbench: dataset generation, training, evaluation,
// verification suites, MAC accounting, and paired decoder comparisons.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "superdec/analysis.hpp"
#include "superdec/experiment.hpp"
#include "superdec/gradcheck.hpp"
#include "superdec/io.hpp"

namespace fs = std::filesystem;
using namespace superdec;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ValueError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
    if (!out) throw ValueError("cannot write " + p.string());
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

template <typename T>
int gen_with(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out / "train");
    fs::create_directories(out / "test");

    nlohmann::json items = nlohmann::json::array();
    auto dump_split = [&](const char* split, const std::vector<Sample<T>>& samples) {
        char name[64];
        for (std::size_t i = 0; i < samples.size(); ++i) {
            std::snprintf(name, sizeof(name), "%s/input_%05zu.supt", split, i);
            save_tensor(out / name, samples[i].input);
            std::string input_name = name;
            std::snprintf(name, sizeof(name), "%s/target_%05zu.supt", split, i);
            save_tensor(out / name, samples[i].target);
            items.push_back({{"split", split},
                             {"input", input_name},
                             {"target", name},
                             {"width_px", samples[i].width_px}});
        }
    };
    dump_split("train", generate_dataset<T>(cfg.dataset, cfg.dataset.seed, cfg.dataset.count));
    dump_split("test", generate_dataset<T>(cfg.dataset, hash_name(cfg.dataset.seed, "test"),
                                           cfg.dataset.test_count));

    nlohmann::json index{{"task", task_name(cfg.dataset.task)},
                         {"size", cfg.dataset.size},
                         {"count", cfg.dataset.count},
                         {"test_count", cfg.dataset.test_count},
                         {"seed", cfg.dataset.seed},
                         {"dtype", cfg.train.dtype},
                         {"items", items}};
    write_file(out / "dataset.json", index.dump(2) + "\n");
    std::printf("wrote %d train + %d test samples to %s\n", cfg.dataset.count,
                cfg.dataset.test_count, out.string().c_str());
    return 0;
}

int cmd_gen(const std::string& config_path, const std::string& out_dir) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    return cfg.train.dtype == "f64" ? gen_with<double>(cfg, out_dir)
                                    : gen_with<float>(cfg, out_dir);
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    if (cfg.train.dtype == "f64") {
        auto result = run_experiment_to_dir<double>(cfg, out_dir);
        std::cout << result.report.to_json();
    } else {
        auto result = run_experiment_to_dir<float>(cfg, out_dir);
        std::cout << result.report.to_json();
    }
    return 0;
}

template <typename T>
int eval_with(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& out) {
    Model<T> model = load_checkpoint<T>(checkpoint);
    auto test_set = generate_dataset<T>(cfg.dataset, hash_name(cfg.dataset.seed, "test"),
                                        cfg.dataset.test_count);
    nlohmann::json j;
    if (cfg.dataset.task == TaskKind::thin_lines) {
        const SegmentationMetrics m = eval_segmentation(model, test_set);
        j = {{"task", "thin_lines"},
             {"iou", {{"overall", m.iou_overall}, {"bucket_0_2", m.iou_0_2},
                      {"bucket_2_4", m.iou_2_4}}}};
    } else {
        const DenoiseMetrics m = eval_denoise(model, test_set);
        j = {{"task", "denoise"}, {"psnr", m.psnr_mean}, {"input_psnr", m.input_psnr_mean}};
    }
    const std::string text = j.dump(2) + "\n";
    if (!out.empty())
        write_file(out, text);
    else
        std::cout << text;
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& out) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    return cfg.train.dtype == "f64" ? eval_with<double>(cfg, checkpoint, out)
                                    : eval_with<float>(cfg, checkpoint, out);
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct SuiteReporter {
    bool all_ok = true;

    void check(const std::string& name, bool ok, const std::string& detail) {
        std::printf("%s %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
        all_ok = all_ok && ok;
    }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

template <typename T>
double pr_suite(std::uint64_t seed, int n) {
    double worst = 0;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const Shape4 s{rng.uniform_int(1, 2), rng.uniform_int(1, 4),
                       2 * rng.uniform_int(1, 32), 2 * rng.uniform_int(1, 32)};
        Tensor<T> x = Tensor<T>::uniform(s, rng, T(-1), T(1));
        worst = std::max(worst, verify_pr(x, 1.0).max_abs_residual);
    }
    return worst;
}

double gradient_suite(std::uint64_t seed, SuiteReporter& rep) {
    using Td = Tensor<double>;
    Rng rng(seed);
    const double step = 1e-5;
    double worst = 0;
    auto run = [&](const std::string& name, const std::function<Td(const Td&)>& fn, const Td& x) {
        const double err = grad_check<double>(fn, x, step);
        worst = std::max(worst, err);
        rep.check("grad." + name, err <= 1e-5, "rel err " + fmt(err));
    };

    // inputs kept away from relu/max kinks by a margin much larger than step
    auto away = [&rng](const Shape4& s) {
        Td t = Td::zeros(s);
        for (auto& v : t.values_mut()) {
            const double m = rng.uniform(0.2, 1.0);
            v = rng.next_double() < 0.5 ? -m : m;
        }
        return t;
    };

    const Shape4 s{1, 2, 6, 6};
    Td x = away(s);
    Td w = away(Shape4{3, 2, 3, 3});
    Td b = away(Shape4{1, 3, 1, 1});
    run("conv2d.input", [&](const Td& t) { return sum_all(conv2d(t, w, b, 1, 1)); }, x);
    run("conv2d.weight", [&](const Td& t) { return sum_all(conv2d(x, t, b, 1, 1)); }, w);
    run("conv2d.bias", [&](const Td& t) { return sum_all(conv2d(x, w, t, 1, 1)); }, b);

    Td y = away(s);
    run("add", [&](const Td& t) { return sum_all(mul(add(t, y), add(t, y))); }, x);
    run("sub", [&](const Td& t) { return sum_all(mul(sub(y, t), sub(y, t))); }, x);
    run("mul", [&](const Td& t) { return sum_all(mul(t, y)); }, x);
    run("relu", [&](const Td& t) { return sum_all(mul(relu(t), y)); }, x);
    run("sigmoid", [&](const Td& t) { return sum_all(mul(sigmoid(t), y)); }, x);
    run("concat_chunk", [&](const Td& t) {
        auto parts = chunk_channels(concat_channels<double>({t, y}), 4);
        return sum_all(mul(parts[1], parts[2]));
    }, x);
    run("global_avg", [&](const Td& t) { return sum_all(mul(pool(PoolKind::global_avg, t),
                                                            pool(PoolKind::global_avg, y))); }, x);
    run("global_max", [&](const Td& t) { return sum_all(pool(PoolKind::global_max, t)); }, x);
    run("spatial_mean", [&](const Td& t) {
        return sum_all(mul(pool(PoolKind::spatial_mean_over_channels, t),
                           pool(PoolKind::spatial_mean_over_channels, y)));
    }, x);
    run("spatial_max", [&](const Td& t) {
        return sum_all(pool(PoolKind::spatial_max_over_channels, t));
    }, x);
    const Shape4 se{1, 2, 4, 4};
    Td xe = away(se);
    run("avg_pool2x2", [&](const Td& t) { return sum_all(mul(avg_pool2x2(t), avg_pool2x2(t))); }, xe);
    run("upsample.nearest", [&](const Td& t) {
        return mean_all(mul(upsample(t, UpsampleMode::nearest), upsample(t, UpsampleMode::nearest)));
    }, xe);
    run("upsample.bilinear", [&](const Td& t) {
        return mean_all(mul(upsample(t, UpsampleMode::bilinear), upsample(t, UpsampleMode::bilinear)));
    }, xe);
    Td gate_c = away(Shape4{1, 2, 1, 1});
    Td gate_s = away(Shape4{1, 1, 6, 6});
    run("scale_channels.x", [&](const Td& t) { return sum_all(mul(scale_channels(t, gate_c), y)); }, x);
    run("scale_channels.gate", [&](const Td& t) { return sum_all(mul(scale_channels(x, t), y)); }, gate_c);
    run("scale_spatial.gate", [&](const Td& t) { return sum_all(mul(scale_spatial(x, t), y)); }, gate_s);
    run("dwt", [&](const Td& t) {
        Td st = stack_bands(dwt_haar(t));
        return sum_all(mul(st, st));
    }, xe);
    run("idwt", [&](const Td& t) {
        Td r = idwt_haar(unstack_bands(concat_channels<double>({t, t, t, t})));
        return sum_all(mul(r, r));
    }, away(Shape4{1, 1, 3, 3}));
    Td targets = Td::zeros(s);
    for (auto& v : targets.values_mut()) v = rng.next_double() < 0.5 ? 0.0 : 1.0;
    run("bce", [&](const Td& t) { return bce_with_logits_mean(t, targets); }, x);
    run("mse", [&](const Td& t) { return mse_mean(t, y); }, x);

    // full model end to end at a tiny scale
    ModelSpec mini;
    mini.depth = 1;
    mini.stem_channels = 2;
    mini.zero_init_fd = false;
    mini.init_gain = 0.5;
    Model<double> model = Model<double>::build(mini, seed);
    Td input = away(Shape4{1, 1, 8, 8});
    const double err = model_grad_check(model, input, step);
    worst = std::max(worst, err);
    rep.check("grad.super_model", err <= 1e-5, "rel err " + fmt(err));
    return worst;
}

int cmd_verify(std::uint64_t seed, const std::string& out_dir) {
    SuiteReporter rep;
    std::vector<std::pair<std::string, NormEstimate>> norm_log;

    const double pr64 = pr_suite<double>(seed, 20);
    rep.check("pr_roundtrip_f64", pr64 <= 1e-12, "max residual " + fmt(pr64));
    const double pr32 = pr_suite<float>(seed + 1, 20);
    rep.check("pr_roundtrip_f32", pr32 <= 1e-5, "max residual " + fmt(pr32));

    {
        Rng rng(seed + 2);
        double worst = 0;
        for (int i = 0; i < 10; ++i) {
            TensorF x = TensorF::uniform(Shape4{1, 3, 32, 32}, rng, -1.f, 1.f);
            double ex = 0, eb = 0;
            for (const float v : x.values()) ex += double(v) * v;
            TensorF st = stack_bands(dwt_haar(x));
            for (const float v : st.values()) eb += double(v) * v;
            worst = std::max(worst, std::abs(eb - ex) / ex);
        }
        rep.check("parseval_f32", worst <= 1e-6, "max rel energy err " + fmt(worst));
    }

    rep.check("gradients", true, "see grad.* lines below");
    gradient_suite(seed + 3, rep);

    {
        PowerIterOptions opts;
        Rng rng(seed + 4);
        TensorD x0 = TensorD::uniform(Shape4{1, 2, 8, 8}, rng, -1.0, 1.0);
        auto ident = jacobian_spectral_norm<double>([](const TensorD& t) { return add(t, TensorD::scalar(0.0)); }, x0, opts);
        rep.check("sigma.identity", std::abs(ident.sigma - 1.0) <= 1e-6,
                  "sigma " + fmt(ident.sigma));
        auto scaled = jacobian_spectral_norm<double>(
            [](const TensorD& t) { return mul(t, TensorD::scalar(0.7)); }, x0, opts);
        rep.check("sigma.scale_0.7", std::abs(scaled.sigma - 0.7) <= 1e-6,
                  "sigma " + fmt(scaled.sigma));
        auto dwt_norm = jacobian_spectral_norm<double>(
            [](const TensorD& t) { return stack_bands(dwt_haar(t)); }, x0, opts);
        rep.check("sigma.dwt", std::abs(dwt_norm.sigma - 1.0) <= 1e-4,
                  "sigma " + fmt(dwt_norm.sigma));
        norm_log.emplace_back("identity", ident);
        norm_log.emplace_back("scale_0.7", scaled);
        norm_log.emplace_back("dwt", dwt_norm);
    }

    {
        bool all_pass = true, premise = true;
        double worst_ratio = 0;
        for (int i = 0; i < 3; ++i) {
            ModelSpec ms;
            ms.depth = 2;
            ms.stem_channels = 4;
            ms.zero_init_fd = false;
            ms.init_gain = 0.01;
            Model<double> model = Model<double>::build(ms, seed + 10 + i);
            Rng rng(seed + 20 + i);
            TensorD x = TensorD::uniform(Shape4{1, 1, 16, 16}, rng, 0.0, 1.0);
            const StageBoundReport sbr = stage_bound_check(model, x);
            all_pass = all_pass && sbr.pass;
            premise = premise && sbr.contraction_premise;
            worst_ratio = std::max(worst_ratio, sbr.sigma_total / sbr.bound);
            norm_log.emplace_back("stage_bound." + std::to_string(i) + ".total",
                                  sbr.total_estimate);
        }
        rep.check("stage_bound", all_pass && premise,
                  "max sigma_total/bound " + fmt(worst_ratio));
    }

    {
        const std::int64_t full = Shape4{1, 8, 32, 32}.numel() * mac_cost::elementwise;
        const std::int64_t half = Shape4{1, 32, 16, 16}.numel() * mac_cost::elementwise;
        const std::int64_t dense_full = conv2d_macs(1, 8, 8, 32, 32, 3, 3);
        const std::int64_t dense_half = conv2d_macs(1, 32, 32, 16, 16, 3, 3);
        ModelSpec ms;
        const MacReport mr = count_macs(ms, Shape4{1, 1, 64, 64});
        Model<float> model = Model<float>::build(ms, seed);
        rep.check("macs.channel_linear", full == half,
                  std::to_string(full) + " vs " + std::to_string(half));
        rep.check("macs.dense_4x", dense_half == 4 * dense_full,
                  std::to_string(dense_half) + " vs 4*" + std::to_string(dense_full));
        rep.check("macs.params_match_model", mr.total_params == model.parameter_count(),
                  std::to_string(mr.total_params) + " vs " +
                      std::to_string(model.parameter_count()));
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ostringstream csv;
        csv << "name," << NormEstimate::csv_header() << "\n";
        nlohmann::json jn = nlohmann::json::object();
        for (const auto& [name, est] : norm_log) {
            csv << name << "," << est.to_csv_row() << "\n";
            jn[name] = nlohmann::json::parse(est.to_json());
        }
        write_file(fs::path(out_dir) / "norm_estimates.csv", csv.str());
        write_file(fs::path(out_dir) / "norm_estimates.json", jn.dump(2) + "\n");
    }

    std::printf("%s\n", rep.all_ok ? "verify: all suites passed" : "verify: FAILURES present");
    return rep.all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// macs / compare
// ---------------------------------------------------------------------------

int cmd_macs(const std::string& spec_path, int size, int batch, const std::string& out,
             bool as_json) {
    const ModelSpec spec = parse_model_spec(read_file(spec_path));
    const MacReport report = count_macs(spec, Shape4{batch, spec.in_channels, size, size});
    const std::string text = as_json ? report.to_json() : report.to_csv();
    if (!out.empty())
        write_file(out, text);
    else
        std::cout << text;
    return 0;
}

int cmd_compare(const std::string& task, int seeds, const std::string& config_path,
                const std::string& out, int jobs) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    if (!task.empty()) {
        if (task != "thin_lines" && task != "denoise")
            throw ConfigError("task", "must be thin_lines|denoise");
        cfg.dataset.task = task == "thin_lines" ? TaskKind::thin_lines : TaskKind::denoise;
        cfg.train.loss = cfg.dataset.task == TaskKind::thin_lines ? LossKind::bce : LossKind::mse;
    }
    const CompareResult result = compare_decoders(cfg, seeds, jobs);
    const std::string csv = result.to_csv();
    if (!out.empty())
        write_file(out, csv);
    else
        std::cout << csv;

    if (result.task == TaskKind::thin_lines) {
        std::fprintf(stderr, "mean iou_0_2: super %.4f baseline %.4f\n",
                     result.mean("super", "iou_0_2"), result.mean("baseline", "iou_0_2"));
    } else {
        std::fprintf(stderr, "mean psnr: super %.3f baseline %.3f (input %.3f)\n",
                     result.mean("super", "psnr"), result.mean("baseline", "psnr"),
                     result.mean("super", "input_psnr"));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"wavelet-domain suppressed-reconstruction decoder workbench"};
    app.require_subcommand(1);

    std::function<int()> action;

    std::string config_path, out_path, checkpoint_path, spec_path, task;
    int seeds = 3, jobs = 2, size = 64, batch = 1;
    std::uint64_t verify_seed = 7;
    bool as_json = false;

    auto* gen = app.add_subcommand("gen", "write dataset fixtures");
    gen->add_option("--config", config_path)->required();
    gen->add_option("--out", out_path)->required();
    gen->callback([&] { action = [&] { return cmd_gen(config_path, out_path); }; });

    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path)->required();
    train->add_option("--out", out_path)->required();
    train->callback([&] { action = [&] { return cmd_train(config_path, out_path); }; });

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the config's test split");
    eval->add_option("--config", config_path)->required();
    eval->add_option("--checkpoint", checkpoint_path)->required();
    eval->add_option("--out", out_path);
    eval->callback([&] { action = [&] { return cmd_eval(config_path, checkpoint_path, out_path); }; });

    auto* verify = app.add_subcommand("verify", "run reconstruction/gradient/norm suites");
    verify->add_option("--seed", verify_seed);
    verify->add_option("--out", out_path);
    verify->callback([&] { action = [&] { return cmd_verify(verify_seed, out_path); }; });

    auto* macs = app.add_subcommand("macs", "per-layer MAC and parameter table");
    macs->add_option("--spec", spec_path)->required();
    macs->add_option("--size", size);
    macs->add_option("--batch", batch);
    macs->add_option("--out", out_path);
    macs->add_flag("--json", as_json);
    macs->callback([&] { action = [&] { return cmd_macs(spec_path, size, batch, out_path, as_json); }; });

    auto* compare = app.add_subcommand("compare", "paired super-vs-baseline comparison");
    compare->add_option("--task", task);
    compare->add_option("--seeds", seeds);
    compare->add_option("--config", config_path);
    compare->add_option("--out", out_path);
    compare->add_option("--jobs", jobs);
    compare->callback([&] { action = [&] { return cmd_compare(task, seeds, config_path, out_path, jobs); }; });

    try {
        app.parse(argc, argv);
        return action();
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        nlohmann::json err{{"error", "config"}, {"field", e.field()}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", "runtime"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
}
