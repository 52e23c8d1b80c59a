#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "../support/oracles.hpp"
#include "superdec/config.hpp"
#include "superdec/io.hpp"
#include "superdec/metrics.hpp"

using namespace superdec;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / "superdec_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Sample<float> seg_sample(const std::vector<float>& mask, int width) {
    const int side = static_cast<int>(std::lround(std::sqrt(double(mask.size()))));
    Sample<float> s;
    s.input = TensorF::zeros(Shape4{1, 1, side, side});
    s.target = TensorF::from_data(Shape4{1, 1, side, side}, std::vector<float>(mask));
    s.width_px = width;
    return s;
}

TensorF logits_for(const std::vector<float>& pred, int side) {
    std::vector<float> z(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) z[i] = pred[i] > 0.5f ? 10.f : -10.f;
    return TensorF::from_data(Shape4{1, 1, side, side}, std::move(z));
}

} // namespace

TEST_CASE("psnr") {
    CHECK(psnr_db(0.01) == doctest::Approx(20.0));
    CHECK(psnr_db(0.0) == 99.0);
    CHECK(psnr_db(1e-30) == 99.0);  // cap
}

TEST_CASE("iou: perfect, empty, and the 4x4 brute-force case") {
    // brute force on a 4x4 grid: P = 2 px, G = 2 px, overlap 1 -> 1/3
    std::vector<float> gt(16, 0.f), pred(16, 0.f);
    gt[5] = 1.f;
    gt[6] = 1.f;
    pred[6] = 1.f;
    pred[7] = 1.f;
    // independent set arithmetic
    int inter = 0, uni = 0;
    for (int i = 0; i < 16; ++i) {
        inter += (gt[i] > 0 && pred[i] > 0) ? 1 : 0;
        uni += (gt[i] > 0 || pred[i] > 0) ? 1 : 0;
    }
    REQUIRE(inter == 1);
    REQUIRE(uni == 3);

    std::vector<Sample<float>> data{seg_sample(gt, 1)};
    auto m = eval_segmentation_logits<float>({logits_for(pred, 4)}, data);
    CHECK(m.iou_overall == doctest::Approx(1.0 / 3.0));
    CHECK(m.iou_0_2 == doctest::Approx(1.0 / 3.0));
    CHECK(m.iou_2_4 == 1.0);  // empty bucket scores 1

    // prediction equals mask -> IoU 1 everywhere it applies
    auto perfect = eval_segmentation_logits<float>({logits_for(gt, 4)}, data);
    CHECK(perfect.iou_overall == 1.0);

    // all-zero prediction with a nonempty mask -> IoU 0
    auto zero = eval_segmentation_logits<float>({logits_for(std::vector<float>(16, 0.f), 4)}, data);
    CHECK(zero.iou_overall == 0.0);
}

TEST_CASE("iou: micro-aggregation is permutation-invariant") {
    std::vector<float> g1(16, 0.f), g2(16, 0.f), p(16, 0.f);
    g1[0] = 1.f;
    g2[0] = 1.f;
    g2[1] = 1.f;
    p[0] = 1.f;
    std::vector<Sample<float>> fwd{seg_sample(g1, 1), seg_sample(g2, 3)};
    std::vector<Sample<float>> rev{seg_sample(g2, 3), seg_sample(g1, 1)};
    auto mf = eval_segmentation_logits<float>({logits_for(p, 4), logits_for(p, 4)}, fwd);
    auto mr = eval_segmentation_logits<float>({logits_for(p, 4), logits_for(p, 4)}, rev);
    CHECK(mf.iou_overall == mr.iou_overall);
    CHECK(mf.iou_0_2 == mr.iou_0_2);
    CHECK(mf.iou_2_4 == mr.iou_2_4);
}

TEST_CASE("golden tensor files: bit-exact round trip and validation") {
    const fs::path dir = temp_dir("golden");
    Rng rng(51);
    TensorF t = TensorF::uniform(Shape4{2, 3, 4, 5}, rng, -1.f, 1.f);
    save_tensor(dir / "t.supt", t);
    TensorF back = load_tensor<float>(dir / "t.supt");
    CHECK(back.shape() == t.shape());
    CHECK(std::memcmp(back.values().data(), t.values().data(),
                      sizeof(float) * t.numel()) == 0);

    // re-saving yields identical bytes
    save_tensor(dir / "t2.supt", back);
    std::ifstream f1(dir / "t.supt", std::ios::binary), f2(dir / "t2.supt", std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());

    // header layout: magic, version, dtype, dims
    const std::string& bytes = s1.str();
    REQUIRE(bytes.size() == 4 + 1 + 1 + 16 + sizeof(float) * 120);
    CHECK(bytes.compare(0, 4, "SUPT") == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);  // f32

    TensorD td = TensorD::uniform(Shape4{1, 1, 2, 2}, rng, -1.0, 1.0);
    save_tensor(dir / "d.supt", td);
    CHECK_THROWS_WITH_AS(load_tensor<float>(dir / "d.supt"), doctest::Contains("dtype"),
                         ValueError);

    std::ofstream bad(dir / "bad.supt", std::ios::binary);
    bad << "JUNKxxxx";
    bad.close();
    CHECK_THROWS_WITH_AS(load_tensor<float>(dir / "bad.supt"), doctest::Contains("magic"),
                         ValueError);

    // truncated payload
    std::ofstream trunc(dir / "trunc.supt", std::ios::binary);
    trunc << bytes.substr(0, bytes.size() - 8);
    trunc.close();
    CHECK_THROWS_WITH_AS(load_tensor<float>(dir / "trunc.supt"), doctest::Contains("truncated"),
                         ValueError);
}

TEST_CASE("checkpoint: save/load reproduces the model exactly") {
    const fs::path dir = temp_dir("ckpt");
    ModelSpec spec;
    spec.depth = 2;
    spec.stem_channels = 4;
    Model<float> model = Model<float>::build(spec, 33);
    // make the checkpoint nontrivial: perturb one weight away from init
    model.parameters()[2].value.values_mut()[0] = 0.123f;
    save_checkpoint(dir, model);

    Model<float> back = load_checkpoint<float>(dir);
    CHECK(back.spec().depth == 2);
    CHECK(back.seed() == 33);
    REQUIRE(back.parameters().size() == model.parameters().size());
    for (std::size_t i = 0; i < back.parameters().size(); ++i) {
        CHECK(back.parameters()[i].name == model.parameters()[i].name);
        CHECK(std::memcmp(back.parameters()[i].value.values().data(),
                          model.parameters()[i].value.values().data(),
                          sizeof(float) * model.parameters()[i].value.numel()) == 0);
    }

    Rng rng(52);
    TensorF x = TensorF::uniform(Shape4{1, 1, 16, 16}, rng, 0.f, 1.f);
    TensorF yb = back.forward(x);
    TensorF ym = model.forward(x);
    CHECK(oracles::max_abs_diff(yb.values(), ym.values()) == 0.0);

    CHECK_THROWS_AS(load_checkpoint<double>(dir), ValueError);  // dtype mismatch
}

TEST_CASE("config: parsing, defaults, and field-path errors") {
    const ExperimentConfig cfg = parse_experiment_config(R"({
        "model": {"depth": 3, "decoder": "baseline"},
        "dataset": {"task": "denoise", "count": 10, "noise_sigma": 0.2},
        "train": {"epochs": 5, "loss": "mse"}
    })");
    CHECK(cfg.model.depth == 3);
    CHECK(cfg.model.decoder == DecoderKind::baseline);
    CHECK(cfg.model.stem_channels == 8);  // default
    CHECK(cfg.dataset.task == TaskKind::denoise);
    CHECK(cfg.dataset.noise_sigma == 0.2);
    CHECK(cfg.train.epochs == 5);
    CHECK(cfg.train.loss == LossKind::mse);

    auto field_of = [](const std::string& text) {
        try {
            parse_experiment_config(text);
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string("<no error>");
    };
    CHECK(field_of(R"({"model": {"depht": 2}})") == "model.depht");
    CHECK(field_of(R"({"model": {"depth": "two"}})") == "model.depth");
    CHECK(field_of(R"({"dataset": {"size": 48}})") == "dataset.size");
    CHECK(field_of(R"({"dataset": {"task": "thin_lines"}, "train": {"loss": "mse"}})") ==
          "train.loss");
    CHECK(field_of(R"(not json)") == "<config>");

    // round-trip through the serializer
    const ExperimentConfig again = parse_experiment_config(experiment_config_to_json(cfg));
    CHECK(again.model.depth == cfg.model.depth);
    CHECK(again.dataset.noise_sigma == cfg.dataset.noise_sigma);

    // model spec document for the macs tool accepts bare and wrapped forms
    CHECK(parse_model_spec(R"({"depth": 1})").depth == 1);
    CHECK(parse_model_spec(R"({"model": {"depth": 2}})").depth == 2);
}

TEST_CASE("metrics report json is stable and excludes wall clock") {
    MetricsReport rep;
    rep.task = "thin_lines";
    rep.decoder = "super";
    rep.seed = 3;
    rep.loss_curve = {0.5, 0.25};
    rep.segmentation = SegmentationMetrics{0.9, 0.8, 0.95};
    rep.wall_clock_seconds = 123.0;
    const std::string a = rep.to_json();
    rep.wall_clock_seconds = 456.0;  // volatile field must not affect the bytes
    CHECK(a == rep.to_json());
    CHECK(a.find("wall_clock") == std::string::npos);
    CHECK(a.find("\"bucket_0_2\": 0.8") != std::string::npos);
}
