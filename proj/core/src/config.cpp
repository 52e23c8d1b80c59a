#include "superdec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace superdec {
namespace {

using nlohmann::json;

json parse_json(const std::string& text, const std::string& where) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError(where, "not valid JSON");
    return j;
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path, const std::set<std::string>& known) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
}

template <typename V>
V get_field(const json& j, const std::string& path, const std::string& key, V fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    try {
        return v.get<V>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key, "wrong type");
    }
}

std::string get_enum(const json& j, const std::string& path, const std::string& key,
                     const std::string& fallback, const std::set<std::string>& allowed) {
    const std::string v = get_field<std::string>(j, path, key, fallback);
    if (!allowed.count(v)) {
        std::string opts;
        for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
        throw ConfigError(path + "." + key, "must be one of " + opts);
    }
    return v;
}

ModelSpec parse_model_object(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown(j, path,
                   {"depth", "in_channels", "stem_channels", "decoder", "fusion", "use_cbam",
                    "zero_init_fd", "init_gain"});
    ModelSpec m;
    m.depth = get_field<int>(j, path, "depth", m.depth);
    m.in_channels = get_field<int>(j, path, "in_channels", m.in_channels);
    m.stem_channels = get_field<int>(j, path, "stem_channels", m.stem_channels);
    m.decoder = get_enum(j, path, "decoder", "super", {"super", "baseline"}) == "super"
                    ? DecoderKind::super
                    : DecoderKind::baseline;
    m.fusion = get_enum(j, path, "fusion", "sum_ll", {"sum_ll", "concat"}) == "sum_ll"
                   ? FusionMode::sum_ll
                   : FusionMode::concat;
    m.use_cbam = get_field<bool>(j, path, "use_cbam", m.use_cbam);
    m.zero_init_fd = get_field<bool>(j, path, "zero_init_fd", m.zero_init_fd);
    m.init_gain = get_field<double>(j, path, "init_gain", m.init_gain);
    if (m.depth < 1 || m.depth > 6) throw ConfigError(path + ".depth", "must be in [1, 6]");
    if (m.in_channels < 1) throw ConfigError(path + ".in_channels", "must be >= 1");
    if (m.stem_channels < 1) throw ConfigError(path + ".stem_channels", "must be >= 1");
    if (m.init_gain < 0) throw ConfigError(path + ".init_gain", "must be >= 0");
    return m;
}

DatasetSpec parse_dataset_object(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown(j, path,
                   {"task", "count", "test_count", "size", "seed", "min_width", "max_width",
                    "max_lines", "texture_amplitude", "noise_sigma"});
    DatasetSpec d;
    d.task = get_enum(j, path, "task", "thin_lines", {"thin_lines", "denoise"}) == "thin_lines"
                 ? TaskKind::thin_lines
                 : TaskKind::denoise;
    d.count = get_field<int>(j, path, "count", d.count);
    d.test_count = get_field<int>(j, path, "test_count", d.test_count);
    d.size = get_field<int>(j, path, "size", d.size);
    d.seed = get_field<std::uint64_t>(j, path, "seed", d.seed);
    d.min_width = get_field<int>(j, path, "min_width", d.min_width);
    d.max_width = get_field<int>(j, path, "max_width", d.max_width);
    d.max_lines = get_field<int>(j, path, "max_lines", d.max_lines);
    d.texture_amplitude = get_field<double>(j, path, "texture_amplitude", d.texture_amplitude);
    d.noise_sigma = get_field<double>(j, path, "noise_sigma", d.noise_sigma);
    if (d.count < 1) throw ConfigError(path + ".count", "must be >= 1");
    if (d.test_count < 0) throw ConfigError(path + ".test_count", "must be >= 0");
    if (d.size < 4 || (d.size & (d.size - 1)) != 0)
        throw ConfigError(path + ".size", "must be a power of two >= 4");
    if (d.min_width < 1 || d.max_width > 4 || d.min_width > d.max_width)
        throw ConfigError(path + ".min_width", "width range must satisfy 1 <= min <= max <= 4");
    if (d.max_lines < 1 || d.max_lines > 8)
        throw ConfigError(path + ".max_lines", "must be in [1, 8]");
    if (d.texture_amplitude < 0)
        throw ConfigError(path + ".texture_amplitude", "must be >= 0");
    if (d.noise_sigma < 0) throw ConfigError(path + ".noise_sigma", "must be >= 0");
    return d;
}

TrainConfig parse_train_object(const json& j, const std::string& path, TaskKind task) {
    expect_object(j, path);
    reject_unknown(j, path,
                   {"epochs", "batch_size", "lr", "seed", "loss", "eval_every", "dtype"});
    TrainConfig t;
    t.epochs = get_field<int>(j, path, "epochs", t.epochs);
    t.batch_size = get_field<int>(j, path, "batch_size", t.batch_size);
    t.lr = get_field<double>(j, path, "lr", t.lr);
    t.seed = get_field<std::uint64_t>(j, path, "seed", t.seed);
    const std::string default_loss = task == TaskKind::thin_lines ? "bce" : "mse";
    t.loss = get_enum(j, path, "loss", default_loss, {"bce", "mse"}) == "bce" ? LossKind::bce
                                                                              : LossKind::mse;
    t.eval_every = get_field<int>(j, path, "eval_every", t.eval_every);
    t.dtype = get_enum(j, path, "dtype", "f32", {"f32", "f64"});
    if (t.epochs < 0) throw ConfigError(path + ".epochs", "must be >= 0");
    if (t.batch_size < 1) throw ConfigError(path + ".batch_size", "must be >= 1");
    if (t.lr < 0) throw ConfigError(path + ".lr", "must be >= 0");
    if (t.eval_every < 0) throw ConfigError(path + ".eval_every", "must be >= 0");
    // segmentation trains on BCE over logits, denoising on MSE over residuals
    if (task == TaskKind::thin_lines && t.loss != LossKind::bce)
        throw ConfigError(path + ".loss", "thin_lines requires bce");
    if (task == TaskKind::denoise && t.loss != LossKind::mse)
        throw ConfigError(path + ".loss", "denoise requires mse");
    return t;
}

json model_spec_json(const ModelSpec& m) {
    return json{{"depth", m.depth},
                {"in_channels", m.in_channels},
                {"stem_channels", m.stem_channels},
                {"decoder", decoder_name(m.decoder)},
                {"fusion", m.fusion == FusionMode::sum_ll ? "sum_ll" : "concat"},
                {"use_cbam", m.use_cbam},
                {"zero_init_fd", m.zero_init_fd},
                {"init_gain", m.init_gain}};
}

} // namespace

const char* decoder_name(DecoderKind k) {
    return k == DecoderKind::super ? "super" : "baseline";
}

const char* task_name(TaskKind t) {
    return t == TaskKind::thin_lines ? "thin_lines" : "denoise";
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    const json j = parse_json(json_text, "<config>");
    expect_object(j, "<config>");
    reject_unknown(j, "", {"model", "dataset", "train"});
    ExperimentConfig cfg;
    if (j.contains("model")) cfg.model = parse_model_object(j.at("model"), "model");
    if (j.contains("dataset")) cfg.dataset = parse_dataset_object(j.at("dataset"), "dataset");
    cfg.train = j.contains("train") ? parse_train_object(j.at("train"), "train", cfg.dataset.task)
                                    : parse_train_object(json::object(), "train", cfg.dataset.task);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("<config>", "cannot open " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_experiment_config(ss.str());
    if (const char* env = std::getenv("SUPER_SEED")) {
        try {
            cfg.train.seed = static_cast<std::uint64_t>(std::stoull(env));
        } catch (const std::exception&) {
            throw ConfigError("SUPER_SEED", "not an unsigned integer: " + std::string(env));
        }
    }
    return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["model"] = model_spec_json(cfg.model);
    j["dataset"] = json{{"task", task_name(cfg.dataset.task)},
                        {"count", cfg.dataset.count},
                        {"test_count", cfg.dataset.test_count},
                        {"size", cfg.dataset.size},
                        {"seed", cfg.dataset.seed},
                        {"min_width", cfg.dataset.min_width},
                        {"max_width", cfg.dataset.max_width},
                        {"max_lines", cfg.dataset.max_lines},
                        {"texture_amplitude", cfg.dataset.texture_amplitude},
                        {"noise_sigma", cfg.dataset.noise_sigma}};
    j["train"] = json{{"epochs", cfg.train.epochs},
                      {"batch_size", cfg.train.batch_size},
                      {"lr", cfg.train.lr},
                      {"seed", cfg.train.seed},
                      {"loss", cfg.train.loss == LossKind::bce ? "bce" : "mse"},
                      {"eval_every", cfg.train.eval_every},
                      {"dtype", cfg.train.dtype}};
    return j.dump(2) + "\n";
}

ModelSpec parse_model_spec(const std::string& json_text) {
    const json j = parse_json(json_text, "<spec>");
    expect_object(j, "<spec>");
    if (j.contains("model")) return parse_model_object(j.at("model"), "model");
    return parse_model_object(j, "model");
}

std::string model_spec_to_json(const ModelSpec& spec) {
    return model_spec_json(spec).dump(2) + "\n";
}

} // namespace superdec
