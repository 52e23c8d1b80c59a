#include "superdec/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "superdec/config.hpp"

static_assert(std::endian::native == std::endian::little,
              "golden tensor files are little-endian; big-endian hosts are unsupported");

namespace superdec {
namespace {

constexpr char kMagic[4] = {'S', 'U', 'P', 'T'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
constexpr std::uint8_t dtype_code() {
    return std::is_same_v<T, float> ? 0 : 1;
}

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

} // namespace

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValueError("save_tensor: cannot open " + path.string());
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(dtype_code<T>()));
    const Shape4& s = t.shape();
    for (int i = 0; i < 4; ++i) write_u32(os, static_cast<std::uint32_t>(s[i]));
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.values().size() * sizeof(T)));
    if (!os) throw ValueError("save_tensor: write failed for " + path.string());
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValueError("load_tensor: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ValueError("load_tensor: bad magic in " + path.string());
    const int version = is.get();
    if (version != kVersion)
        throw ValueError("load_tensor: unsupported version " + std::to_string(version));
    const int dtype = is.get();
    if (dtype != dtype_code<T>())
        throw ValueError("load_tensor: dtype code " + std::to_string(dtype) +
                         " does not match requested scalar type in " + path.string());
    Shape4 s;
    s.b = read_u32(is);
    s.c = read_u32(is);
    s.h = read_u32(is);
    s.w = read_u32(is);
    if (!is) throw ValueError("load_tensor: truncated header in " + path.string());
    std::vector<T> data(static_cast<std::size_t>(s.numel()));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!is) throw ValueError("load_tensor: truncated payload in " + path.string());
    return Tensor<T>::from_data(s, std::move(data));
}

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Model<T>& model) {
    std::filesystem::create_directories(dir);
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : model.parameters()) {
        const std::string file = p.name + ".supt";
        save_tensor(dir / file, p.value);
        const Shape4& s = p.value.shape();
        params.push_back({{"name", p.name}, {"file", file}, {"shape", {s.b, s.c, s.h, s.w}}});
    }
    nlohmann::json manifest{
        {"format", "superdec-checkpoint"},
        {"version", 1},
        {"dtype", dtype_code<T>() == 0 ? "f32" : "f64"},
        {"seed", model.seed()},
        {"model", nlohmann::json::parse(model_spec_to_json(model.spec()))},
        {"parameters", params},
    };
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << "\n";
    if (!os) throw ValueError("save_checkpoint: write failed in " + dir.string());
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw ValueError("load_checkpoint: cannot open " + (dir / "manifest.json").string());
    std::stringstream ss;
    ss << is.rdbuf();
    nlohmann::json manifest = nlohmann::json::parse(ss.str(), nullptr, false);
    if (manifest.is_discarded() || manifest.value("format", "") != "superdec-checkpoint")
        throw ValueError("load_checkpoint: not a checkpoint manifest: " + dir.string());
    const std::string dtype = manifest.value("dtype", "f32");
    if (dtype != (dtype_code<T>() == 0 ? "f32" : "f64"))
        throw ValueError("load_checkpoint: checkpoint dtype " + dtype +
                         " does not match requested scalar type");

    const ModelSpec spec = parse_model_spec(manifest.at("model").dump());
    Model<T> model = Model<T>::build(spec, manifest.value("seed", std::uint64_t(0)));

    std::size_t loaded = 0;
    for (const auto& entry : manifest.at("parameters")) {
        const std::string name = entry.at("name").get<std::string>();
        Parameter<T>* p = model.find_parameter(name);
        if (!p) throw ValueError("load_checkpoint: unknown parameter '" + name + "'");
        Tensor<T> t = load_tensor<T>(dir / entry.at("file").get<std::string>());
        check_same_shape(t.shape(), p->value.shape(), "load_checkpoint");
        auto dst = p->value.values_mut();
        std::copy(t.values().begin(), t.values().end(), dst.begin());
        ++loaded;
    }
    if (loaded != model.parameters().size())
        throw ValueError("load_checkpoint: manifest lists " + std::to_string(loaded) +
                         " parameters, model has " + std::to_string(model.parameters().size()));
    return model;
}

#define SUPERDEC_INSTANTIATE_IO(T)                                            \
    template void save_tensor<T>(const std::filesystem::path&, const Tensor<T>&); \
    template Tensor<T> load_tensor<T>(const std::filesystem::path&);          \
    template void save_checkpoint<T>(const std::filesystem::path&, const Model<T>&); \
    template Model<T> load_checkpoint<T>(const std::filesystem::path&);

SUPERDEC_INSTANTIATE_IO(float)
SUPERDEC_INSTANTIATE_IO(double)

#undef SUPERDEC_INSTANTIATE_IO

} // namespace superdec
