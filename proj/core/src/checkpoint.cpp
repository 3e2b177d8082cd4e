#include "sthdr/checkpoint.hpp"

#include "sthdr/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fs = std::filesystem;

namespace sthdr {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'T', 'H', 'D', 'R', 'C', 'K', 'P'};

struct Entry {
    std::string group;
    std::string name;
    const Tensor* tensor;
};

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const fs::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated checkpoint '" + path.string() + "'");
    return v;
}

} // namespace

void save_checkpoint(const fs::path& path, const Model& model, const TrainState& state, const TrainConfig& train) {
    std::vector<Entry> entries;
    for (const auto& [name, t] : model.params().tensors()) entries.push_back({"param", name, &t});
    for (const auto& [name, t] : state.adam.m) entries.push_back({"adam_m", name, &t});
    for (const auto& [name, t] : state.adam.v) entries.push_back({"adam_v", name, &t});

    json header;
    header["model_config"] = json::parse(to_json_string(model.config()));
    header["train_config"] = json::parse(to_json_string(train));
    header["step"] = state.step;
    header["best_psnr_mu"] = std::isfinite(state.best_psnr_mu) ? json(state.best_psnr_mu) : json();
    header["best_step"] = state.best_step;
    json index = json::array();
    std::uint64_t offset = 0;
    for (const Entry& e : entries) {
        index.push_back({{"group", e.group}, {"name", e.name}, {"shape", e.tensor->shape()}, {"offset", offset}});
        offset += e.tensor->size();
    }
    header["tensors"] = std::move(index);
    const std::string text = header.dump();

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write checkpoint '" + tmp.string() + "'");
        f.write(kMagic, sizeof kMagic);
        put<std::uint32_t>(f, kCheckpointVersion);
        put<std::uint64_t>(f, text.size());
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const Entry& e : entries)
            f.write(reinterpret_cast<const char*>(e.tensor->ptr()), static_cast<std::streamsize>(e.tensor->size() * sizeof(Real)));
        if (!f) throw DataError("failed writing checkpoint '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    if (!f.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw FormatError("'" + path.string() + "' is not a checkpoint");
    const auto version = get<std::uint32_t>(f, path);
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint '" + path.string() + "' has format version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
    const auto len = get<std::uint64_t>(f, path);
    if (len > (1u << 30)) throw FormatError("implausible checkpoint header length");
    std::string text(len, '\0');
    if (!f.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("truncated checkpoint header");

    Checkpoint ck;
    try {
        const json header = json::parse(text);
        ck.model = model_config_from_json(header.at("model_config").dump());
        ck.train = train_config_from_json(header.at("train_config").dump());
        ck.state.step = header.at("step").get<int>();
        if (!header.at("best_psnr_mu").is_null()) ck.state.best_psnr_mu = header.at("best_psnr_mu").get<Real>();
        ck.state.best_step = header.at("best_step").get<int>();
        for (const json& e : header.at("tensors")) {
            Tensor t(e.at("shape").get<Shape>());
            if (!f.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(Real))))
                throw FormatError("truncated checkpoint payload");
            const std::string group = e.at("group").get<std::string>();
            const std::string name = e.at("name").get<std::string>();
            if (group == "param") ck.params.emplace(name, std::move(t));
            else if (group == "adam_m") ck.state.adam.m.emplace(name, std::move(t));
            else if (group == "adam_v") ck.state.adam.v.emplace(name, std::move(t));
            else throw FormatError("unknown tensor group '" + group + "'");
        }
    } catch (const json::exception& e) {
        throw FormatError("corrupt checkpoint header in '" + path.string() + "': " + e.what());
    }
    return ck;
}

Model restore_model(const Checkpoint& ckpt) {
    Model m(ckpt.model, ckpt.train.seed);
    m.load_parameters(ckpt.params);
    return m;
}

} // namespace sthdr
