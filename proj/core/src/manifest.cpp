#include "sthdr/manifest.hpp"

#include "sthdr/errors.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>

#ifndef STHDR_VERSION
#define STHDR_VERSION "0.0.0"
#endif

namespace sthdr {

using nlohmann::json;

std::string code_version() { return STHDR_VERSION; }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    json j;
    j["command"] = m.command;
    j["model_config"] = m.model_config_json.empty() ? json() : json::parse(m.model_config_json);
    j["train_config"] = m.train_config_json.empty() ? json() : json::parse(m.train_config_json);
    j["seed"] = m.seed;
    j["code_version"] = code_version();
    j["environment"] = {
        {"compiler", __VERSION__},
        {"cplusplus", __cplusplus},
        {"scalar", "float64"},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
    };
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at.empty() ? json() : json(m.finished_at);
    for (const auto& [k, v] : m.extra) j["extra"][k] = v;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write manifest '" + path.string() + "'");
    f << j.dump(2) << '\n';
}

} // namespace sthdr
