#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace sthdr {

struct RunManifest {
    std::string command;
    std::string model_config_json; // may be empty
    std::string train_config_json; // may be empty
    std::uint64_t seed = 0;
    std::string started_at;
    std::string finished_at;
    std::map<std::string, std::string> extra;
};

std::string code_version();
std::string utc_timestamp();
void write_manifest(const std::filesystem::path& path, const RunManifest& m);

} // namespace sthdr
