#pragma once

#include "sthdr/config.hpp"
#include "sthdr/trainer.hpp"

#include <filesystem>

namespace sthdr {

// Versioned binary container: magic, format version, a JSON header (config
// echo, step, tensor index) and raw little-endian float64 payloads for the
// parameters and both Adam moment sets. Round-trips bit-exactly.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    TrainState state;
    TensorMap params;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainState& state,
                     const TrainConfig& train);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Builds a model from the checkpoint's config and loads its parameters.
Model restore_model(const Checkpoint& ckpt);

} // namespace sthdr
