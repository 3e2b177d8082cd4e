#pragma once

#include "sthdr/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace sthdr {

struct FinetuneConfig {
    int batch_size = 8;
    int patch = 384;
    int steps = 2000;
};

struct TrainConfig {
    int batch_size = 16;
    Real lr_init = 1e-4;
    Real lr_min = 1e-6;
    int max_steps = 80000;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real adam_eps = 1e-8;
    int patch = 256;
    FinetuneConfig finetune;
    std::uint64_t seed = 0;
    int eval_every = 5000;
    int checkpoint_every = 5000;
    Real grad_clip = 1.0; // global-norm clip; <= 0 disables
    bool augment = true;

    // CPU-sized schedule used with the tiny model profile.
    static TrainConfig tiny();
    void validate() const;
    int total_steps() const { return max_steps + finetune.steps; }
};

// Flat `key = value` file; '#' starts a comment. Keys mirror the fields of
// ModelConfig and TrainConfig (finetune fields as finetune_batch_size etc.).
void apply_config_entry(const std::string& key, const std::string& value, ModelConfig& model, TrainConfig& train);
void load_config_file(const std::filesystem::path& path, ModelConfig& model, TrainConfig& train);

std::string to_json_string(const ModelConfig& cfg);
std::string to_json_string(const TrainConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);
TrainConfig train_config_from_json(const std::string& text);

} // namespace sthdr
