#pragma once

#include "sthdr/config.hpp"
#include "sthdr/data_io.hpp"
#include "sthdr/objective.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sthdr {

// Cosine annealing from lr_init at step 0 to lr_min at max_steps; later steps
// stay at lr_min.
Real lr_schedule(int step, const TrainConfig& cfg);

struct AdamState {
    TensorMap m, v;
};

struct TrainState {
    int step = 0;
    AdamState adam;
    Real best_psnr_mu = -std::numeric_limits<Real>::infinity();
    int best_step = -1;
};

TrainState init_train_state(const Model& model);

// Scales grads in place when their global L2 norm exceeds max_norm; returns
// the norm before clipping.
Real clip_grad_norm(TensorMap& grads, Real max_norm);

// Bias-corrected Adam; t is the 1-based update count.
void adam_update(ParamStore& params, const TensorMap& grads, AdamState& adam, int t, Real lr, const TrainConfig& cfg);

// Batch-mean loss and parameter gradients without touching the parameters.
// Non-finite losses raise NumericError naming the scale.
LossReport compute_gradients(const Model& model, std::span<const SamplePatch> batch, TensorMap& grads);

struct StepResult {
    LossReport loss;
    Real lr = 0;
    Real grad_norm = 0;
};

StepResult train_step(Model& model, TrainState& state, const TrainConfig& cfg, std::span<const SamplePatch> batch,
                      Real lr);

// Sample `index` of the batch for `step`: scene, crop and dihedral element
// are drawn from a stream derived from (seed, step, index) only.
SamplePatch draw_sample(const std::vector<ExposureStack>& scenes, const TrainConfig& cfg, int step, int index,
                        int patch, Real gamma);
std::vector<SamplePatch> draw_batch(const std::vector<ExposureStack>& scenes, const TrainConfig& cfg, int step,
                                    int batch_size, int patch, Real gamma);

struct Dataset {
    std::vector<ExposureStack> train;
    std::vector<ExposureStack> test;
};

// `<root>/Training` and `<root>/Test`; training scenes must carry ground truth.
Dataset load_dataset(const std::filesystem::path& root);

// Full-scene prediction with reflection padding to the model's multiple.
Tensor predict_scene(const Model& model, const ExposureStack& scene);
std::vector<MetricReport> evaluate_scenes(const Model& model, const std::vector<ExposureStack>& scenes);

struct HistoryRow {
    int step = 0;
    std::string phase;
    Real lr = 0;
    Real loss = 0;
    std::optional<Real> psnr_mu;
};

struct RunOptions {
    std::filesystem::path data_root;
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume;
    std::string command_line;
    // Stop after this global step (for resumable partial runs); defaults to the full schedule.
    std::optional<int> stop_after;
    std::function<void(const std::string&)> log;
};

struct RunResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    std::vector<HistoryRow> history;
    TrainState state;
};

// Main phase (cosine schedule) followed by the fine-tune phase at lr_min.
// Writes run_manifest.json, history.csv, last.ckpt and best.ckpt to out_dir.
RunResult run(const TrainConfig& cfg, const ModelConfig& model_cfg, const RunOptions& opts);

} // namespace sthdr
