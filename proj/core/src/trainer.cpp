#include "sthdr/trainer.hpp"

#include "sthdr/checkpoint.hpp"
#include "sthdr/errors.hpp"
#include "sthdr/manifest.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace fs = std::filesystem;

namespace sthdr {

Real lr_schedule(int step, const TrainConfig& cfg) {
    if (step < 0) throw RangeError("lr_schedule: negative step");
    if (step >= cfg.max_steps) return cfg.lr_min;
    const Real progress = static_cast<Real>(step) / cfg.max_steps;
    return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1 + std::cos(std::numbers::pi * progress));
}

TrainState init_train_state(const Model& model) {
    TrainState s;
    s.adam.m = zeros_like(model.params().tensors());
    s.adam.v = zeros_like(model.params().tensors());
    return s;
}

Real clip_grad_norm(TensorMap& grads, Real max_norm) {
    Real sq = 0;
    for (const auto& [_, g] : grads)
        for (Real v : g.data()) sq += v * v;
    const Real norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const Real s = max_norm / norm;
        for (auto& [_, g] : grads)
            for (Real& v : g.data()) v *= s;
    }
    return norm;
}

void adam_update(ParamStore& params, const TensorMap& grads, AdamState& adam, int t, Real lr, const TrainConfig& cfg) {
    const Real c1 = 1 - std::pow(cfg.beta1, t);
    const Real c2 = 1 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : params.tensors()) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        Tensor& m = adam.m.at(name);
        Tensor& v = adam.v.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
        }
    }
}

LossReport compute_gradients(const Model& model, std::span<const SamplePatch> batch, TensorMap& grads) {
    if (batch.empty()) throw DataError("empty training batch");
    const ModelConfig& cfg = model.config();
    const Real w = Real(1) / static_cast<Real>(batch.size());
    LossReport mean;
    for (const SamplePatch& sample : batch) {
        Graph g(model.params(), true);
        const ScalePyramidPrediction preds = model.forward(g, sample.inputs);
        const LossTerms loss = multiscale_l1(preds, gt_pyramid(sample.gt, cfg.n_scales), cfg.lambda, cfg.mu);
        for (std::size_t s = 0; s < loss.report.per_scale.size(); ++s)
            if (!std::isfinite(loss.report.per_scale[s]))
                throw NumericError("non-finite loss at scale " + std::to_string(s + 1) + " (1 = finest)");
        if (!std::isfinite(loss.report.total)) throw NumericError("non-finite total loss");
        backward(loss.total);
        g.accumulate_grads(grads, w);
        mean.total += w * loss.report.total;
        mean.per_scale.resize(loss.report.per_scale.size());
        for (std::size_t s = 0; s < loss.report.per_scale.size(); ++s) mean.per_scale[s] += w * loss.report.per_scale[s];
        mean.per_stage1.resize(loss.report.per_stage1.size());
        for (std::size_t s = 0; s < loss.report.per_stage1.size(); ++s) mean.per_stage1[s] += w * loss.report.per_stage1[s];
    }
    return mean;
}

StepResult train_step(Model& model, TrainState& state, const TrainConfig& cfg, std::span<const SamplePatch> batch,
                      Real lr) {
    TensorMap grads = zeros_like(model.params().tensors());
    StepResult r;
    r.loss = compute_gradients(model, batch, grads);
    r.grad_norm = clip_grad_norm(grads, cfg.grad_clip);
    for (const auto& [name, g] : grads)
        if (!all_finite(g)) throw NumericError("non-finite gradient for '" + name + "'");
    r.lr = lr;
    adam_update(model.params(), grads, state.adam, state.step + 1, lr, cfg);
    ++state.step;
    return r;
}

SamplePatch draw_sample(const std::vector<ExposureStack>& scenes, const TrainConfig& cfg, int step, int index,
                        int patch, Real gamma) {
    if (scenes.empty()) throw DataError("no training scenes");
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(index)));
    const ExposureStack& scene = scenes[rng.below(scenes.size())];
    SamplePatch s = random_crop(scene, patch, rng, gamma);
    if (cfg.augment) s = augment_dihedral(s, static_cast<int>(rng.below(8)));
    return s;
}

std::vector<SamplePatch> draw_batch(const std::vector<ExposureStack>& scenes, const TrainConfig& cfg, int step,
                                    int batch_size, int patch, Real gamma) {
    std::vector<SamplePatch> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) out.push_back(draw_sample(scenes, cfg, step, i, patch, gamma));
    return out;
}

Dataset load_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' does not exist");
    Dataset d;
    for (const auto& dir : list_scenes(root, "Training")) {
        ExposureStack s = load_scene(dir);
        if (!s.gt) throw MalformedSceneError(dir.string(), "training scene lacks HDRImg.hdr");
        d.train.push_back(std::move(s));
    }
    if (d.train.empty()) throw DataError("no training scenes under '" + (root / "Training").string() + "'");
    if (fs::is_directory(root / "Test"))
        for (const auto& dir : list_scenes(root, "Test")) d.test.push_back(load_scene(dir));
    return d;
}

Tensor predict_scene(const Model& model, const ExposureStack& scene) {
    const int m = model.config().required_multiple();
    const int h = scene.height(), w = scene.width();
    const int ph = (h + m - 1) / m * m, pw = (w + m - 1) / m * m;
    std::array<Tensor, 3> inputs = assemble_inputs(scene, model.config().gamma);
    if (ph != h || pw != w)
        for (Tensor& x : inputs) x = pad_reflect(x, ph, pw);
    Tensor pred = model.predict(inputs);
    return (ph != h || pw != w) ? crop(pred, 0, 0, h, w) : pred;
}

std::vector<MetricReport> evaluate_scenes(const Model& model, const std::vector<ExposureStack>& scenes) {
    std::vector<MetricReport> rows;
    for (const ExposureStack& s : scenes) {
        if (!s.gt) continue;
        rows.push_back(evaluate_prediction(predict_scene(model, s), *s.gt, model.config().mu, s.scene_id));
    }
    return rows;
}

namespace {

void check_patch_fits(const std::vector<ExposureStack>& scenes, int patch) {
    for (const auto& s : scenes)
        if (patch > s.height() || patch > s.width())
            throw ConfigError("patch " + std::to_string(patch) + " exceeds training scene '" + s.scene_id + "' (" +
                              std::to_string(s.height()) + "x" + std::to_string(s.width()) + ")");
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
    return a.variant == b.variant && a.n_scales == b.n_scales && a.base_channels == b.base_channels &&
           a.bottleneck_mult == b.bottleneck_mult;
}

} // namespace

RunResult run(const TrainConfig& cfg, const ModelConfig& model_cfg, const RunOptions& opts) {
    cfg.validate();
    model_cfg.validate();
    auto log = [&opts](const std::string& msg) {
        if (opts.log) opts.log(msg);
    };
    const int multiple = model_cfg.required_multiple();
    if (cfg.patch % multiple != 0 || (cfg.finetune.steps > 0 && cfg.finetune.patch % multiple != 0))
        throw ConfigError("patch sizes must be multiples of " + std::to_string(multiple) + " for " +
                          std::to_string(model_cfg.n_scales) + " scales");
    const Dataset data = load_dataset(opts.data_root);
    check_patch_fits(data.train, cfg.patch);
    if (cfg.finetune.steps > 0) check_patch_fits(data.train, cfg.finetune.patch);

    Model model(model_cfg, cfg.seed);
    RunResult result;
    result.state = init_train_state(model);
    if (opts.resume) {
        const Checkpoint ck = load_checkpoint(*opts.resume);
        if (!same_architecture(ck.model, model_cfg))
            throw ConfigError("checkpoint '" + opts.resume->string() + "' holds a " +
                              std::string(variant_name(ck.model.variant)) + " model that does not match the requested " +
                              std::string(variant_name(model_cfg.variant)) + " configuration");
        model.load_parameters(ck.params);
        result.state = ck.state;
        log("resumed from " + opts.resume->string() + " at step " + std::to_string(result.state.step));
    }

    fs::create_directories(opts.out_dir);
    RunManifest manifest;
    manifest.command = opts.command_line.empty() ? "train" : opts.command_line;
    manifest.model_config_json = to_json_string(model_cfg);
    manifest.train_config_json = to_json_string(cfg);
    manifest.seed = cfg.seed;
    manifest.started_at = utc_timestamp();
    manifest.extra["data_root"] = opts.data_root.string();
    manifest.extra["train_scenes"] = std::to_string(data.train.size());
    manifest.extra["test_scenes"] = std::to_string(data.test.size());
    if (opts.resume) manifest.extra["resumed_from"] = opts.resume->string();
    const fs::path manifest_path = opts.out_dir / "run_manifest.json";
    write_manifest(manifest_path, manifest);

    const fs::path history_path = opts.out_dir / "history.csv";
    const bool fresh_history = !opts.resume || !fs::exists(history_path);
    std::ofstream history(history_path, fresh_history ? std::ios::trunc : std::ios::app);
    if (!history) throw DataError("cannot write '" + history_path.string() + "'");
    if (fresh_history) history << "step,phase,lr,loss,psnr_mu\n";
    history.precision(9);

    result.final_checkpoint = opts.out_dir / "last.ckpt";
    result.best_checkpoint = opts.out_dir / "best.ckpt";
    TrainState& state = result.state;
    const int total = cfg.total_steps();
    const int stop = opts.stop_after ? std::min(total, *opts.stop_after) : total;

    while (state.step < stop) {
        const bool main_phase = state.step < cfg.max_steps;
        const Real lr = main_phase ? lr_schedule(state.step, cfg) : cfg.lr_min;
        const int batch_size = main_phase ? cfg.batch_size : cfg.finetune.batch_size;
        const int patch = main_phase ? cfg.patch : cfg.finetune.patch;
        const auto batch = draw_batch(data.train, cfg, state.step, batch_size, patch, model_cfg.gamma);
        const StepResult step = train_step(model, state, cfg, batch, lr);

        HistoryRow row{state.step, main_phase ? "main" : "finetune", lr, step.loss.total, std::nullopt};
        const bool last = state.step == total;
        if ((state.step % cfg.eval_every == 0 || last) && !data.test.empty()) {
            const auto rows = evaluate_scenes(model, data.test);
            if (!rows.empty()) {
                row.psnr_mu = average_metrics(rows).psnr_mu;
                if (*row.psnr_mu > state.best_psnr_mu) {
                    state.best_psnr_mu = *row.psnr_mu;
                    state.best_step = state.step;
                    save_checkpoint(result.best_checkpoint, model, state, cfg);
                }
                log("step " + std::to_string(state.step) + " eval PSNR-mu " + std::to_string(*row.psnr_mu));
            }
        }
        if (state.step % cfg.checkpoint_every == 0 || state.step == stop) save_checkpoint(result.final_checkpoint, model, state, cfg);

        history << row.step << ',' << row.phase << ',' << row.lr << ',' << row.loss << ',';
        if (row.psnr_mu) history << *row.psnr_mu;
        history << '\n' << std::flush;
        result.history.push_back(row);
        if (state.step % 10 == 0 || state.step == stop)
            log("step " + std::to_string(state.step) + "/" + std::to_string(total) + " loss " + std::to_string(row.loss));
    }
    if (!fs::exists(result.final_checkpoint)) save_checkpoint(result.final_checkpoint, model, state, cfg);
    if (!fs::exists(result.best_checkpoint)) save_checkpoint(result.best_checkpoint, model, state, cfg);

    manifest.finished_at = utc_timestamp();
    manifest.extra["final_step"] = std::to_string(state.step);
    write_manifest(manifest_path, manifest);
    return result;
}

} // namespace sthdr
