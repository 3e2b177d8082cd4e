#include "sthdr/checkpoint.hpp"
#include "sthdr/config.hpp"
#include "sthdr/data_io.hpp"
#include "sthdr/errors.hpp"
#include "sthdr/manifest.hpp"
#include "sthdr/model.hpp"
#include "sthdr/objective.hpp"
#include "sthdr/rgbe.hpp"
#include "sthdr/trainer.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace sthdr;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

std::string joined_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

fs::path data_root_or_env(const std::string& arg) {
    if (!arg.empty()) return arg;
    if (const char* env = std::getenv("STHDR_DATA")) return env;
    throw ConfigError("no data root: pass --data or set STHDR_DATA");
}

struct TrainArgs {
    std::string data, variant = "SCM_MS", config, resume, out = "runs/sthdr";
    bool tiny = false;
    std::optional<int> steps, finetune_steps, stop_after;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, const std::string& cmdline) {
    const Variant v = parse_variant(a.variant);
    ModelConfig model = ModelConfig::for_variant(v, a.tiny);
    TrainConfig train = a.tiny ? TrainConfig::tiny() : TrainConfig{};
    if (!a.config.empty()) load_config_file(a.config, model, train);
    if (a.steps) train.max_steps = *a.steps;
    if (a.finetune_steps) train.finetune.steps = *a.finetune_steps;
    if (a.seed) train.seed = *a.seed;

    RunOptions opts;
    opts.data_root = data_root_or_env(a.data);
    opts.out_dir = a.out;
    if (!a.resume.empty()) opts.resume = fs::path(a.resume);
    opts.command_line = cmdline;
    opts.stop_after = a.stop_after;
    opts.log = [](const std::string& msg) { std::cerr << msg << '\n'; };
    const RunResult r = run(train, model, opts);
    std::cout << "finished at step " << r.state.step << "; checkpoint " << r.final_checkpoint.string() << '\n';
    if (r.state.best_step >= 0)
        std::cout << "best PSNR-mu " << std::fixed << std::setprecision(4) << r.state.best_psnr_mu << " at step "
                  << r.state.best_step << '\n';
    return kOk;
}

struct EvalArgs {
    std::string data, ckpt, out = "metrics.csv", split = "Test", dump, variant;
    bool self_test = false;
};

int cmd_eval(const EvalArgs& a, const std::string& cmdline) {
    if (a.ckpt.empty() && !a.self_test) throw ConfigError("eval needs --ckpt (or --self-test alone)");
    const fs::path root = data_root_or_env(a.data);
    if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' does not exist");

    std::optional<Model> model;
    std::optional<Checkpoint> ck;
    Real mu = ModelConfig{}.mu;
    if (!a.ckpt.empty()) {
        ck = load_checkpoint(a.ckpt);
        if (!a.variant.empty() && parse_variant(a.variant) != ck->model.variant)
            throw ConfigError("checkpoint holds " + std::string(variant_name(ck->model.variant)) + ", not " + a.variant);
        model.emplace(restore_model(*ck));
        mu = ck->model.mu;
    }

    std::vector<MetricReport> rows;
    std::vector<MetricReport> identity;
    for (const fs::path& dir : list_scenes(root, a.split)) {
        const ExposureStack scene = load_scene(dir);
        if (!scene.gt) {
            std::cerr << "skipping " << scene.scene_id << ": no ground truth\n";
            continue;
        }
        if (model) {
            const Tensor pred = predict_scene(*model, scene);
            rows.push_back(evaluate_prediction(pred, *scene.gt, mu, scene.scene_id));
            if (!a.dump.empty()) {
                fs::create_directories(a.dump);
                write_hdr(fs::path(a.dump) / (scene.scene_id + ".hdr"), pred);
                write_png_preview(fs::path(a.dump) / (scene.scene_id + ".png"), pred, mu);
            }
            std::cerr << scene.scene_id << ": PSNR-mu " << rows.back().psnr_mu << '\n';
        }
        if (a.self_test) identity.push_back(evaluate_prediction(*scene.gt, *scene.gt, mu, scene.scene_id));
    }
    if (rows.empty() && identity.empty()) throw DataError("no scenes with ground truth under '" + (root / a.split).string() + "'");

    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream csv(out, std::ios::trunc);
    if (!csv) throw DataError("cannot write '" + out.string() + "'");
    if (!rows.empty()) {
        write_metrics_csv(csv, rows);
    } else {
        csv << "scene,psnr_mu,psnr_l,ssim_mu,ssim_l\n";
    }
    if (!identity.empty()) {
        const MetricReport s = average_metrics(identity);
        csv << std::setprecision(10) << "self_test," << s.psnr_mu << ',' << s.psnr_l << ',' << s.ssim_mu << ','
            << s.ssim_l << '\n';
    }
    if (!rows.empty()) {
        const MetricReport avg = average_metrics(rows);
        std::cout << std::fixed << std::setprecision(4) << "average over " << rows.size() << " scenes: PSNR-mu "
                  << avg.psnr_mu << " PSNR-L " << avg.psnr_l << " SSIM-mu " << avg.ssim_mu << " SSIM-L " << avg.ssim_l
                  << '\n';
    }

    RunManifest m;
    m.command = cmdline;
    if (ck) {
        m.model_config_json = to_json_string(ck->model);
        m.seed = ck->train.seed;
    }
    m.started_at = m.finished_at = utc_timestamp();
    m.extra["csv"] = out.string();
    write_manifest(fs::path(out).replace_extension(".manifest.json"), m);
    return kOk;
}

struct InferArgs {
    std::string ckpt, scene, out = "prediction.hdr", preview;
};

int cmd_infer(const InferArgs& a, const std::string& cmdline) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const Model model = restore_model(ck);
    if (!fs::is_directory(a.scene)) throw DataError("scene directory '" + a.scene + "' does not exist");
    const ExposureStack scene = load_scene(a.scene);
    const Tensor pred = predict_scene(model, scene);

    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_hdr(out, pred);
    const fs::path preview = a.preview.empty() ? fs::path(out).replace_extension(".png") : fs::path(a.preview);
    write_png_preview(preview, pred, ck.model.mu);
    std::cout << "wrote " << out.string() << " (" << pred.height() << "x" << pred.width() << ") and "
              << preview.string() << '\n';

    RunManifest m;
    m.command = cmdline;
    m.model_config_json = to_json_string(ck.model);
    m.seed = ck.train.seed;
    m.started_at = m.finished_at = utc_timestamp();
    m.extra["scene"] = a.scene;
    write_manifest(fs::path(out).replace_extension(".manifest.json"), m);
    return kOk;
}

struct SummaryArgs {
    std::string variant = "SCM_MS", manifest;
    bool tiny = false;
};

int cmd_summary(const SummaryArgs& a, const std::string& cmdline) {
    const ModelConfig cfg = ModelConfig::for_variant(parse_variant(a.variant), a.tiny);
    const Model model(cfg, 0);
    const std::size_t n = model.count_parameters();
    std::cout << "variant " << variant_name(cfg.variant) << " (" << cfg.n_scales << " scales, width "
              << cfg.base_channels << ")\n";
    std::cout << "parameters " << n << " (" << std::fixed << std::setprecision(4) << static_cast<double>(n) / 1e6
              << " M)\n";
    std::cout << "breakdown:\n";
    for (const auto& [group, count] : model.breakdown()) std::cout << "  " << std::left << std::setw(24) << group << count << '\n';
    const auto shared = model.shared_weight_map();
    std::cout << "shared weights:" << (shared.empty() ? " none" : "") << '\n';
    for (const auto& line : shared) std::cout << "  " << line << '\n';

    if (!a.manifest.empty()) {
        RunManifest m;
        m.command = cmdline;
        m.model_config_json = to_json_string(cfg);
        m.started_at = m.finished_at = utc_timestamp();
        m.extra["parameters"] = std::to_string(n);
        write_manifest(a.manifest, m);
    }
    return kOk;
}

int cmd_check(const std::string& data) {
    const fs::path root = data_root_or_env(data);
    const Dataset d = load_dataset(root);
    auto report = [](const char* split, const std::vector<ExposureStack>& scenes) {
        std::cout << split << ": " << scenes.size() << " scenes\n";
        for (const auto& s : scenes)
            std::cout << "  " << s.scene_id << "  " << s.height() << "x" << s.width() << "  biases " << s.biases[0]
                      << "/" << s.biases[1] << "/" << s.biases[2] << (s.gt ? "" : "  (no GT)") << '\n';
    };
    report("Training", d.train);
    report("Test", d.test);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale-aware two-stage HDR imaging from three exposures"};
    app.require_subcommand(1);
    const std::string cmdline = joined_args(argc, argv);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a model");
    train->add_option("--data", ta.data, "Dataset root (default: $STHDR_DATA)");
    train->add_option("--variant", ta.variant, "HSS, SS, MS, SCM_SS or SCM_MS");
    train->add_option("--config", ta.config, "key = value config file");
    train->add_option("--resume", ta.resume, "Checkpoint to resume from");
    train->add_option("--out", ta.out, "Output directory");
    train->add_flag("--tiny", ta.tiny, "Small CPU profile (width 8, 2 scales, 64px patches)");
    train->add_option("--steps", ta.steps, "Override main-phase steps");
    train->add_option("--finetune-steps", ta.finetune_steps, "Override fine-tune steps");
    train->add_option("--stop-after", ta.stop_after, "Stop after this global step");
    train->add_option("--seed", ta.seed, "Random seed");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    eval->add_option("--data", ea.data, "Dataset root (default: $STHDR_DATA)");
    eval->add_option("--ckpt", ea.ckpt, "Checkpoint");
    eval->add_option("--out", ea.out, "Metrics CSV path");
    eval->add_option("--split", ea.split, "Split directory name");
    eval->add_option("--dump", ea.dump, "Write predictions (RGBE and PNG) here");
    eval->add_option("--variant", ea.variant, "Expected variant of the checkpoint");
    eval->add_flag("--self-test", ea.self_test, "Append a row scoring ground truth against itself");

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "Predict HDR for one scene");
    infer->add_option("--ckpt", ia.ckpt, "Checkpoint")->required();
    infer->add_option("--scene", ia.scene, "Scene directory")->required();
    infer->add_option("--out", ia.out, "Output .hdr path");
    infer->add_option("--preview", ia.preview, "Preview PNG path (default: next to --out)");

    SummaryArgs sa;
    auto* summary = app.add_subcommand("summary", "Print parameter counts");
    summary->add_option("--variant", sa.variant, "HSS, SS, MS, SCM_SS or SCM_MS");
    summary->add_flag("--tiny", sa.tiny, "Small profile");
    summary->add_option("--manifest", sa.manifest, "Also write a run manifest");

    std::string check_data;
    auto* check = app.add_subcommand("check", "Validate a dataset layout");
    check->add_option("--data", check_data, "Dataset root (default: $STHDR_DATA)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*train) return cmd_train(ta, cmdline);
        if (*eval) return cmd_eval(ea, cmdline);
        if (*infer) return cmd_infer(ia, cmdline);
        if (*summary) return cmd_summary(sa, cmdline);
        if (*check) return cmd_check(check_data);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
