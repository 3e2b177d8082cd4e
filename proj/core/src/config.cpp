#include "sthdr/config.hpp"

#include "sthdr/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace sthdr {

using nlohmann::json;

TrainConfig TrainConfig::tiny() {
    TrainConfig c;
    c.batch_size = 2;
    c.lr_init = 1e-3;
    c.lr_min = 1e-5;
    c.max_steps = 200;
    c.patch = 64;
    c.finetune = {2, 64, 20};
    c.eval_every = 100;
    c.checkpoint_every = 100;
    return c;
}

void TrainConfig::validate() const {
    if (batch_size < 1 || finetune.batch_size < 1) throw ConfigError("batch sizes must be positive");
    if (max_steps < 1 || finetune.steps < 0) throw ConfigError("max_steps must be positive, finetune_steps non-negative");
    if (!(lr_min > 0 && lr_min < lr_init)) throw ConfigError("need 0 < lr_min < lr_init");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
    if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
    if (patch < 4 || patch % 4 != 0 || finetune.patch < 4 || finetune.patch % 4 != 0)
        throw ConfigError("patch sizes must be positive multiples of 4");
    if (eval_every < 1 || checkpoint_every < 1) throw ConfigError("eval_every and checkpoint_every must be positive");
}

namespace {

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long r = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<int>(r);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

Real to_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const Real r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

void apply_config_entry(const std::string& key, const std::string& value, ModelConfig& m, TrainConfig& t) {
    if (key == "variant") {
        m.variant = parse_variant(value);
        if (!is_multi_scale(m.variant)) m.n_scales = 1;
        else if (m.n_scales == 1) m.n_scales = 3;
        m.lambda.assign(static_cast<std::size_t>(m.n_scales), 1.0);
    } else if (key == "n_scales") {
        m.n_scales = to_int(key, value);
        m.lambda.assign(static_cast<std::size_t>(std::max(0, m.n_scales)), 1.0);
    } else if (key == "base_channels") m.base_channels = to_int(key, value);
    else if (key == "bottleneck_mult") m.bottleneck_mult = to_int(key, value);
    else if (key == "gamma") m.gamma = to_real(key, value);
    else if (key == "mu") m.mu = to_real(key, value);
    else if (key == "leaky_slope") m.leaky_slope = to_real(key, value);
    else if (key == "supervise_stage1") m.supervise_stage1 = to_bool(key, value);
    else if (key == "lambda") {
        m.lambda.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) m.lambda.push_back(to_real(key, trim(item)));
    } else if (key == "batch_size") t.batch_size = to_int(key, value);
    else if (key == "lr_init") t.lr_init = to_real(key, value);
    else if (key == "lr_min") t.lr_min = to_real(key, value);
    else if (key == "max_steps") t.max_steps = to_int(key, value);
    else if (key == "beta1") t.beta1 = to_real(key, value);
    else if (key == "beta2") t.beta2 = to_real(key, value);
    else if (key == "adam_eps") t.adam_eps = to_real(key, value);
    else if (key == "patch") t.patch = to_int(key, value);
    else if (key == "finetune_batch_size") t.finetune.batch_size = to_int(key, value);
    else if (key == "finetune_patch") t.finetune.patch = to_int(key, value);
    else if (key == "finetune_steps") t.finetune.steps = to_int(key, value);
    else if (key == "seed") t.seed = static_cast<std::uint64_t>(to_int(key, value));
    else if (key == "eval_every") t.eval_every = to_int(key, value);
    else if (key == "checkpoint_every") t.checkpoint_every = to_int(key, value);
    else if (key == "grad_clip") t.grad_clip = to_real(key, value);
    else if (key == "augment") t.augment = to_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

void load_config_file(const std::filesystem::path& path, ModelConfig& model, TrainConfig& train) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        apply_config_entry(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), model, train);
    }
}

std::string to_json_string(const ModelConfig& c) {
    json j{{"variant", std::string(variant_name(c.variant))},
           {"n_scales", c.n_scales},
           {"base_channels", c.base_channels},
           {"bottleneck_mult", c.bottleneck_mult},
           {"gamma", c.gamma},
           {"mu", c.mu},
           {"lambda", c.lambda},
           {"leaky_slope", c.leaky_slope},
           {"supervise_stage1", c.supervise_stage1}};
    return j.dump();
}

std::string to_json_string(const TrainConfig& c) {
    json j{{"batch_size", c.batch_size},
           {"lr_init", c.lr_init},
           {"lr_min", c.lr_min},
           {"max_steps", c.max_steps},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"patch", c.patch},
           {"finetune", {{"batch_size", c.finetune.batch_size}, {"patch", c.finetune.patch}, {"steps", c.finetune.steps}}},
           {"seed", c.seed},
           {"eval_every", c.eval_every},
           {"checkpoint_every", c.checkpoint_every},
           {"grad_clip", c.grad_clip},
           {"augment", c.augment}};
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ModelConfig c;
        c.variant = parse_variant(j.at("variant").get<std::string>());
        c.n_scales = j.at("n_scales").get<int>();
        c.base_channels = j.at("base_channels").get<int>();
        c.bottleneck_mult = j.at("bottleneck_mult").get<int>();
        c.gamma = j.at("gamma").get<Real>();
        c.mu = j.at("mu").get<Real>();
        c.lambda = j.at("lambda").get<std::vector<Real>>();
        c.leaky_slope = j.at("leaky_slope").get<Real>();
        c.supervise_stage1 = j.at("supervise_stage1").get<bool>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
}

TrainConfig train_config_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        TrainConfig c;
        c.batch_size = j.at("batch_size").get<int>();
        c.lr_init = j.at("lr_init").get<Real>();
        c.lr_min = j.at("lr_min").get<Real>();
        c.max_steps = j.at("max_steps").get<int>();
        c.beta1 = j.at("beta1").get<Real>();
        c.beta2 = j.at("beta2").get<Real>();
        c.adam_eps = j.at("adam_eps").get<Real>();
        c.patch = j.at("patch").get<int>();
        c.finetune.batch_size = j.at("finetune").at("batch_size").get<int>();
        c.finetune.patch = j.at("finetune").at("patch").get<int>();
        c.finetune.steps = j.at("finetune").at("steps").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.eval_every = j.at("eval_every").get<int>();
        c.checkpoint_every = j.at("checkpoint_every").get<int>();
        c.grad_clip = j.at("grad_clip").get<Real>();
        c.augment = j.at("augment").get<bool>();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("train config: ") + e.what());
    }
}

} // namespace sthdr
