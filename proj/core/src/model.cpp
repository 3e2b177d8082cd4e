#include "sthdr/model.hpp"

#include "sthdr/errors.hpp"

#include <map>

namespace sthdr {

namespace {
constexpr std::array<std::pair<Variant, std::string_view>, 5> kVariants{{
    {Variant::HSS, "HSS"},
    {Variant::SS, "SS"},
    {Variant::MS, "MS"},
    {Variant::SCM_SS, "SCM_SS"},
    {Variant::SCM_MS, "SCM_MS"},
}};
} // namespace

std::string_view variant_name(Variant v) {
    for (const auto& [k, name] : kVariants)
        if (k == v) return name;
    return "?";
}

Variant parse_variant(std::string_view name) {
    for (const auto& [k, n] : kVariants)
        if (n == name) return k;
    std::string valid;
    for (const auto& [_, n] : kVariants) valid += (valid.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("unknown variant '" + std::string(name) + "' (valid: " + valid + ")");
}

bool is_multi_scale(Variant v) { return v == Variant::MS || v == Variant::SCM_MS; }
bool has_align_net(Variant v) { return v == Variant::SCM_SS || v == Variant::SCM_MS; }

ModelConfig ModelConfig::for_variant(Variant v, bool tiny) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.base_channels = tiny ? 8 : 32;
    cfg.n_scales = is_multi_scale(v) ? (tiny ? 2 : 3) : 1;
    cfg.lambda.assign(static_cast<std::size_t>(cfg.n_scales), 1.0);
    return cfg;
}

void ModelConfig::validate() const {
    if (n_scales < 1) throw ConfigError("n_scales must be at least 1");
    if (!is_multi_scale(variant) && n_scales != 1)
        throw ConfigError(std::string(variant_name(variant)) + " is single-scale; n_scales must be 1");
    if (lambda.size() != static_cast<std::size_t>(n_scales))
        throw ConfigError("lambda has " + std::to_string(lambda.size()) + " entries for " + std::to_string(n_scales) +
                          " scales");
    for (Real l : lambda)
        if (!(l > 0)) throw ConfigError("every lambda must be positive");
    if (base_channels < 2 || base_channels % 2 != 0) throw ConfigError("base_channels must be even and >= 2");
    if (bottleneck_mult < 1) throw ConfigError("bottleneck_mult must be >= 1");
    if (!(gamma > 0)) throw ConfigError("gamma must be positive");
    if (!(mu > 0)) throw ConfigError("mu must be positive");
    if (!(leaky_slope >= 0)) throw ConfigError("leaky_slope must be non-negative");
}

int ModelConfig::required_multiple() const { return 4 << (n_scales - 1); }

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), params_(std::make_unique<ParamStore>(seed)) {
    cfg_.validate();
    ParamStore& store = *params_;
    const int c = cfg_.base_channels;
    const Real slope = cfg_.leaky_slope;
    switch (cfg_.variant) {
    case Variant::HSS:
        front_ = Conv2d(store, "front", {18, c, 3});
        hss_body_ = EncoderDecoder(store, "body", c, cfg_.bottleneck_mult, slope);
        hss_out_ = Conv2d(store, "out", {c, 3, 3});
        break;
    case Variant::SS:
    case Variant::MS:
        front_ = Conv2d(store, "front", {18, c, 3});
        merge_ = MergeNet(store, "merge", c, cfg_.bottleneck_mult, cfg_.n_scales > 1, slope);
        break;
    case Variant::SCM_SS:
    case Variant::SCM_MS:
        align_ = AlignNet(store, "align", c, slope);
        merge_ = MergeNet(store, "merge", c, cfg_.bottleneck_mult, cfg_.n_scales > 1, slope);
        break;
    }
}

Model::ScaleResult Model::forward_scale(Graph& g, const Var& x1, const Var& x2, const Var& x3, const Var& cross) const {
    const Var ref = slice(x2, 3, 6);
    ScaleResult r;
    if (cfg_.variant == Variant::HSS) {
        const Var z = leaky_relu(front_(g, concat({x1, x2, x3})), cfg_.leaky_slope);
        r.feat = hss_body_(g, z);
        r.pred = clamp(add(hss_out_(g, r.feat), ref), 0, 1);
        return r;
    }
    Var z;
    if (has_align_net(cfg_.variant))
        z = align_(g, x1, x2, x3).z;
    else
        z = leaky_relu(front_(g, concat({x1, x2, x3})), cfg_.leaky_slope);
    const MergeOutput m = merge_(g, z, ref, cross);
    r.pred = m.pred_stage2;
    r.stage1 = m.pred_stage1;
    r.feat = m.feat_out;
    return r;
}

ScalePyramidPrediction Model::forward(Graph& g, const Var& x1, const Var& x2, const Var& x3) const {
    for (const Var* x : {&x1, &x2, &x3}) {
        require_chw(x->value(), "model input");
        if (x->value().channels() != 6) throw ShapeError("model input must have 6 channels, got " + to_string(x->shape()));
    }
    require_same_shape(x1.value(), x2.value(), "model inputs");
    require_same_shape(x3.value(), x2.value(), "model inputs");
    const int m = cfg_.required_multiple();
    if (x2.value().height() % m != 0 || x2.value().width() % m != 0)
        throw ShapeError("input " + std::to_string(x2.value().height()) + "x" + std::to_string(x2.value().width()) +
                         " must have height and width divisible by " + std::to_string(m));

    const auto n = static_cast<std::size_t>(cfg_.n_scales);
    std::vector<std::array<Var, 3>> pyramid(n);
    pyramid[0] = {x1, x2, x3};
    for (std::size_t s = 1; s < n; ++s)
        for (std::size_t i = 0; i < 3; ++i) pyramid[s][i] = bilinear_resample(pyramid[s - 1][i], Resample::Half);

    ScalePyramidPrediction out;
    out.preds.resize(n);
    if (cfg_.supervise_stage1 && cfg_.variant != Variant::HSS) out.stage1.resize(n);
    Var cross;
    for (std::size_t s = n; s-- > 0;) {
        const ScaleResult r = forward_scale(g, pyramid[s][0], pyramid[s][1], pyramid[s][2], cross);
        out.preds[s] = r.pred;
        if (!out.stage1.empty()) out.stage1[s] = r.stage1;
        if (s > 0) cross = bilinear_resample(r.feat, Resample::Double);
    }
    return out;
}

ScalePyramidPrediction Model::forward(Graph& g, const std::array<Tensor, 3>& inputs) const {
    return forward(g, Var::constant(inputs[0]), Var::constant(inputs[1]), Var::constant(inputs[2]));
}

Tensor Model::predict(const std::array<Tensor, 3>& inputs) const {
    Graph g(*params_, /*track_grad=*/false);
    return forward(g, inputs).preds.front().value();
}

std::vector<std::pair<std::string, std::size_t>> Model::breakdown() const {
    std::map<std::string, std::size_t> groups;
    for (const auto& [name, t] : params_->tensors()) {
        std::size_t cut = name.find('.');
        if (cut != std::string::npos) {
            const std::size_t second = name.find('.', cut + 1);
            if (second != std::string::npos) cut = second;
        }
        groups[name.substr(0, cut)] += t.size();
    }
    return {groups.begin(), groups.end()};
}

std::vector<std::string> Model::shared_weight_map() const {
    std::vector<std::string> lines;
    const std::string scales = std::to_string(cfg_.n_scales) + " scale" + (cfg_.n_scales > 1 ? "s" : "");
    if (cfg_.variant == Variant::HSS) {
        lines.push_back("front, body, out: single scale, no sharing");
        return lines;
    }
    if (has_align_net(cfg_.variant)) {
        lines.push_back("align.ref: shared by align.scm1 and align.scm3 within a scale; reused across " + scales);
        lines.push_back("align.scm1, align.scm3: independent parameters; each reused across " + scales);
        lines.push_back("align.compress: reused across " + scales);
    } else {
        lines.push_back("front: reused across " + scales);
    }
    lines.push_back("merge.*: one two-stage merge net reused across " + scales);
    if (cfg_.n_scales > 1) lines.push_back("merge.cross_fuse: reused at the " + std::to_string(cfg_.n_scales - 1) + " finer scales");
    return lines;
}

void Model::load_parameters(const TensorMap& tensors) {
    const TensorMap& mine = params_->tensors();
    if (tensors.size() != mine.size())
        throw ConfigError("parameter set has " + std::to_string(tensors.size()) + " tensors, model " +
                          std::string(variant_name(cfg_.variant)) + " expects " + std::to_string(mine.size()));
    for (const auto& [name, t] : mine) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw ConfigError("parameter set lacks '" + name + "'");
        if (it->second.shape() != t.shape())
            throw ConfigError("parameter '" + name + "' has shape " + to_string(it->second.shape()) + ", expected " +
                              to_string(t.shape()));
    }
    for (auto& [name, t] : params_->tensors()) t = tensors.at(name);
}

} // namespace sthdr
