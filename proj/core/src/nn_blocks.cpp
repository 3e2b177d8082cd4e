#include "sthdr/nn_blocks.hpp"

#include "sthdr/errors.hpp"

#include <algorithm>

namespace sthdr {

Conv2d::Conv2d(ParamStore& store, std::string name, ConvSpec spec, bool zero_init)
    : name_(std::move(name)), spec_(spec) {
    if (spec_.kernel != 1 && spec_.kernel != 3)
        throw ConfigError("conv '" + name_ + "': kernel must be 1 or 3, got " + std::to_string(spec_.kernel));
    if (spec_.in_channels < 1 || spec_.out_channels < 1 || spec_.stride < 1)
        throw ConfigError("conv '" + name_ + "': channel counts and stride must be positive");
    const int fan_in = spec_.in_channels * spec_.kernel * spec_.kernel;
    const Init init = zero_init ? Init{InitKind::Zeros} : Init{InitKind::FanInUniform, fan_in};
    store.declare(weight_name(), {spec_.out_channels, spec_.in_channels, spec_.kernel, spec_.kernel}, init);
    if (spec_.bias) store.declare(bias_name(), {spec_.out_channels}, init);
}

Var Conv2d::operator()(Graph& g, const Var& x) const {
    require_chw(x.value(), name_.c_str());
    if (x.value().channels() != spec_.in_channels)
        throw ShapeError("conv '" + name_ + "': expected " + std::to_string(spec_.in_channels) + " channels, got " +
                         to_string(x.shape()));
    const Var b = spec_.bias ? g.param(bias_name()) : Var{};
    return conv2d(x, g.param(weight_name()), b, spec_.stride, spec_.pad());
}

GcBlock::GcBlock(ParamStore& store, std::string name, int channels, int ratio)
    : name_(std::move(name)), channels_(channels), hidden_(std::min(channels, std::max(kGcMinHidden, channels / ratio))) {
    attn_ = Conv2d(store, name_ + ".attn", {channels, 1, 1});
    down_ = Conv2d(store, name_ + ".down", {channels, hidden_, 1});
    up_ = Conv2d(store, name_ + ".up", {hidden_, channels, 1});
    store.declare(name_ + ".ln.gamma", {hidden_, 1, 1}, {InitKind::Ones});
    store.declare(name_ + ".ln.beta", {hidden_, 1, 1}, {InitKind::Zeros});
}

GcBlock::Trace GcBlock::trace(Graph& g, const Var& x) const {
    Trace t;
    t.attention = spatial_softmax(attn_(g, x));
    t.context = context_pool(x, t.attention);
    Var h = down_(g, t.context);
    h = relu(layer_norm(h, g.param(name_ + ".ln.gamma"), g.param(name_ + ".ln.beta"), kNormEps));
    t.weights = sigmoid(up_(g, h));
    return t;
}

DeformConv::DeformConv(ParamStore& store, std::string name, int in_channels, int out_channels)
    : name_(std::move(name)), in_(in_channels), out_(out_channels) {
    offset_ = Conv2d(store, name_ + ".offset", {in_channels, 27, 3}, /*zero_init=*/true);
    const int fan_in = in_channels * 9;
    store.declare(weight_name(), {out_channels, in_channels, 3, 3}, {InitKind::FanInUniform, fan_in});
    store.declare(bias_name(), {out_channels}, {InitKind::FanInUniform, fan_in});
}

DeformConv::Trace DeformConv::trace(Graph& g, const Var& x) const {
    Trace t;
    const Var om = offset_(g, x);
    t.offsets = slice(om, 0, 18);
    t.modulation = sigmoid(slice(om, 18, 27));
    t.output = deform_conv2d(x, t.offsets, t.modulation, g.param(weight_name()), g.param(bias_name()));
    return t;
}

HinBlock::HinBlock(ParamStore& store, std::string name, int in_channels, int out_channels, Real slope)
    : name_(std::move(name)), out_(out_channels), slope_(slope) {
    if (out_channels % 2 != 0)
        throw ShapeError("HIN block '" + name_ + "' needs an even channel count, got " + std::to_string(out_channels));
    conv1_ = Conv2d(store, name_ + ".conv1", {in_channels, out_channels, 3});
    conv2_ = Conv2d(store, name_ + ".conv2", {out_channels, out_channels, 3});
    identity_ = Conv2d(store, name_ + ".identity", {in_channels, out_channels, 1});
    store.declare(name_ + ".norm.gamma", {out_channels / 2}, {InitKind::Ones});
    store.declare(name_ + ".norm.beta", {out_channels / 2}, {InitKind::Zeros});
}

Var HinBlock::operator()(Graph& g, const Var& x) const {
    const Var h = conv1_(g, x);
    const int half = out_ / 2;
    const Var normed = instance_norm(slice(h, 0, half), g.param(name_ + ".norm.gamma"),
                                     g.param(name_ + ".norm.beta"), kNormEps);
    const Var mixed = leaky_relu(concat({normed, slice(h, half, out_)}), slope_);
    return add(conv2_(g, mixed), identity_(g, x));
}

Sam::Sam(ParamStore& store, std::string name, int channels) {
    to_img_ = Conv2d(store, name + ".to_img", {channels, 3, 3});
    to_mask_ = Conv2d(store, name + ".to_mask", {3, channels, 3});
}

SamOutput Sam::operator()(Graph& g, const Var& features, const Var& ref_img) const {
    require_chw(ref_img.value(), "SAM reference");
    if (ref_img.value().channels() != 3) throw ShapeError("SAM reference must have 3 channels, got " + to_string(ref_img.shape()));
    SamOutput out;
    out.pred = clamp(add(to_img_(g, features), ref_img), 0, 1);
    out.mask = sigmoid(to_mask_(g, out.pred));
    out.features = add(mul(features, out.mask), features);
    return out;
}

Var bilinear_resample(const Var& x, Resample factor) {
    require_chw(x.value(), "bilinear_resample");
    const int h = x.value().height(), w = x.value().width();
    if (factor == Resample::Half) {
        if (h % 2 != 0 || w % 2 != 0)
            throw ShapeError("bilinear ×0.5 needs even dimensions, got " + to_string(x.shape()));
        return resize_bilinear(x, h / 2, w / 2);
    }
    return resize_bilinear(x, h * 2, w * 2);
}

Tensor bilinear_resample(const Tensor& x, Resample factor) {
    return bilinear_resample(Var::constant(x), factor).value();
}

} // namespace sthdr
