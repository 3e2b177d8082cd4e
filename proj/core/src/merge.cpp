#include "sthdr/merge.hpp"

#include "sthdr/errors.hpp"

namespace sthdr {

EncoderDecoder::EncoderDecoder(ParamStore& store, std::string name, int width, int bottleneck_mult, Real slope)
    : width_(width) {
    const int deep = width * bottleneck_mult;
    enc1_ = HinBlock(store, name + ".enc1", width, width, slope);
    down_ = Conv2d(store, name + ".down", {width, deep, 3, 2, 1});
    enc2_ = HinBlock(store, name + ".enc2", deep, deep, slope);
    bottleneck_ = HinBlock(store, name + ".bottleneck", deep, deep, slope);
    up_ = Conv2d(store, name + ".up", {deep, width, 3});
    skip_ = Conv2d(store, name + ".skip", {2 * width, width, 1});
    dec1_ = HinBlock(store, name + ".dec1", width, width, slope);
}

Var EncoderDecoder::operator()(Graph& g, const Var& x) const {
    require_chw(x.value(), "encoder-decoder");
    const int h = x.value().height(), w = x.value().width();
    if (h % 4 != 0 || w % 4 != 0)
        throw ShapeError("encoder-decoder needs H and W divisible by 4, got " + to_string(x.shape()));
    const Var e1 = enc1_(g, x);
    const Var e2 = enc2_(g, down_(g, e1));
    const Var mid = bottleneck_(g, e2);
    const Var up = up_(g, bilinear_resample(mid, Resample::Double));
    return dec1_(g, skip_(g, concat({up, e1})));
}

MergeNet::MergeNet(ParamStore& store, std::string name, int width, int bottleneck_mult, bool with_cross_scale,
                   Real slope)
    : width_(width), cross_(with_cross_scale) {
    if (cross_) cross_fuse_ = Conv2d(store, name + ".cross_fuse", {2 * width, width, 1});
    stage1_ = EncoderDecoder(store, name + ".stage1", width, bottleneck_mult, slope);
    sam_ = Sam(store, name + ".sam", width);
    stage2_in_ = Conv2d(store, name + ".stage2_in", {2 * width, width, 1});
    stage2_ = EncoderDecoder(store, name + ".stage2", width, bottleneck_mult, slope);
    out_ = Conv2d(store, name + ".out", {width, 3, 3});
}

MergeOutput MergeNet::forward(Graph& g, const Var& z, const Var& ref_img, const Var& cross_scale_feat,
                              bool zero_sam_features) const {
    require_chw(z.value(), "merge input");
    require_chw(ref_img.value(), "merge reference");
    if (z.value().height() != ref_img.value().height() || z.value().width() != ref_img.value().width())
        throw ShapeError("merge: feature " + to_string(z.shape()) + " and reference " + to_string(ref_img.shape()) +
                         " differ spatially");
    Var zp = z;
    if (cross_scale_feat) {
        if (!cross_) throw ConfigError("merge net built without cross-scale fusion received a cross-scale feature");
        require_same_shape(cross_scale_feat.value(), z.value(), "cross-scale feature");
        zp = cross_fuse_(g, concat({z, cross_scale_feat}));
    }
    MergeOutput out;
    const SamOutput s = sam_(g, stage1_(g, zp), ref_img);
    out.pred_stage1 = s.pred;
    out.sam_features = zero_sam_features ? Var::constant(Tensor(s.features.shape())) : s.features;
    out.feat_out = stage2_(g, stage2_in_(g, concat({out.sam_features, zp})));
    out.pred_stage2 = clamp(add(out_(g, out.feat_out), ref_img), 0, 1);
    return out;
}

} // namespace sthdr
