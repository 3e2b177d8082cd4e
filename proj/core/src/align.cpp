#include "sthdr/align.hpp"

#include "sthdr/errors.hpp"

namespace sthdr {

namespace {
void require_network_input(const Var& x, const char* what) {
    require_chw(x.value(), what);
    if (x.value().channels() != 6) throw ShapeError(std::string(what) + ": expected 6 channels, got " + to_string(x.shape()));
}
} // namespace

Scm::Scm(ParamStore& store, std::string name, int width, Real slope) : width_(width), slope_(slope) {
    fuse_ = Conv2d(store, name + ".fuse", {12, width, 3});
    gcb_ = GcBlock(store, name + ".gcb", width);
    compress_ = Conv2d(store, name + ".compress", {2 * width, width, 1});
    deform_ = DeformConv(store, name + ".deform", width, width);
    out_ = Conv2d(store, name + ".out", {width, width, 3});
}

Scm::Trace Scm::trace(Graph& g, const Var& x_i, const Var& x_ref, const Var& f_ref) const {
    require_network_input(x_i, "SCM input");
    require_network_input(x_ref, "SCM reference");
    require_same_shape(x_i.value(), x_ref.value(), "SCM inputs");
    if (f_ref.shape() != Shape{width_, x_i.value().height(), x_i.value().width()})
        throw ShapeError("SCM reference feature has shape " + to_string(f_ref.shape()));
    Trace t;
    t.fused = leaky_relu(fuse_(g, concat({x_i, x_ref})), slope_);
    t.weights = gcb_(g, t.fused);
    t.gated = mul_channel(t.fused, t.weights);
    t.compressed = compress_(g, concat({t.gated, f_ref}));
    t.deformed = deform_(g, t.compressed);
    t.aligned = add(leaky_relu(out_(g, t.deformed), slope_), f_ref);
    return t;
}

AlignNet::AlignNet(ParamStore& store, std::string name, int width, Real slope) : slope_(slope) {
    ref_ = Conv2d(store, name + ".ref", {6, width, 3});
    scm1_ = Scm(store, name + ".scm1", width, slope);
    scm3_ = Scm(store, name + ".scm3", width, slope);
    compress_ = Conv2d(store, name + ".compress", {3 * width, width, 1});
}

Var AlignNet::reference_feature(Graph& g, const Var& x2) const { return leaky_relu(ref_(g, x2), slope_); }

AlignedBundle AlignNet::operator()(Graph& g, const Var& x1, const Var& x2, const Var& x3) const {
    require_network_input(x2, "align reference");
    require_same_shape(x1.value(), x2.value(), "align inputs");
    require_same_shape(x3.value(), x2.value(), "align inputs");
    AlignedBundle b;
    b.f_ref = reference_feature(g, x2);
    b.af1 = scm1_(g, x1, x2, b.f_ref);
    b.af3 = scm3_(g, x3, x2, b.f_ref);
    b.z = leaky_relu(compress_(g, concat({b.af1, b.f_ref, b.af3})), slope_);
    return b;
}

} // namespace sthdr
