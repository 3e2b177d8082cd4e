#pragma once

#include "sthdr/nn_blocks.hpp"

namespace sthdr {

// Spatial Correct Module. Maps a non-reference input onto the reference in
// feature space; every stage keeps H×W.
class Scm {
public:
    struct Trace {
        Var fused;      // lrelu(conv3([X_i, X_ref])), 12 → C
        Var weights;    // global-context channel gate, C×1×1
        Var gated;      // fused ⊙ weights
        Var compressed; // conv1([gated, F_ref]), 2C → C
        Var deformed;   // deformable conv of compressed
        Var aligned;    // lrelu(conv3(deformed)) + F_ref
    };

    Scm() = default;
    Scm(ParamStore& store, std::string name, int width, Real slope = kDefaultLeakySlope);

    Var operator()(Graph& g, const Var& x_i, const Var& x_ref, const Var& f_ref) const {
        return trace(g, x_i, x_ref, f_ref).aligned;
    }
    Trace trace(Graph& g, const Var& x_i, const Var& x_ref, const Var& f_ref) const;

    const DeformConv& deform() const { return deform_; }
    const Conv2d& out_conv() const { return out_; }

private:
    int width_ = 0;
    Real slope_ = kDefaultLeakySlope;
    Conv2d fuse_;
    GcBlock gcb_;
    Conv2d compress_;
    DeformConv deform_;
    Conv2d out_;
};

struct AlignedBundle {
    Var z;     // C×H×W compressed concatenation
    Var f_ref; // reference feature shared by both SCMs
    Var af1, af3;
};

// Two SCMs with independent parameters and a 1×1 compression of
// [AF_1, F_ref, AF_3].
class AlignNet {
public:
    AlignNet() = default;
    AlignNet(ParamStore& store, std::string name, int width, Real slope = kDefaultLeakySlope);

    AlignedBundle operator()(Graph& g, const Var& x1, const Var& x2, const Var& x3) const;

    const Scm& scm1() const { return scm1_; }
    const Scm& scm3() const { return scm3_; }
    Var reference_feature(Graph& g, const Var& x2) const;

private:
    Real slope_ = kDefaultLeakySlope;
    Conv2d ref_;
    Scm scm1_, scm3_;
    Conv2d compress_;
};

} // namespace sthdr
