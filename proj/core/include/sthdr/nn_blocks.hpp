#pragma once

#include "sthdr/ops.hpp"
#include "sthdr/params.hpp"

#include <string>

namespace sthdr {

inline constexpr Real kDefaultLeakySlope = 0.2;
inline constexpr Real kNormEps = 1e-5;
// Layer norm over two values is a smoothed sign; narrow blocks keep at least
// this many hidden units.
inline constexpr int kGcMinHidden = 4;

struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int padding = -1; // -1: same-resolution padding (kernel / 2)
    bool bias = true;

    int pad() const { return padding < 0 ? kernel / 2 : padding; }
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamStore& store, std::string name, ConvSpec spec, bool zero_init = false);

    Var operator()(Graph& g, const Var& x) const;

    const ConvSpec& spec() const { return spec_; }
    const std::string& name() const { return name_; }
    std::string weight_name() const { return name_ + ".weight"; }
    std::string bias_name() const { return name_ + ".bias"; }

private:
    std::string name_;
    ConvSpec spec_;
};

// Global-context channel gate: spatial-softmax pooling, a bottleneck
// transform (C / ratio, at least kGcMinHidden, at most C hidden units) with
// layer normalization, then a sigmoid.
class GcBlock {
public:
    struct Trace {
        Var attention; // 1×H×W, sums to 1
        Var context;   // C×1×1
        Var weights;   // C×1×1 in (0,1)
    };

    GcBlock() = default;
    GcBlock(ParamStore& store, std::string name, int channels, int ratio = 4);

    Var operator()(Graph& g, const Var& x) const { return trace(g, x).weights; }
    Trace trace(Graph& g, const Var& x) const;

    int bottleneck() const { return hidden_; }

private:
    std::string name_;
    int channels_ = 0;
    int hidden_ = 1;
    Conv2d attn_, down_, up_;
};

// Modulated deformable 3×3 conv whose offsets and modulation logits come
// from a zero-initialized 3×3 conv on the input.
class DeformConv {
public:
    struct Trace {
        Var offsets;    // 18×H×W
        Var modulation; // 9×H×W
        Var output;
    };

    DeformConv() = default;
    DeformConv(ParamStore& store, std::string name, int in_channels, int out_channels);

    Var operator()(Graph& g, const Var& x) const { return trace(g, x).output; }
    Trace trace(Graph& g, const Var& x) const;

    const Conv2d& offset_branch() const { return offset_; }
    std::string weight_name() const { return name_ + ".weight"; }
    std::string bias_name() const { return name_ + ".bias"; }

private:
    std::string name_;
    int in_ = 0, out_ = 0;
    Conv2d offset_;
};

// Residual block normalizing half of its first conv's channels per instance:
// y = conv3(lrelu([IN(h1), h2])) + conv1(x) with [h1, h2] = conv3(x).
class HinBlock {
public:
    HinBlock() = default;
    HinBlock(ParamStore& store, std::string name, int in_channels, int out_channels,
             Real slope = kDefaultLeakySlope);

    Var operator()(Graph& g, const Var& x) const;

    const Conv2d& identity() const { return identity_; }

private:
    std::string name_;
    int out_ = 0;
    Real slope_ = kDefaultLeakySlope;
    Conv2d conv1_, conv2_, identity_;
};

struct SamOutput {
    Var pred;     // 3×H×W in [0,1]
    Var features; // C×H×W
    Var mask;     // C×H×W
};

// Supervised attention: a residual prediction over the linear reference and a
// sigmoid mask computed from it that re-weights the incoming features.
class Sam {
public:
    Sam() = default;
    Sam(ParamStore& store, std::string name, int channels);

    SamOutput operator()(Graph& g, const Var& features, const Var& ref_img) const;

private:
    Conv2d to_img_, to_mask_;
};

enum class Resample { Half, Double };

// ×0.5 or ×2 bilinear resize (half-pixel centres). Halving requires even
// spatial dimensions.
Var bilinear_resample(const Var& x, Resample factor);
Tensor bilinear_resample(const Tensor& x, Resample factor);

} // namespace sthdr
