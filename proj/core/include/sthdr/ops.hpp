#pragma once

#include "sthdr/autograd.hpp"

#include <cstdint>
#include <vector>

namespace sthdr {

// While alive on the current thread, piecewise ops (leaky_relu, clamp,
// deformable bilinear sampling, mean_abs_diff) fold the piece each element
// falls on into a running hash. Two evaluations with equal fingerprints sit
// on the same smooth piece of the network function.
class PieceTrace {
public:
    PieceTrace();
    ~PieceTrace();
    PieceTrace(const PieceTrace&) = delete;
    PieceTrace& operator=(const PieceTrace&) = delete;

    std::uint64_t fingerprint() const noexcept { return hash_; }
    void mix(std::uint64_t v) noexcept { hash_ = (hash_ ^ v) * 0x100000001b3ULL; }
    Real margin() const noexcept { return margin_; }
    void note_margin(Real d) noexcept { margin_ = d < margin_ ? d : margin_; }

    static PieceTrace* active() noexcept;

private:
    PieceTrace* prev_;
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
    Real margin_ = 1e300;
};

// Differentiable primitives over C×H×W tensors. Each op records its own
// backward rule on the tape; none holds state between calls.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);

// x: C×H×W, w: C×1×1 broadcast over the plane.
Var mul_channel(const Var& x, const Var& w);

Var concat(const std::vector<Var>& parts);
Var slice(const Var& x, int begin, int end);

Var leaky_relu(const Var& x, Real slope);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var clamp(const Var& x, Real lo, Real hi);

// Cross-correlation with zero padding. w: Cout×Cin×k×k, b: Cout (may be undefined).
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// Modulated deformable 3×3 convolution (stride 1, pad 1, one offset group).
// offset: 18×H×W with channel 2k holding the y- and 2k+1 the x-displacement
// of tap k (row-major taps); mask: 9×H×W.
Var deform_conv2d(const Var& x, const Var& offset, const Var& mask, const Var& w, const Var& b);

// Per-channel normalization over H×W; gamma/beta of length C are optional.
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, Real eps);

// Normalization over every element with elementwise affine of x's shape.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps);

// Softmax over all positions of a 1×H×W map.
Var spatial_softmax(const Var& logits);

// out[c] = Σ_p weights[p] · x[c, p]; x: C×H×W, weights: 1×H×W → C×1×1.
Var context_pool(const Var& x, const Var& weights);

// Bilinear resize with half-pixel centres (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);

Var tonemap(const Var& x, Real mu);

Var sum(const Var& x);
Var mean_abs_diff(const Var& a, const Var& b);
// Σ x·w for a fixed weight tensor.
Var dot(const Var& x, const Tensor& w);

} // namespace sthdr
