#pragma once

#include "sthdr/nn_blocks.hpp"

#include <optional>

namespace sthdr {

// Two-level U-shaped translator built from HIN blocks. The lower level runs
// at half resolution with width × bottleneck_mult channels.
class EncoderDecoder {
public:
    EncoderDecoder() = default;
    EncoderDecoder(ParamStore& store, std::string name, int width, int bottleneck_mult,
                   Real slope = kDefaultLeakySlope);

    Var operator()(Graph& g, const Var& x) const;

private:
    int width_ = 0;
    HinBlock enc1_;
    Conv2d down_;
    HinBlock enc2_, bottleneck_;
    Conv2d up_, skip_;
    HinBlock dec1_;
};

struct MergeOutput {
    Var pred_stage1; // 3×H×W in [0,1]
    Var pred_stage2; // 3×H×W in [0,1]
    Var feat_out;    // stage-2 decoder features
    Var sam_features;
};

// Stage 1 encoder-decoder + SAM, then a stage-2 encoder-decoder over
// [SAM features, z']. Both predictions are residuals over the linear reference.
class MergeNet {
public:
    MergeNet() = default;
    // with_cross_scale declares the 2C → C fusion conv for the coarser-scale feature.
    MergeNet(ParamStore& store, std::string name, int width, int bottleneck_mult, bool with_cross_scale,
             Real slope = kDefaultLeakySlope);

    MergeOutput operator()(Graph& g, const Var& z, const Var& ref_img, const Var& cross_scale_feat = {}) const {
        return forward(g, z, ref_img, cross_scale_feat, false);
    }
    // zero_sam_features replaces the SAM features with zeros before stage 2
    // (sensitivity probe).
    MergeOutput forward(Graph& g, const Var& z, const Var& ref_img, const Var& cross_scale_feat,
                        bool zero_sam_features) const;

private:
    int width_ = 0;
    bool cross_ = false;
    Conv2d cross_fuse_;
    EncoderDecoder stage1_;
    Sam sam_;
    Conv2d stage2_in_;
    EncoderDecoder stage2_;
    Conv2d out_;
};

} // namespace sthdr
