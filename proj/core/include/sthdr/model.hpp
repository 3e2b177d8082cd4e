#pragma once

#include "sthdr/align.hpp"
#include "sthdr/merge.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sthdr {

enum class Variant { HSS, SS, MS, SCM_SS, SCM_MS };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name); // ConfigError lists the valid names
bool is_multi_scale(Variant v);
bool has_align_net(Variant v);

struct ModelConfig {
    Variant variant = Variant::SCM_MS;
    int n_scales = 3;
    int base_channels = 32;
    int bottleneck_mult = 4;
    Real gamma = 2.2;
    Real mu = 5000;
    std::vector<Real> lambda{1, 1, 1};
    Real leaky_slope = kDefaultLeakySlope;
    bool supervise_stage1 = false;

    // Defaults for a variant; tiny = base width 8 and two scales.
    static ModelConfig for_variant(Variant v, bool tiny = false);
    void validate() const;
    // Spatial dimensions must be multiples of this.
    int required_multiple() const;
};

struct ScalePyramidPrediction {
    std::vector<Var> preds;  // finest first
    std::vector<Var> stage1; // filled only when stage 1 is supervised
};

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }
    ParamStore& params() noexcept { return *params_; }
    const ParamStore& params() const noexcept { return *params_; }

    ScalePyramidPrediction forward(Graph& g, const Var& x1, const Var& x2, const Var& x3) const;
    ScalePyramidPrediction forward(Graph& g, const std::array<Tensor, 3>& inputs) const;

    // Inference without a tape; returns the finest-scale prediction.
    Tensor predict(const std::array<Tensor, 3>& inputs) const;

    std::size_t count_parameters() const { return params_->count(); }
    // Parameter totals grouped by the first two path components.
    std::vector<std::pair<std::string, std::size_t>> breakdown() const;
    std::vector<std::string> shared_weight_map() const;

    // Replaces every parameter; names and shapes must match exactly.
    void load_parameters(const TensorMap& tensors);

private:
    struct ScaleResult {
        Var pred, stage1, feat;
    };
    ScaleResult forward_scale(Graph& g, const Var& x1, const Var& x2, const Var& x3, const Var& cross) const;

    ModelConfig cfg_;
    std::unique_ptr<ParamStore> params_;
    Conv2d front_;
    AlignNet align_;
    MergeNet merge_;
    EncoderDecoder hss_body_;
    Conv2d hss_out_;
};

} // namespace sthdr
