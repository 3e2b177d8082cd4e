#pragma once

#include "sthdr/rng.hpp"
#include "sthdr/tensor.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sthdr {

// One scene: three LDR frames (3×H×W in [0,1], ascending exposure; the
// middle frame is the reference), their exposure biases in stops and the
// optional linear ground truth.
struct ExposureStack {
    std::array<Tensor, 3> ldr;
    std::array<Real, 3> biases{};
    std::optional<Tensor> gt;
    std::string scene_id;

    int height() const { return ldr[1].height(); }
    int width() const { return ldr[1].width(); }
    void validate() const;
};

// Per-frame 6×H×W tensor: the LDR frame stacked on its linearization.
using NetworkInput = Tensor;

struct SamplePatch {
    std::array<NetworkInput, 3> inputs;
    Tensor gt;
    int size = 0;
    int origin_y = 0, origin_x = 0;
};

// I^γ / t with t = 2^(bias − bias_min).
Tensor linearize(const Tensor& ldr, Real bias, Real bias_min, Real gamma);
std::array<Real, 3> exposure_times(const std::array<Real, 3>& biases);
std::array<NetworkInput, 3> assemble_inputs(const ExposureStack& stack, Real gamma);

std::array<Real, 3> read_exposure_file(const std::filesystem::path& path);
ExposureStack load_scene(const std::filesystem::path& dir);

// Scene directories of `<root>/<split>/`, sorted by name.
std::vector<std::filesystem::path> list_scenes(const std::filesystem::path& root, const std::string& split);

// Dihedral group element k ∈ [0, 8): horizontal flip when k ≥ 4, then k mod 4
// counter-clockwise quarter turns.
Tensor dihedral(const Tensor& chw, int k);
int dihedral_inverse(int k);
SamplePatch augment_dihedral(const SamplePatch& sample, int k);

// Co-located P×P crop of all frames and the ground truth; P must be a
// multiple of 4 and fit the scene.
SamplePatch random_crop(const ExposureStack& stack, int patch, Rng& rng, Real gamma);
SamplePatch crop_at(const ExposureStack& stack, int patch, int y0, int x0, Real gamma);

// Reflection padding on the bottom/right edges and the matching crop.
Tensor pad_reflect(const Tensor& chw, int out_h, int out_w);
Tensor crop(const Tensor& chw, int y0, int x0, int h, int w);

// 16-bit TIFF frames normalized by 65535 and μ-law PNG previews.
Tensor read_tiff16(const std::filesystem::path& path);
void write_tiff16(const std::filesystem::path& path, const Tensor& image);
void write_png_preview(const std::filesystem::path& path, const Tensor& linear, Real mu);

} // namespace sthdr
