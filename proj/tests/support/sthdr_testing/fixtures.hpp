#pragma once

#include "sthdr/data_io.hpp"
#include "sthdr/params.hpp"
#include "sthdr/rng.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace sthdr::testing {

struct SceneOptions {
    int height = 64;
    int width = 64;
    std::uint64_t seed = 1;
    std::array<Real, 3> biases{-2, 0, 2};
    int motion = 2; // pixels of shift applied to the non-reference frames
    bool with_gt = true;
    Real gamma = 2.2;
};

// Procedural radiance (smooth ramp, gaussian blobs, fine texture) in (0, 1]
// and the three LDR exposures it produces, with the outer frames displaced.
ExposureStack synthetic_scene(const SceneOptions& opt);

// Writes ldr_0..2 as 16-bit TIFF, exposure.txt and (optionally) HDRImg.hdr.
void write_scene(const std::filesystem::path& dir, const ExposureStack& scene);

// <root>/Training/<n> and <root>/Test/<n> fixture scenes.
void write_dataset(const std::filesystem::path& root, int n_train, int n_test, SceneOptions opt);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

Tensor random_tensor(const Shape& shape, Rng& rng, Real lo = -1, Real hi = 1);

// Central-difference check of every parameter and input gradient of a scalar
// function. Coordinates are sampled per tensor; the relative error is
// |a - n| / max(|a|, |n|, floor). A ±step stencil that leaves the smooth
// piece of the base point (an activation changes side, a bilinear tap changes
// cell, ...) does not estimate a derivative; for such coordinates the step is
// divided by 10 until the stencil stays on the piece, and `shrunk` counts them.
struct GradCheckOptions {
    Real step = 1e-3;
    Real floor = 1e-3;
    Real min_step = 1e-8;
    int samples_per_tensor = 6;
    std::uint64_t seed = 7;
};

struct GradCheckResult {
    Real max_rel = 0;
    std::size_t checked = 0;
    std::size_t shrunk = 0;
    std::size_t unresolved = 0; // still off-piece at min_step
    std::string worst;
};

using ScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;

// Smallest distance of any piecewise op input to its breakpoint when f is
// evaluated at the given point.
Real piece_margin(const ParamStore& params, const std::vector<Tensor>& inputs, const ScalarFn& f);

GradCheckResult grad_check(ParamStore& params, std::vector<Tensor>& inputs, const ScalarFn& f,
                           const GradCheckOptions& opt = {});

// Fills every tensor whose name contains `needle` with U(-amp, amp).
void jitter_params(ParamStore& params, const std::string& needle, Real amp, std::uint64_t seed);

// Sets every deformable offset branch under `needle` to a half-pixel bias
// plus small random weights (|w| <= 0.02 / fan_in), so sample points sit
// strictly between grid lines where bilinear sampling is smooth.
void offsets_off_grid(ParamStore& params, const std::string& needle, std::uint64_t seed);

} // namespace sthdr::testing
