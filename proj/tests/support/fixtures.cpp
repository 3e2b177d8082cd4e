#include "sthdr_testing/fixtures.hpp"

#include "sthdr/errors.hpp"
#include "sthdr/ops.hpp"
#include "sthdr/rgbe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>

#include <unistd.h>

namespace fs = std::filesystem;

namespace sthdr::testing {

namespace {

struct Blob {
    Real cy, cx, sigma;
    std::array<Real, 3> color;
};

struct RadianceField {
    std::vector<Blob> blobs;
    std::array<Real, 3> base;
    Real fy, fx, phase;

    Real at(int c, Real y, Real x, int h, int w) const {
        const Real u = y / h, v = x / w;
        Real r = base[c] * (0.3 + 0.7 * u * v);
        r += 0.05 * (1 + std::sin(fy * y + fx * x + phase + c));
        for (const Blob& b : blobs) {
            const Real d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
            r += b.color[c] * std::exp(-d2 / (2 * b.sigma * b.sigma));
        }
        return std::clamp(r, Real(0.002), Real(1));
    }
};

RadianceField make_field(const SceneOptions& opt, Rng& rng) {
    RadianceField f;
    for (Real& b : f.base) b = rng.uniform(0.02, 0.15);
    f.fy = rng.uniform(0.3, 0.9);
    f.fx = rng.uniform(0.3, 0.9);
    f.phase = rng.uniform(0, 2 * std::numbers::pi);
    const int n = 3 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n; ++i) {
        Blob b;
        b.cy = rng.uniform(0, opt.height);
        b.cx = rng.uniform(0, opt.width);
        b.sigma = rng.uniform(3, std::max(4.0, opt.height / 5.0));
        const Real peak = i == 0 ? 0.9 : rng.uniform(0.05, 0.6);
        for (Real& c : b.color) c = peak * rng.uniform(0.6, 1.0);
        f.blobs.push_back(b);
    }
    return f;
}

} // namespace

ExposureStack synthetic_scene(const SceneOptions& opt) {
    Rng rng(opt.seed);
    const RadianceField field = make_field(opt, rng);
    const std::array<Real, 3> t = exposure_times(opt.biases);
    const std::array<std::pair<int, int>, 3> shift{{{opt.motion, -opt.motion}, {0, 0}, {-opt.motion, opt.motion / 2}}};

    ExposureStack s;
    s.biases = opt.biases;
    s.scene_id = "synthetic_" + std::to_string(opt.seed);
    Tensor gt = Tensor::chw(3, opt.height, opt.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < opt.height; ++y)
            for (int x = 0; x < opt.width; ++x) gt.at(c, y, x) = field.at(c, y, x, opt.height, opt.width);
    for (int i = 0; i < 3; ++i) {
        Tensor ldr = Tensor::chw(3, opt.height, opt.width);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < opt.height; ++y)
                for (int x = 0; x < opt.width; ++x) {
                    const Real h = field.at(c, y + shift[i].first, x + shift[i].second, opt.height, opt.width);
                    const Real v = std::pow(std::min(Real(1), h * t[i]), 1 / opt.gamma);
                    ldr.at(c, y, x) = std::round(v * 65535.0) / 65535.0;
                }
        s.ldr[i] = std::move(ldr);
    }
    if (opt.with_gt) s.gt = std::move(gt);
    return s;
}

void write_scene(const fs::path& dir, const ExposureStack& scene) {
    fs::create_directories(dir);
    for (int i = 0; i < 3; ++i) write_tiff16(dir / ("ldr_" + std::to_string(i) + ".tif"), scene.ldr[i]);
    std::ofstream e(dir / "exposure.txt");
    e << scene.biases[0] << '\n' << scene.biases[1] << '\n' << scene.biases[2] << '\n';
    if (scene.gt) write_hdr(dir / "HDRImg.hdr", *scene.gt);
}

void write_dataset(const fs::path& root, int n_train, int n_test, SceneOptions opt) {
    const std::uint64_t base = opt.seed;
    for (int i = 0; i < n_train; ++i) {
        opt.seed = base + static_cast<std::uint64_t>(i);
        write_scene(root / "Training" / ("scene_" + std::to_string(i)), synthetic_scene(opt));
    }
    for (int i = 0; i < n_test; ++i) {
        opt.seed = base + 1000 + static_cast<std::uint64_t>(i);
        write_scene(root / "Test" / ("scene_" + std::to_string(i)), synthetic_scene(opt));
    }
}

fs::path scratch_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const fs::path p = fs::temp_directory_path() /
                       ("sthdr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Tensor random_tensor(const Shape& shape, Rng& rng, Real lo, Real hi) {
    Tensor t(shape);
    for (Real& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

Real piece_margin(const ParamStore& params, const std::vector<Tensor>& inputs, const ScalarFn& f) {
    PieceTrace trace;
    Graph g(params, false);
    std::vector<Var> consts;
    for (const Tensor& t : inputs) consts.push_back(Var::constant(t));
    f(g, consts);
    return trace.margin();
}

GradCheckResult grad_check(ParamStore& params, std::vector<Tensor>& inputs, const ScalarFn& f,
                           const GradCheckOptions& opt) {
    TensorMap analytic = zeros_like(params.tensors());
    std::vector<Tensor> input_grads;
    {
        Graph g(params, true);
        std::vector<Var> leaves;
        for (const Tensor& t : inputs) leaves.push_back(Var::leaf(t));
        const Var loss = f(g, leaves);
        backward(loss);
        g.accumulate_grads(analytic);
        for (const Var& l : leaves) input_grads.push_back(l.grad());
    }
    auto evaluate = [&] {
        PieceTrace trace;
        Graph g(params, false);
        std::vector<Var> consts;
        for (const Tensor& t : inputs) consts.push_back(Var::constant(t));
        const Real v = f(g, consts).value().item();
        return std::pair{v, trace.fingerprint()};
    };
    const std::uint64_t base = evaluate().second;

    GradCheckResult res;
    Rng rng(opt.seed);
    auto probe = [&](Tensor& target, const Tensor& grad, const std::string& label) {
        const int n = std::min<int>(opt.samples_per_tensor, static_cast<int>(target.size()));
        for (int s = 0; s < n; ++s) {
            const std::size_t i = rng.below(target.size());
            const Real saved = target[i];
            Real h = opt.step, up = 0, down = 0;
            bool smooth = false;
            for (; h >= opt.min_step; h /= 10) {
                target[i] = saved + h;
                const auto [fu, pu] = evaluate();
                target[i] = saved - h;
                const auto [fd, pd] = evaluate();
                up = fu;
                down = fd;
                if (pu == base && pd == base) {
                    smooth = true;
                    break;
                }
            }
            target[i] = saved;
            ++res.checked;
            if (!smooth) {
                ++res.unresolved;
                continue;
            }
            if (h < opt.step) ++res.shrunk;
            const Real numeric = (up - down) / (2 * h);
            const Real a = grad[i];
            const Real rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
            if (rel > res.max_rel) {
                res.max_rel = rel;
                res.worst = label + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                            std::to_string(numeric) + " step " + std::to_string(h);
            }
        }
    };
    for (auto& [name, t] : params.tensors()) probe(t, analytic.at(name), name);
    for (std::size_t k = 0; k < inputs.size(); ++k) probe(inputs[k], input_grads[k], "input" + std::to_string(k));
    return res;
}

void jitter_params(ParamStore& params, const std::string& needle, Real amp, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : params.tensors())
        if (name.find(needle) != std::string::npos)
            for (Real& v : t.data()) v = rng.uniform(-amp, amp);
}

void offsets_off_grid(ParamStore& params, const std::string& needle, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : params.tensors()) {
        if (name.find(needle) == std::string::npos) continue;
        if (name.ends_with(".offset.weight")) {
            const Real amp = 0.02 / (t.shape()[1] * t.shape()[2] * t.shape()[3]);
            for (Real& v : t.data()) v = rng.uniform(-amp, amp);
        } else if (name.ends_with(".offset.bias")) {
            t.fill(0.5);
        }
    }
}

} // namespace sthdr::testing
