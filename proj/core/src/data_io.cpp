#include "sthdr/data_io.hpp"

#include "sthdr/errors.hpp"
#include "sthdr/rgbe.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace sthdr {

namespace {

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

void require_unit_range(const Tensor& t, const std::string& what) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!(t[i] >= 0 && t[i] <= 1))
            throw RangeError(what + ": value " + std::to_string(t[i]) + " outside [0,1]");
}

} // namespace

void ExposureStack::validate() const {
    for (const Tensor& f : ldr) {
        require_chw(f, "LDR frame");
        if (f.channels() != 3) throw ShapeError("LDR frame must have 3 channels, got " + to_string(f.shape()));
        if (f.shape() != ldr[1].shape())
            throw ShapeError("scene '" + scene_id + "': frame sizes differ " + to_string(f.shape()) + " vs " +
                             to_string(ldr[1].shape()));
        require_unit_range(f, "LDR frame");
    }
    if (!(biases[0] < biases[1] && biases[1] < biases[2]))
        throw RangeError("scene '" + scene_id + "': exposure biases must be strictly increasing");
    if (gt) {
        if (gt->shape() != ldr[1].shape())
            throw ShapeError("scene '" + scene_id + "': ground truth " + to_string(gt->shape()) + " vs frames " +
                             to_string(ldr[1].shape()));
        require_unit_range(*gt, "ground truth");
    }
}

Tensor linearize(const Tensor& ldr, Real bias, Real bias_min, Real gamma) {
    if (!(gamma > 0)) throw RangeError("linearize: gamma must be positive");
    if (bias < bias_min) throw RangeError("linearize: bias below bias_min");
    const Real t = std::exp2(bias - bias_min);
    Tensor out(ldr.shape());
    for (std::size_t i = 0; i < ldr.size(); ++i) {
        const Real v = ldr[i];
        if (!(v >= 0 && v <= 1)) throw RangeError("linearize: input value " + std::to_string(v) + " outside [0,1]");
        out[i] = std::pow(v, gamma) / t;
    }
    return out;
}

std::array<Real, 3> exposure_times(const std::array<Real, 3>& biases) {
    const Real lo = std::min({biases[0], biases[1], biases[2]});
    return {std::exp2(biases[0] - lo), std::exp2(biases[1] - lo), std::exp2(biases[2] - lo)};
}

std::array<NetworkInput, 3> assemble_inputs(const ExposureStack& stack, Real gamma) {
    const Real lo = std::min({stack.biases[0], stack.biases[1], stack.biases[2]});
    std::array<NetworkInput, 3> out;
    for (std::size_t i = 0; i < 3; ++i) {
        const Tensor lin = linearize(stack.ldr[i], stack.biases[i], lo, gamma);
        out[i] = concat_channels({&stack.ldr[i], &lin});
    }
    return out;
}

std::array<Real, 3> read_exposure_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw MalformedSceneError(path.parent_path().string(), "cannot read " + path.filename().string());
    std::vector<Real> values;
    std::string tok;
    while (f >> tok) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw MalformedSceneError(path.parent_path().string(), "non-numeric exposure value '" + tok + "'");
        }
    }
    if (values.size() != 3)
        throw MalformedSceneError(path.parent_path().string(),
                                  "exposure file lists " + std::to_string(values.size()) + " values, expected 3");
    return {values[0], values[1], values[2]};
}

ExposureStack load_scene(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw MalformedSceneError(dir.string(), "not a directory");
    std::vector<fs::path> tiffs, hdrs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower_ext(entry.path());
        if (ext == ".tif" || ext == ".tiff") tiffs.push_back(entry.path());
        if (ext == ".hdr") hdrs.push_back(entry.path());
    }
    if (tiffs.size() != 3)
        throw MalformedSceneError(dir.string(), "found " + std::to_string(tiffs.size()) + " TIFF frames, expected 3");
    std::sort(tiffs.begin(), tiffs.end());
    const fs::path exposure = dir / "exposure.txt";
    if (!fs::exists(exposure)) throw MalformedSceneError(dir.string(), "missing exposure.txt");

    ExposureStack s;
    s.scene_id = dir.filename().string();
    for (std::size_t i = 0; i < 3; ++i) s.ldr[i] = read_tiff16(tiffs[i]);
    s.biases = read_exposure_file(exposure);
    fs::path gt_path = dir / "HDRImg.hdr";
    if (!fs::exists(gt_path) && hdrs.size() == 1) gt_path = hdrs.front();
    if (fs::exists(gt_path)) {
        Tensor gt = read_hdr(gt_path);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = std::clamp(gt[i], Real(0), Real(1));
        s.gt = std::move(gt);
    }
    try {
        s.validate();
    } catch (const ShapeError& e) {
        throw MalformedSceneError(dir.string(), e.what());
    } catch (const RangeError& e) {
        throw MalformedSceneError(dir.string(), e.what());
    }
    return s;
}

std::vector<fs::path> list_scenes(const fs::path& root, const std::string& split) {
    const fs::path dir = root / split;
    if (!fs::is_directory(dir)) throw DataError("dataset split '" + dir.string() + "' does not exist");
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

Tensor dihedral(const Tensor& t, int k) {
    if (k < 0 || k > 7) throw RangeError("dihedral index " + std::to_string(k) + " outside 0..7");
    require_chw(t, "dihedral");
    const int c = t.channels(), h = t.height(), w = t.width();
    const bool flip = k >= 4;
    const int rot = k % 4;
    const bool swap = rot % 2 == 1;
    const int oh = swap ? w : h, ow = swap ? h : w;
    Tensor out = Tensor::chw(c, oh, ow);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                // Invert the rotation to find the source pixel in the flipped frame.
                int sy = y, sx = x;
                switch (rot) {
                case 1: sy = x; sx = w - 1 - y; break;
                case 2: sy = h - 1 - y; sx = w - 1 - x; break;
                case 3: sy = h - 1 - x; sx = y; break;
                default: break;
                }
                if (flip) sx = w - 1 - sx;
                out.at(ch, y, x) = t.at(ch, sy, sx);
            }
    return out;
}

int dihedral_inverse(int k) {
    if (k < 0 || k > 7) throw RangeError("dihedral index " + std::to_string(k) + " outside 0..7");
    return k >= 4 ? k : (4 - k) % 4;
}

SamplePatch augment_dihedral(const SamplePatch& sample, int k) {
    SamplePatch out = sample;
    for (std::size_t i = 0; i < 3; ++i) out.inputs[i] = dihedral(sample.inputs[i], k);
    out.gt = dihedral(sample.gt, k);
    return out;
}

SamplePatch crop_at(const ExposureStack& stack, int patch, int y0, int x0, Real gamma) {
    if (patch <= 0 || patch % 4 != 0) throw RangeError("patch size must be a positive multiple of 4");
    if (patch > stack.height() || patch > stack.width())
        throw RangeError("patch " + std::to_string(patch) + " exceeds scene " + std::to_string(stack.height()) + "x" +
                         std::to_string(stack.width()));
    if (y0 < 0 || x0 < 0 || y0 + patch > stack.height() || x0 + patch > stack.width())
        throw RangeError("crop window outside the scene");
    if (!stack.gt) throw DataError("scene '" + stack.scene_id + "' has no ground truth and cannot be used for training");
    ExposureStack window;
    window.scene_id = stack.scene_id;
    window.biases = stack.biases;
    for (std::size_t i = 0; i < 3; ++i) window.ldr[i] = crop(stack.ldr[i], y0, x0, patch, patch);
    SamplePatch s;
    s.inputs = assemble_inputs(window, gamma);
    s.gt = crop(*stack.gt, y0, x0, patch, patch);
    s.size = patch;
    s.origin_y = y0;
    s.origin_x = x0;
    return s;
}

SamplePatch random_crop(const ExposureStack& stack, int patch, Rng& rng, Real gamma) {
    if (patch <= 0 || patch > stack.height() || patch > stack.width())
        throw RangeError("patch " + std::to_string(patch) + " does not fit scene " + std::to_string(stack.height()) +
                         "x" + std::to_string(stack.width()));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(stack.height() - patch + 1)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(stack.width() - patch + 1)));
    return crop_at(stack, patch, y0, x0, gamma);
}

Tensor pad_reflect(const Tensor& t, int out_h, int out_w) {
    require_chw(t, "pad_reflect");
    const int c = t.channels(), h = t.height(), w = t.width();
    if (out_h < h || out_w < w) throw ShapeError("pad_reflect: target smaller than input");
    if (out_h - h >= h || out_w - w >= w) throw ShapeError("pad_reflect: padding must be smaller than the image");
    auto reflect = [](int i, int n) { return i < n ? i : 2 * (n - 1) - i; };
    Tensor out = Tensor::chw(c, out_h, out_w);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) out.at(ch, y, x) = t.at(ch, reflect(y, h), reflect(x, w));
    return out;
}

Tensor crop(const Tensor& t, int y0, int x0, int h, int w) {
    require_chw(t, "crop");
    if (y0 < 0 || x0 < 0 || y0 + h > t.height() || x0 + w > t.width() || h <= 0 || w <= 0)
        throw ShapeError("crop window outside " + to_string(t.shape()));
    Tensor out = Tensor::chw(t.channels(), h, w);
    for (int ch = 0; ch < t.channels(); ++ch)
        for (int y = 0; y < h; ++y)
            std::copy_n(t.ptr() + (static_cast<std::size_t>(ch) * t.height() + y0 + y) * t.width() + x0, w, &out.at(ch, y, 0));
    return out;
}

Tensor read_tiff16(const fs::path& path) {
    const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw MalformedSceneError(path.parent_path().string(), "cannot decode " + path.filename().string());
    if (m.depth() != CV_16U || m.channels() != 3)
        throw MalformedSceneError(path.parent_path().string(),
                                  path.filename().string() + " is not a 16-bit 3-channel TIFF");
    Tensor out = Tensor::chw(3, m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3w>(y);
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[x][2 - c] / 65535.0; // BGR storage
    }
    return out;
}

void write_tiff16(const fs::path& path, const Tensor& image) {
    require_chw(image, "write_tiff16");
    require_unit_range(image, "write_tiff16");
    cv::Mat m(image.height(), image.width(), CV_16UC3);
    for (int y = 0; y < m.rows; ++y) {
        auto* row = m.ptr<cv::Vec3w>(y);
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c)
                row[x][2 - c] = static_cast<std::uint16_t>(std::lround(image.at(c, y, x) * 65535.0));
    }
    if (!cv::imwrite(path.string(), m)) throw DataError("cannot write '" + path.string() + "'");
}

void write_png_preview(const fs::path& path, const Tensor& linear, Real mu) {
    require_chw(linear, "write_png_preview");
    const Real denom = std::log1p(mu);
    cv::Mat m(linear.height(), linear.width(), CV_8UC3);
    for (int y = 0; y < m.rows; ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c) {
                const Real v = std::log1p(mu * std::clamp(linear.at(c, y, x), Real(0), Real(1))) / denom;
                row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    }
    if (!cv::imwrite(path.string(), m)) throw DataError("cannot write '" + path.string() + "'");
}

} // namespace sthdr
