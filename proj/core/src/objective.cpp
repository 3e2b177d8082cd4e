#include "sthdr/objective.hpp"

#include "sthdr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace sthdr {

Real tonemap(Real h, Real mu) {
    if (!(mu > 0)) throw ConfigError("tonemap: mu must be positive");
    return std::log1p(mu * h) / std::log1p(mu);
}

Tensor tonemap(const Tensor& h, Real mu) {
    if (!(mu > 0)) throw ConfigError("tonemap: mu must be positive");
    const Real denom = std::log1p(mu);
    Tensor out(h.shape());
    for (std::size_t i = 0; i < h.size(); ++i) {
        const Real v = h[i];
        if (!(v >= -1e-3 && v <= 1 + 1e-3)) throw RangeError("tonemap: value " + std::to_string(v) + " outside [0,1]");
        out[i] = std::log1p(mu * std::clamp(v, Real(0), Real(1))) / denom;
    }
    return out;
}

std::vector<Tensor> gt_pyramid(const Tensor& gt, int n_scales) {
    std::vector<Tensor> out;
    out.push_back(gt);
    for (int s = 1; s < n_scales; ++s) out.push_back(bilinear_resample(out.back(), Resample::Half));
    return out;
}

namespace {
void check_counts(std::size_t preds, std::size_t gts, std::size_t lambda) {
    if (preds != gts || preds != lambda)
        throw ShapeError("multiscale loss: " + std::to_string(preds) + " predictions, " + std::to_string(gts) +
                         " targets, " + std::to_string(lambda) + " weights");
}
} // namespace

LossTerms multiscale_l1(const ScalePyramidPrediction& preds, const std::vector<Tensor>& gts,
                        const std::vector<Real>& lambda, Real mu) {
    check_counts(preds.preds.size(), gts.size(), lambda.size());
    if (!preds.stage1.empty()) check_counts(preds.stage1.size(), gts.size(), lambda.size());
    LossTerms out;
    std::vector<Var> terms;
    for (std::size_t s = 0; s < gts.size(); ++s) {
        const Var target = Var::constant(tonemap(gts[s], mu));
        const Var l = mean_abs_diff(tonemap(preds.preds[s], mu), target);
        out.report.per_scale.push_back(l.value().item());
        terms.push_back(scale(l, lambda[s]));
        if (!preds.stage1.empty()) {
            const Var l1 = mean_abs_diff(tonemap(preds.stage1[s], mu), target);
            out.report.per_stage1.push_back(l1.value().item());
            terms.push_back(scale(l1, lambda[s]));
        }
    }
    out.total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
    out.report.total = out.total.value().item();
    return out;
}

LossReport multiscale_l1(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                         const std::vector<Real>& lambda, Real mu) {
    check_counts(preds.size(), gts.size(), lambda.size());
    LossReport r;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        require_same_shape(preds[s], gts[s], "multiscale loss");
        const Tensor a = tonemap(preds[s], mu), b = tonemap(gts[s], mu);
        Real acc = 0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
        r.per_scale.push_back(acc / static_cast<Real>(a.size()));
        r.total += lambda[s] * r.per_scale.back();
    }
    return r;
}

Real psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    Real mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    mse /= static_cast<Real>(a.size());
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 10 * std::log10(1 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr Real kSigma = 1.5;

std::array<Real, kWindow> gaussian_taps() {
    std::array<Real, kWindow> taps{};
    Real total = 0;
    for (int i = 0; i < kWindow; ++i) {
        const Real d = i - kWindow / 2;
        taps[i] = std::exp(-d * d / (2 * kSigma * kSigma));
        total += taps[i];
    }
    for (Real& t : taps) t /= total;
    return taps;
}

// Separable valid-mode Gaussian filter of one plane.
std::vector<Real> filter_valid(const Real* src, int h, int w, const std::array<Real, kWindow>& taps) {
    const int oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<Real> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            Real acc = 0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * src[y * w + x + k];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<Real> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            Real acc = 0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

} // namespace

Real ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    require_chw(a, "ssim");
    const int c = a.channels(), h = a.height(), w = a.width();
    if (h < kWindow || w < kWindow)
        throw ShapeError("ssim: image " + to_string(a.shape()) + " smaller than the 11×11 window");
    const Real c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto taps = gaussian_taps();
    const std::size_t plane = a.plane();
    Real total = 0;
    std::size_t count = 0;
    std::vector<Real> aa(plane), bb(plane), ab(plane);
    for (int ch = 0; ch < c; ++ch) {
        const Real* pa = a.ptr() + ch * plane;
        const Real* pb = b.ptr() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, h, w, taps);
        const auto mu_b = filter_valid(pb, h, w, taps);
        const auto e_aa = filter_valid(aa.data(), h, w, taps);
        const auto e_bb = filter_valid(bb.data(), h, w, taps);
        const auto e_ab = filter_valid(ab.data(), h, w, taps);
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const Real ma = mu_a[i], mb = mu_b[i];
            const Real va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        count += mu_a.size();
    }
    return total / static_cast<Real>(count);
}

MetricReport evaluate_prediction(const Tensor& pred, const Tensor& gt, Real mu, std::string scene_id) {
    MetricReport r;
    r.scene_id = std::move(scene_id);
    const Tensor tp = tonemap(pred, mu), tg = tonemap(gt, mu);
    r.psnr_mu = psnr(tp, tg);
    r.psnr_l = psnr(pred, gt);
    r.ssim_mu = ssim(tp, tg);
    r.ssim_l = ssim(pred, gt);
    return r;
}

MetricReport average_metrics(const std::vector<MetricReport>& rows) {
    MetricReport avg;
    avg.scene_id = "average";
    if (rows.empty()) return avg;
    for (const auto& r : rows) {
        avg.psnr_mu += r.psnr_mu;
        avg.psnr_l += r.psnr_l;
        avg.ssim_mu += r.ssim_mu;
        avg.ssim_l += r.ssim_l;
    }
    const auto n = static_cast<Real>(rows.size());
    avg.psnr_mu /= n;
    avg.psnr_l /= n;
    avg.ssim_mu /= n;
    avg.ssim_l /= n;
    return avg;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricReport>& rows) {
    os << "scene,psnr_mu,psnr_l,ssim_mu,ssim_l\n";
    auto line = [&os](const MetricReport& r) {
        os << r.scene_id << ',' << std::fixed << std::setprecision(4) << r.psnr_mu << ',' << r.psnr_l << ','
           << std::setprecision(6) << r.ssim_mu << ',' << r.ssim_l << '\n';
    };
    for (const auto& r : rows) line(r);
    line(average_metrics(rows));
}

} // namespace sthdr
