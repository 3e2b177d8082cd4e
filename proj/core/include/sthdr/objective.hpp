#pragma once

#include "sthdr/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sthdr {

inline constexpr Real kPsnrCap = 99.0;

// μ-law range compression log(1 + μh) / log(1 + μ).
Real tonemap(Real h, Real mu);
// Values outside [0,1] by more than 1e-3 raise RangeError; smaller excursions are clamped.
Tensor tonemap(const Tensor& h, Real mu);

struct LossReport {
    Real total = 0;
    std::vector<Real> per_scale;
    std::vector<Real> per_stage1; // empty unless stage 1 is supervised
};

struct LossTerms {
    Var total;
    LossReport report;
};

// Ground truth at every scale via the same ×0.5 cascade as the input pyramid.
std::vector<Tensor> gt_pyramid(const Tensor& gt, int n_scales);

// Σ λ_s · mean|τ(pred_s) − τ(gt_s)|, plus stage-1 terms with the same λ when present.
LossTerms multiscale_l1(const ScalePyramidPrediction& preds, const std::vector<Tensor>& gts,
                        const std::vector<Real>& lambda, Real mu);
LossReport multiscale_l1(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                         const std::vector<Real>& lambda, Real mu);

// 10·log10(1/MSE) with peak 1; zero MSE reports kPsnrCap.
Real psnr(const Tensor& a, const Tensor& b);

// Mean structural similarity: 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
// K2 = 0.03, L = 1, valid positions only, averaged over channels.
Real ssim(const Tensor& a, const Tensor& b);

struct MetricReport {
    std::string scene_id;
    Real psnr_mu = 0, psnr_l = 0, ssim_mu = 0, ssim_l = 0;
};

MetricReport evaluate_prediction(const Tensor& pred, const Tensor& gt, Real mu, std::string scene_id);
MetricReport average_metrics(const std::vector<MetricReport>& rows);

// One row per scene then an "average" row.
void write_metrics_csv(std::ostream& os, const std::vector<MetricReport>& rows);

} // namespace sthdr
