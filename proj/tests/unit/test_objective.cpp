#include "sthdr/data_io.hpp"
#include "sthdr/errors.hpp"
#include "sthdr/objective.hpp"
#include "sthdr_testing/fixtures.hpp"
#include "sthdr_testing/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace sthdr;
using namespace sthdr::testing;

namespace {

Real inverse_tonemap(Real t, Real mu) { return std::expm1(t * std::log1p(mu)) / mu; }

// A prediction whose tonemapped values sit exactly c above the target's.
Tensor offset_in_tonemap(const Tensor& gt, Real c, Real mu) {
    Tensor p(gt.shape());
    for (std::size_t i = 0; i < gt.size(); ++i) p[i] = inverse_tonemap(tonemap(gt[i], mu) + c, mu);
    return p;
}

} // namespace

TEST_CASE("tonemap fixtures") {
    CHECK(tonemap(0.0, 5000) == 0.0);
    CHECK(tonemap(1.0, 5000) == 1.0);
    CHECK(std::abs(tonemap(0.1, 5000) - std::log(501.0) / std::log(5001.0)) < 1e-12);
    CHECK_THROWS_AS(tonemap(0.5, 0), ConfigError);
    CHECK_THROWS_AS(tonemap(Tensor({1}, 1.01), 5000), RangeError);
    CHECK(tonemap(Tensor({1}, 1.0005), 5000)[0] == 1.0);
}

TEST_CASE("tonemap is increasing and lies above the identity") {
    Real prev = -1;
    for (int i = 0; i <= 1000; ++i) {
        const Real h = i / 1000.0, t = tonemap(h, 5000);
        CHECK(t > prev);
        CHECK(t >= h);
        prev = t;
    }
}

TEST_CASE("ground-truth pyramid halves each level") {
    Rng rng(1);
    const auto p = gt_pyramid(random_tensor({3, 16, 8}, rng, 0, 1), 3);
    REQUIRE(p.size() == 3);
    CHECK(p[1].shape() == Shape{3, 8, 4});
    CHECK(p[2].shape() == Shape{3, 4, 2});
}

TEST_CASE("loss algebra") {
    Rng rng(2);
    const Real mu = 5000;
    const Tensor gt = random_tensor({3, 16, 16}, rng, 0.0005, 0.02);
    const auto gts = gt_pyramid(gt, 3);

    SUBCASE("prediction equal to ground truth costs nothing") {
        const LossReport r = multiscale_l1(gts, gts, {1, 1, 1}, mu);
        CHECK(std::abs(r.total) <= 1e-7);
    }
    SUBCASE("totals are linear in the per-scale terms") {
        std::vector<Tensor> preds;
        const Real c[3] = {0.1, 0.2, 0.3};
        for (int s = 0; s < 3; ++s) preds.push_back(offset_in_tonemap(gts[s], c[s], mu));
        const LossReport r = multiscale_l1(preds, gts, {1, 1, 1}, mu);
        for (int s = 0; s < 3; ++s) CHECK(std::abs(r.per_scale[s] - c[s]) < 1e-9);
        CHECK(std::abs(r.total - 0.6) <= 1e-7);
        const LossReport w = multiscale_l1(preds, gts, {0.5, 2, 3}, mu);
        CHECK(std::abs(w.total - (0.05 + 0.4 + 0.9)) <= 1e-7);
    }
    SUBCASE("constant tonemapped error gives its magnitude") {
        const LossReport r = multiscale_l1({offset_in_tonemap(gts[0], -0.01, mu)}, {gts[0]}, {1}, mu);
        CHECK(std::abs(r.total - 0.01) < 1e-9);
    }
    SUBCASE("scale-count mismatch") {
        CHECK_THROWS_AS(multiscale_l1(gts, {gts[0], gts[1]}, {1, 1, 1}, mu), ShapeError);
    }
}

TEST_CASE("loss is unchanged by a joint dihedral transform of predictions and ground truth") {
    Rng rng(3);
    const Tensor gt = random_tensor({3, 16, 16}, rng, 0, 1);
    std::vector<Tensor> preds;
    for (const Tensor& g : gt_pyramid(gt, 3)) {
        Tensor p = g;
        for (Real& v : p.data()) v = std::clamp(v + rng.uniform(-0.2, 0.2), 0.0, 1.0);
        preds.push_back(p);
    }
    const Real base = multiscale_l1(preds, gt_pyramid(gt, 3), {1, 1, 1}, 5000).total;
    for (int k = 0; k < 8; ++k) {
        std::vector<Tensor> tp;
        for (const Tensor& p : preds) tp.push_back(dihedral(p, k));
        const Real t = multiscale_l1(tp, gt_pyramid(dihedral(gt, k), 3), {1, 1, 1}, 5000).total;
        CHECK(std::abs(t - base) <= 1e-6);
    }
}

TEST_CASE("differentiable loss matches the tensor loss") {
    Rng rng(4);
    const Tensor gt = random_tensor({3, 8, 8}, rng, 0, 1);
    const auto gts = gt_pyramid(gt, 2);
    ScalePyramidPrediction preds;
    std::vector<Tensor> plain;
    for (const Tensor& g : gts) {
        Tensor p = random_tensor(g.shape(), rng, 0, 1);
        plain.push_back(p);
        preds.preds.push_back(Var::constant(p));
    }
    const LossTerms lt = multiscale_l1(preds, gts, {1, 2}, 5000);
    CHECK(lt.report.total == doctest::Approx(multiscale_l1(plain, gts, {1, 2}, 5000).total).epsilon(1e-12));
    CHECK(lt.total.value().item() == lt.report.total);
}

TEST_CASE("psnr fixtures") {
    Rng rng(5);
    const Tensor a = random_tensor({3, 12, 12}, rng, 0, 0.8);
    Tensor b = a;
    for (Real& v : b.data()) v += 0.1;
    CHECK(std::abs(psnr(a, b) - 20.0) <= 1e-3);
    CHECK(psnr(a, a) == kPsnrCap);
    Real prev = kPsnrCap + 1;
    for (Real amp : {0.01, 0.05, 0.2}) {
        Tensor n = a;
        Rng r2(6);
        for (Real& v : n.data()) v += r2.uniform(-amp, amp);
        const Real p = psnr(a, n);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim fixtures") {
    Rng rng(7);
    const Tensor a = random_tensor({3, 16, 18}, rng, 0, 1);
    const Tensor b = random_tensor({3, 16, 18}, rng, 0, 1);
    CHECK(std::abs(ssim(a, a) - 1) <= 1e-9);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) <= 1e-9);
    CHECK(std::abs(ssim(a, b) - reference_ssim(a, b)) <= 1e-9);
    const Tensor c02 = Tensor::chw(3, 12, 12, 0.2), c08 = Tensor::chw(3, 12, 12, 0.8);
    CHECK(std::abs(ssim(c02, c08) - constant_pair_ssim(0.2, 0.8)) <= 1e-9);
    CHECK(std::abs(ssim(c02, c08) - 0.4707) <= 1e-3);
    CHECK_THROWS_AS(ssim(Tensor::chw(3, 10, 12), Tensor::chw(3, 10, 12)), ShapeError);
}

TEST_CASE("metric report and CSV layout") {
    Rng rng(8);
    const Tensor gt = random_tensor({3, 12, 12}, rng, 0, 1);
    std::vector<MetricReport> rows{evaluate_prediction(gt, gt, 5000, "a"), evaluate_prediction(gt, gt, 5000, "b")};
    CHECK(rows[0].psnr_mu == kPsnrCap);
    CHECK(rows[0].ssim_l == doctest::Approx(1));
    std::ostringstream os;
    write_metrics_csv(os, rows);
    std::istringstream is(os.str());
    std::string line;
    int n = 0;
    std::getline(is, line);
    CHECK(line == "scene,psnr_mu,psnr_l,ssim_mu,ssim_l");
    while (std::getline(is, line)) {
        ++n;
        if (n == 3) CHECK(line.rfind("average,", 0) == 0);
    }
    CHECK(n == 3);
}
