#include "sthdr/errors.hpp"
#include "sthdr/nn_blocks.hpp"
#include "sthdr_testing/fixtures.hpp"
#include "sthdr_testing/oracles.hpp"

#include <doctest.h>

using namespace sthdr;
using namespace sthdr::testing;

namespace {

Var weighted(const Var& v, std::uint64_t seed) {
    Rng rng(seed);
    return dot(v, random_tensor(v.shape(), rng));
}

} // namespace

TEST_CASE("conv2d layer registers weight and bias") {
    ParamStore store(1);
    const Conv2d conv(store, "c", {4, 6, 3});
    CHECK(store.get("c.weight").shape() == Shape{6, 4, 3, 3});
    CHECK(store.get("c.bias").shape() == Shape{6});
    CHECK_THROWS_AS(Conv2d(store, "d", {4, 6, 5}), ConfigError);
}

TEST_CASE("zero-initialized deformable branch samples the regular grid at half strength") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        ParamStore store(static_cast<std::uint64_t>(trial));
        const int cin = 1 + static_cast<int>(rng.below(4)), cout = 1 + static_cast<int>(rng.below(4));
        const DeformConv dc(store, "dc", cin, cout);
        const Tensor x = random_tensor({cin, 8, 8}, rng);
        Graph g(store, false);
        const auto tr = dc.trace(g, Var::constant(x));
        for (Real v : tr.offsets.value().data()) CHECK(v == 0);
        for (Real v : tr.modulation.value().data()) CHECK(v == 0.5);
        Tensor expect = reference_conv2d(x, store.get("dc.weight"), nullptr, 1, 1);
        const Tensor& b = store.get("dc.bias");
        for (int o = 0; o < cout; ++o)
            for (std::size_t i = 0; i < expect.plane(); ++i) {
                Real& e = expect[o * expect.plane() + i];
                e = 0.5 * e + b[o];
            }
        CHECK(max_abs_diff(tr.output.value(), expect) < 1e-12);
    }
}

TEST_CASE("global context block produces a normalized attention map and gates in (0,1)") {
    ParamStore store(3);
    const GcBlock gcb(store, "gc", 8);
    CHECK(gcb.bottleneck() == 4);
    CHECK(GcBlock(store, "wide", 64).bottleneck() == 16);
    Rng rng(4);
    Graph g(store, false);
    const auto tr = gcb.trace(g, Var::constant(random_tensor({8, 6, 7}, rng)));
    Real s = 0;
    for (Real v : tr.attention.value().data()) s += v;
    CHECK(s == doctest::Approx(1).epsilon(1e-12));
    CHECK(tr.weights.shape() == Shape{8, 1, 1});
    for (Real v : tr.weights.value().data()) CHECK((v > 0 && v < 1));
    CHECK(GcBlock(store, "gc2", 2).bottleneck() == 2);
}

TEST_CASE("HIN block keeps resolution and rejects odd widths") {
    ParamStore store(5);
    const HinBlock hin(store, "hin", 4, 6);
    Rng rng(6);
    Graph g(store, false);
    CHECK(hin(g, Var::constant(random_tensor({4, 5, 5}, rng))).shape() == Shape{6, 5, 5});
    CHECK_THROWS_AS(HinBlock(store, "odd", 4, 5), ShapeError);
}

TEST_CASE("SAM clamps its prediction and re-weights features") {
    ParamStore store(7);
    const Sam sam(store, "sam", 4);
    Rng rng(8);
    Graph g(store, false);
    const Var f = Var::constant(random_tensor({4, 6, 6}, rng, -3, 3));
    const auto out = sam(g, f, Var::constant(random_tensor({3, 6, 6}, rng, 0, 1)));
    for (Real v : out.pred.value().data()) CHECK((v >= 0 && v <= 1));
    for (std::size_t i = 0; i < f.value().size(); ++i)
        CHECK(out.features.value()[i] == doctest::Approx(f.value()[i] * (1 + out.mask.value()[i])));
}

TEST_CASE("bilinear resample halves and doubles") {
    Rng rng(9);
    const Tensor x = random_tensor({2, 8, 6}, rng);
    CHECK(bilinear_resample(x, Resample::Half).shape() == Shape{2, 4, 3});
    CHECK(bilinear_resample(x, Resample::Double).shape() == Shape{2, 16, 12});
    CHECK(max_abs_diff(bilinear_resample(x, Resample::Half), reference_resize(x, 4, 3)) < 1e-12);
    CHECK_THROWS_AS(bilinear_resample(random_tensor({1, 5, 4}, rng), Resample::Half), ShapeError);
}

TEST_CASE("block gradients agree with central differences") {
    Rng rng(10);
    GradCheckOptions opt;
    opt.samples_per_tensor = 8;
    SUBCASE("gc block") {
        ParamStore store(11);
        const GcBlock gcb(store, "gc", 8);
        std::vector<Tensor> in{random_tensor({8, 5, 5}, rng)};
        const auto r = grad_check(store, in, [&](Graph& g, const std::vector<Var>& v) { return weighted(gcb(g, v[0]), 1); }, opt);
        CHECK_MESSAGE(r.max_rel < 1e-3, r.worst);
        CHECK(r.unresolved == 0);
        MESSAGE(r.checked << " coordinates checked, " << r.shrunk << " at a reduced step");
    }
    SUBCASE("hin block") {
        ParamStore store(12);
        const HinBlock hin(store, "hin", 4, 6);
        std::vector<Tensor> in{random_tensor({4, 5, 5}, rng)};
        const auto r = grad_check(store, in, [&](Graph& g, const std::vector<Var>& v) { return weighted(hin(g, v[0]), 2); }, opt);
        CHECK_MESSAGE(r.max_rel < 1e-3, r.worst);
        CHECK(r.unresolved == 0);
        MESSAGE(r.checked << " coordinates checked, " << r.shrunk << " at a reduced step");
    }
    SUBCASE("sam") {
        ParamStore store(13);
        const Sam sam(store, "sam", 4);
        std::vector<Tensor> in{random_tensor({4, 5, 5}, rng), random_tensor({3, 5, 5}, rng, 0.2, 0.6)};
        const auto r = grad_check(store, in, [&](Graph& g, const std::vector<Var>& v) {
            const auto o = sam(g, v[0], v[1]);
            return add(weighted(o.features, 3), weighted(o.pred, 4));
        }, opt);
        CHECK_MESSAGE(r.max_rel < 1e-3, r.worst);
        CHECK(r.unresolved == 0);
        MESSAGE(r.checked << " coordinates checked, " << r.shrunk << " at a reduced step");
    }
    SUBCASE("deformable conv with active offsets") {
        ParamStore store(14);
        const DeformConv dc(store, "dc", 3, 2);
        offsets_off_grid(store, "dc", 15);
        std::vector<Tensor> in{random_tensor({3, 6, 6}, rng)};
        const auto r = grad_check(store, in, [&](Graph& g, const std::vector<Var>& v) { return weighted(dc(g, v[0]), 5); }, opt);
        CHECK_MESSAGE(r.max_rel < 1e-3, r.worst);
        CHECK(r.unresolved == 0);
        MESSAGE(r.checked << " coordinates checked, " << r.shrunk << " at a reduced step");
    }
}
