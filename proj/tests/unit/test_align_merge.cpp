#include "sthdr/align.hpp"
#include "sthdr/errors.hpp"
#include "sthdr/merge.hpp"
#include "sthdr_testing/fixtures.hpp"

#include <doctest.h>

using namespace sthdr;
using namespace sthdr::testing;

namespace {

Var weighted(const Var& v, std::uint64_t seed) {
    Rng rng(seed);
    return dot(v, random_tensor(v.shape(), rng));
}

Tensor input_frame(Rng& rng, int h, int w) {
    const Tensor ldr = random_tensor({3, h, w}, rng, 0.05, 0.95);
    Tensor lin = ldr;
    for (Real& v : lin.data()) v = std::pow(v, 2.2);
    return concat_channels({&ldr, &lin});
}

} // namespace

TEST_CASE("SCM keeps resolution and adds the reference feature back") {
    ParamStore store(1);
    const Scm scm(store, "scm", 8);
    Rng rng(2);
    Graph g(store, false);
    const Var f_ref = Var::constant(random_tensor({8, 8, 8}, rng));
    const auto tr = scm.trace(g, Var::constant(input_frame(rng, 8, 8)), Var::constant(input_frame(rng, 8, 8)), f_ref);
    CHECK(tr.fused.shape() == Shape{8, 8, 8});
    CHECK(tr.weights.shape() == Shape{8, 1, 1});
    CHECK(tr.compressed.shape() == Shape{8, 8, 8});
    CHECK(tr.aligned.shape() == Shape{8, 8, 8});
    // aligned - f_ref is an lrelu output: negative entries are slope-scaled.
    const Tensor& a = tr.aligned.value();
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a[i] != f_ref.value()[i];
    CHECK(any_diff);
}

TEST_CASE("align net shares the reference feature and keeps SCMs independent") {
    ParamStore store(3);
    const AlignNet net(store, "align", 8);
    CHECK(store.contains("align.scm1.fuse.weight"));
    CHECK(store.contains("align.scm3.fuse.weight"));
    CHECK(&store.get("align.scm1.fuse.weight") != &store.get("align.scm3.fuse.weight"));
    Rng rng(4);
    Graph g(store, false);
    const Var x2 = Var::constant(input_frame(rng, 8, 8));
    const auto out = net(g, Var::constant(input_frame(rng, 8, 8)), x2, Var::constant(input_frame(rng, 8, 8)));
    CHECK(out.z.shape() == Shape{8, 8, 8});
    CHECK(out.f_ref.value() == net.reference_feature(g, x2).value());
}

TEST_CASE("encoder-decoder needs dimensions divisible by four") {
    ParamStore store(5);
    const EncoderDecoder ed(store, "ed", 8, 2);
    Rng rng(6);
    Graph g(store, false);
    CHECK(ed(g, Var::constant(random_tensor({8, 8, 12}, rng))).shape() == Shape{8, 8, 12});
    CHECK_THROWS_AS(ed(g, Var::constant(random_tensor({8, 6, 8}, rng))), ShapeError);
}

TEST_CASE("merge net declares the cross-scale fusion only when asked") {
    ParamStore a(7), b(7);
    const MergeNet plain(a, "merge", 8, 2, false);
    const MergeNet cross(b, "merge", 8, 2, true);
    CHECK_FALSE(a.contains("merge.cross_fuse.weight"));
    CHECK(b.contains("merge.cross_fuse.weight"));
    CHECK(b.count() == a.count() + 16 * 8 + 8);
}

TEST_CASE("merge net predictions lie in [0,1] and stage 2 depends on SAM features") {
    ParamStore store(8);
    const MergeNet net(store, "merge", 8, 2, true);
    Rng rng(9);
    Graph g(store, false);
    const Var z = Var::constant(random_tensor({8, 8, 8}, rng));
    const Var ref = Var::constant(random_tensor({3, 8, 8}, rng, 0, 1));
    const Var cross = Var::constant(random_tensor({8, 8, 8}, rng));
    const auto out = net.forward(g, z, ref, cross, false);
    for (const Var* p : {&out.pred_stage1, &out.pred_stage2})
        for (Real v : p->value().data()) CHECK((v >= 0 && v <= 1));
    const auto probe = net.forward(g, z, ref, cross, true);
    CHECK(max_abs_diff(out.pred_stage2.value(), probe.pred_stage2.value()) > 0);
    CHECK(out.pred_stage1.value() == probe.pred_stage1.value());
}

TEST_CASE("SCM and merge net gradients agree with central differences") {
    Rng rng(10);
    GradCheckOptions opt;
    opt.samples_per_tensor = 4;
    SUBCASE("scm") {
        ParamStore store(11);
        const Scm scm(store, "scm", 8);
        offsets_off_grid(store, "scm", 12);
        std::vector<Tensor> in{input_frame(rng, 6, 6), input_frame(rng, 6, 6), random_tensor({8, 6, 6}, rng)};
        const auto r = grad_check(store, in, [&](Graph& g, const std::vector<Var>& v) {
            return weighted(scm(g, v[0], v[1], v[2]), 1);
        }, opt);
        CHECK_MESSAGE(r.max_rel < 1e-3, r.worst);
        CHECK(r.unresolved == 0);
        MESSAGE(r.checked << " coordinates checked, " << r.shrunk << " at a reduced step");
    }
    SUBCASE("merge net") {
        ParamStore store(13);
        const MergeNet net(store, "merge", 8, 2, true);
        std::vector<Tensor> in{random_tensor({8, 8, 8}, rng), random_tensor({3, 8, 8}, rng, 0.3, 0.6),
                               random_tensor({8, 8, 8}, rng)};
        const auto r = grad_check(store, in, [&](Graph& g, const std::vector<Var>& v) {
            const auto o = net(g, v[0], v[1], v[2]);
            return add(weighted(o.pred_stage2, 2), weighted(o.pred_stage1, 3));
        }, opt);
        CHECK_MESSAGE(r.max_rel < 1e-3, r.worst);
        CHECK(r.unresolved == 0);
        MESSAGE(r.checked << " coordinates checked, " << r.shrunk << " at a reduced step");
    }
}
