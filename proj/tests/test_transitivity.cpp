#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <kantran/transitivity.hpp>

using namespace kantran;
using Catch::Matchers::WithinAbs;

namespace {

const KanSystem& kan() {
    static const KanSystem s = kan_diffeo_system();
    return s;
}

ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::invalid_argument;
}

// forward iteration of a state by plain steps
StatePoint run(const KanSystem& s, StatePoint z, std::int64_t m) {
    for (std::int64_t i = 0; i < m; ++i) z = s.step(z, 1);
    return z;
}

void check_slab(const KanSystem& s, const Box& box, const SlabResult& r, int dir) {
    const auto& A = s.base();
    const TorusPoint pole = dir > 0 ? s.p() : s.q();
    const Leaf leaf = dir > 0 ? Leaf::stable : Leaf::unstable;
    CHECK(box.contains_base(A, r.preimage));
    CHECK(torus_distance(A.apply(r.preimage, dir * r.steps), r.anchor) < 1e-12);
    const auto off = A.leaf_offset(pole, r.anchor, leaf);
    REQUIRE(off);
    CHECK_THAT(*off, WithinAbs(r.sigma, 1e-9));
    CHECK(std::abs(r.sigma) < 0.25);
    CHECK(std::abs(r.sigma) < r.smallness);
    // the carried interval sits inside the fiber image of the box over the anchor
    StatePoint lo{r.preimage, box.t.lo}, hi{r.preimage, box.t.hi};
    for (int i = 0; i < r.steps; ++i) lo = s.step(lo, dir), hi = s.step(hi, dir);
    CHECK(lo.t < r.center.lo);
    CHECK(r.center.hi < hi.t);
    CHECK(r.delta > 0);
}

}  // namespace

TEST_CASE("box invariants") {
    CHECK_THROWS_AS(Box::make(0.1, 0.1, 0, 0.1, 0.2, 0.3), Error);
    CHECK_THROWS_AS(Box::make(0.1, 0.1, 0.1, 0.1, 0.3, 0.3), Error);
    CHECK_THROWS_AS(Box::make(0.1, 0.1, 0.1, 0.1, 0.3, 1.2), Error);
    const auto& A = kan().base();
    const Box b = Box::make(0.95, 0.02, 0.1, 0.1, 0.2, 0.3);
    CHECK(b.contains(A, {b.center, 0.25L}));
    CHECK_FALSE(b.contains(A, {b.center, 0.35L}));
    // wraps around the torus
    CHECK(b.contains_base(A, b.center.offset(0.049 * A.dir_u())));
    CHECK_FALSE(b.contains_base(A, b.center.offset(0.051 * A.dir_u())));
    CHECK_THAT(b.distance(A, {b.center, 0.4L}), WithinAbs(0.1, 1e-15));

    std::mt19937_64 g(1);
    const Box r = random_box(g, 0.1, 0.1);
    CHECK(r.t.lo >= 0.05L);
    CHECK(r.t.hi <= 0.95L);
}

TEST_CASE("slabs") {
    const auto& s = kan();
    SECTION("U near (0.3, 0.7)") {
        const Box U = Box::make(0.3, 0.7, 0.1, 0.1, 0.3, 0.4);
        const auto r = reach_stable_slab(s, U);
        CHECK(r.steps >= 1);
        CHECK(r.steps < 20);
        check_slab(s, U, r, 1);
        const auto v = reach_unstable_slab(s, U);
        check_slab(s, U, v, -1);
    }
    SECTION("box already holding the pole") {
        const Box U = Box::make(0.5, 0.0, 0.1, 0.1, 0.3, 0.4);
        const auto r = reach_stable_slab(s, U);
        check_slab(s, U, r, 1);
        if (r.steps > 0) {
            // at k = 0 the pole itself is a crossing, so only smallness or the disk can delay
            CHECK(r.anchor != U.center);
        }
    }
    SECTION("budget") {
        SlabOptions opt;
        opt.max_steps = 0;
        opt.local_radius = 1e-6;
        CHECK(code_of([&] { reach_stable_slab(s, Box::make(0.3, 0.7, 0.1, 0.1, 0.3, 0.4), opt); }) ==
              ErrorCode::budget_exceeded);
    }
}

TEST_CASE("certificate for a fixed pair of boxes") {
    const auto& s = kan();
    const Box U = Box::make(0.3, 0.6, 0.1, 0.1, 0.3, 0.4);
    const Box V = Box::make(0.7, 0.2, 0.1, 0.1, 0.6, 0.7);
    const auto c = build_certificate(s, U, V);
    CHECK(c.m == c.k0s + c.kn + c.ln + c.l0u);
    CHECK(c.image_residual == 0);
    CHECK(U.contains(s.base(), c.witness));
    CHECK(V.contains(s.base(), run(s, c.witness, c.m)));
    CHECK(verify_certificate(s, c) == 0);
    CHECK(c.system == "kan-diffeo");

    // stage consistency: the pair meets on the stage intervals through H
    const CenterHolonomy H(s, c.stage.legs);
    const auto cm = center_maps(s);
    CHECK(verify_pair(cm.f, cm.g, H, c.stage.center_pair, c.kn, c.ln));
    check_slab(s, U, c.stage.stable, 1);
    check_slab(s, V, c.stage.unstable, -1);

    // diagnostics
    const auto& d = c.diagnostics;
    REQUIRE(d.dominance_n);
    CHECK(*d.dominance_n <= c.pair_index);
    CHECK(d.D1 >= 2 * d.R1);
    CHECK(d.D2 >= 2 * d.R2);
    CHECK(d.rho_used > 0);
    CHECK(d.Q_est >= 0);
    CHECK_THAT(d.lambda, WithinAbs(0.25878, 1e-5));
    CHECK_THAT(d.gamma, WithinAbs(31.0 / 32, 1e-15));
    const auto [r1, r2] = diagnostic_decay(s, c.stage);
    const double bound = d.lambda / d.gamma * 1.1;
    CHECK(r1 <= bound);
    CHECK(r2 <= bound);
    CHECK_THAT(double(r1), WithinAbs(d.lambda / d.gamma, 1e-9));

    // oracle: a direct search never needs more iterates
    const auto ds = direct_search(s, U, V, c.m);
    REQUIRE(ds);
    CHECK(ds->m <= c.m);
    CHECK(U.contains(s.base(), ds->witness));
    CHECK(V.contains(s.base(), run(s, ds->witness, ds->m)));
    // and no smaller m exists in the same sample set
    if (ds->m > 1) CHECK_FALSE(direct_search(s, U, V, ds->m - 1));
}

TEST_CASE("certificate with U = V") {
    const auto& s = kan();
    const Box U = Box::make(0.62, 0.41, 0.1, 0.1, 0.4, 0.6);
    const auto c = build_certificate(s, U, U);
    CHECK(c.m >= 1);
    CHECK(c.image_residual == 0);
    const auto ds = direct_search(s, U, U, c.m);
    REQUIRE(ds);
    CHECK(ds->m <= c.m);
}

TEST_CASE("direct search edge cases") {
    const auto& s = kan();
    const auto& A = s.base();
    const Box U = Box::make(0.3, 0.6, 0.02, 0.02, 0.4, 0.5);
    CHECK_FALSE(direct_search(s, U, U, 0));
    // V contains F(U): stable side shrinks, unstable side grows by 3.73, t moves by < 1/128
    const TorusPoint c = A.apply(U.center);
    const Box V = Box::make(c.x1(), c.x2(), 0.1, 0.1, 0.3, 0.6);
    const auto ds = direct_search(s, U, V, 10);
    REQUIRE(ds);
    CHECK(ds->m == 1);
}

TEST_CASE("dependent multipliers are refused") {
    // phi_p'(0) = 2/3 and phi_q'(0) = 3/2
    const auto s = KanSystem::build({{{3, 1}, {2, 1}}}, trig_logistic_family({1.0 / 12, 5.0 / 12, 0, 0, 0}),
                                    TorusPoint::from_real(0.5, 0), TorusPoint::from_real(0, 0));
    REQUIRE(s.valid());
    const Box U = Box::make(0.3, 0.6, 0.1, 0.1, 0.3, 0.4);
    CHECK(code_of([&] { build_certificate(s, U, U); }) == ErrorCode::independence_unknown);
    CertificateParams prm;
    prm.assume_independent = true;
    // exact rational multipliers are checked even when independence is asserted
    CHECK(code_of([&] { build_certificate(s, U, U, prm); }) == ErrorCode::independence_unknown);
}

TEST_CASE("invalid systems are refused") {
    const auto s = KanSystem::build({{{3, 1}, {2, 1}}}, trig_logistic_family({0, 0, 0, 0, 0}),
                                    TorusPoint::from_real(0.5, 0), TorusPoint::from_real(0, 0));
    const Box U = Box::make(0.3, 0.6, 0.1, 0.1, 0.3, 0.4);
    CHECK(code_of([&] { build_certificate(s, U, U); }) == ErrorCode::invalid_argument);
}

TEST_CASE("diagnostics without dominance and with exact holonomy") {
    const auto& s = kan();
    const Box U = Box::make(0.3, 0.6, 0.1, 0.1, 0.3, 0.4);
    const Box V = Box::make(0.7, 0.2, 0.1, 0.1, 0.6, 0.7);
    CertificateParams prm;
    prm.min_pair_k = 1;
    auto st = build_stage(s, U, V, prm);
    REQUIRE(st.pairs.size() >= 2);

    // an anchor far from the pole keeps R above D for the small first pairs
    auto far = st;
    far.stable.sigma = 1e6;
    const auto d = distortion_diagnostics(s, far, 1);
    CHECK_FALSE(d.dominance_n);
    CHECK(d.R1 > d.D1 / 2);

    // x-independent fibers: the boundary displacement vanishes, so R = 0
    const auto flat = KanSystem::build({{{3, 1}, {2, 1}}}, trig_logistic_family({0.02, 0, 0, 0, 0}),
                                       TorusPoint::from_real(0.5, 0), TorusPoint::from_real(0, 0));
    auto exact = st;
    exact.Q = std::max(detail::boundary_displacement(flat, {st.stable.anchor, Leaf::stable, -st.stable.sigma}, 0.5L, {}),
                       detail::boundary_displacement(flat, {st.unstable.anchor, Leaf::unstable, -st.unstable.sigma},
                                                     0.5L, {}));
    CHECK(exact.Q == 0);
    const auto e = distortion_diagnostics(s, exact, 1);
    CHECK(e.R1 == 0);
    CHECK(e.R2 == 0);
    REQUIRE(e.dominance_n);
    CHECK(*e.dominance_n == 1);
}

TEST_CASE("witness sampling is nested") {
    const auto& A = kan().base();
    const Box U = Box::make(0.3, 0.6, 0.1, 0.1, 0.3, 0.4);
    CHECK(subdivision_sample(A, U, 1) == TorusPoint::from_real(U.center.x1(), U.center.x2()));
    for (std::uint64_t i = 1; i < 64; ++i) CHECK(U.contains_base(A, subdivision_sample(A, U, i)));
    WitnessOptions w;
    w.max_depth = 5;
    CHECK(sample_budget(w) == 32);
}
