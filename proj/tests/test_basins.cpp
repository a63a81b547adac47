#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include <kantran/basins.hpp>

using namespace kantran;
using Catch::Matchers::WithinAbs;

namespace {

real t_of(const StatePoint& s) { return s.t; }

BasinRaster fake_raster(int w, int h, auto&& label) {
    BasinRaster r;
    r.grid_w = w;
    r.grid_h = h;
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            r.labels.push_back(label(i, j));
            r.averages.push_back(0);
        }
    return r;
}

}  // namespace

TEST_CASE("Kan endomorphism step") {
    const KanEndomorphism e;
    const auto s = e.step({TorusPoint::from_real(0, 0), 0.5L});
    CHECK(s.t == 0.5078125L);
    CHECK(s.base == TorusPoint::from_real(0, 0));
    const auto u = e.step({TorusPoint::from_real(0.4, 0), 0.25L});
    CHECK_THAT(u.base.x1(), WithinAbs(0.2, 1e-15));
    CHECK_THAT(double(u.t), WithinAbs(0.25 + 0.1875 * std::cos(0.8 * std::numbers::pi) / 32, 1e-15));
}

TEST_CASE("birkhoff averages") {
    const KanEndomorphism e;
    const real c = birkhoff_average(e, {TorusPoint::from_real(0.3, 0), 0.4L}, [](const StatePoint&) { return 0.7L; }, 100);
    CHECK_THAT(double(c), WithinAbs(0.7, 1e-17));
    CHECK(birkhoff_average(e, {TorusPoint::from_real(0.3, 0), 0}, t_of, 1000) == 0);
    CHECK(birkhoff_average(e, {TorusPoint::from_real(0.3, 0), 1}, t_of, 1000) == 1);
    CHECK_THROWS_AS(birkhoff_average(e, {}, t_of, 0), Error);

    // regression baseline
    const real b = birkhoff_average(e, {TorusPoint::from_real(0.1, 0), 0.5L}, t_of, 10000);
    CHECK(b >= 0);
    CHECK(b <= 1);
    CHECK_THAT(double(b), WithinAbs(0.78161372166240709, 1e-15));

    // plain loop oracle
    StatePoint s{TorusPoint::from_real(0.1, 0), 0.5L};
    real sum = 0;
    for (int k = 0; k < 10000; ++k) {
        sum += s.t;
        s = {TorusPoint::from_fixed(s.base.raw1() * 3, 0),
             s.t + s.t * (1 - s.t) * std::cos(2 * std::numbers::pi_v<real> * s.base.x1()) / 32};
    }
    CHECK_THAT(double(b), WithinAbs(double(sum / 10000), 1e-12));
}

TEST_CASE("boundary absorption and fiber order") {
    const KanEndomorphism e;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 50; ++i) {
        StatePoint a{TorusPoint::from_real(u(rng), 0), u(rng)}, b = a;
        b.t = std::min<real>(1, a.t + 1e-3L * u(rng) + 1e-12L);
        StatePoint z0{a.base, 0}, z1{a.base, 1};
        for (int k = 0; k < 2000; ++k) {
            a = e.step(a), b = e.step(b), z0 = e.step(z0), z1 = e.step(z1);
            REQUIRE(a.t <= b.t);
        }
        CHECK(z0.t == 0);
        CHECK(z1.t == 1);
    }
}

TEST_CASE("classification") {
    const KanEndomorphism e;
    CHECK(classify_basin(e, {TorusPoint::from_real(0.3, 0), 0}, 100) == BasinLabel::basin0);
    CHECK(classify_basin(e, {TorusPoint::from_real(0.3, 0), 1}, 100) == BasinLabel::basin1);
    CHECK_THROWS_AS(classify_basin(e, {}, 10, Thresholds{0.5L, 0.4L}), Error);
    bool seen0 = false, seen1 = false;
    for (int i = 0; i < 16; ++i) {
        const auto l = classify_basin(e, {TorusPoint::from_real(0.25, 0), 0.1L + 0.8L * i / 15}, 10000);
        seen0 = seen0 || l == BasinLabel::basin0;
        seen1 = seen1 || l == BasinLabel::basin1;
    }
    CHECK(seen0);
    CHECK(seen1);
    CHECK(to_string(BasinLabel::undecided) == "undecided");
}

TEST_CASE("rasters") {
    const KanEndomorphism e;
    const auto zero = basin_raster(e, 16, 16, {SliceKind::fixed_t, 0}, 200);
    CHECK(zero.count(BasinLabel::basin0) == 256);
    CHECK_THROWS_AS(basin_raster(e, 1, 1, {}, 10), Error);

    const auto r = basin_raster(e, 128, 128, {}, 10000, {}, 2);
    CHECK(r.labels.size() == 128u * 128u);
    CHECK(r.fraction(BasinLabel::basin0) >= 0.05);
    CHECK(r.fraction(BasinLabel::basin1) >= 0.05);
    // worker count does not matter
    const auto again = basin_raster(e, 128, 128, {}, 10000, {}, 1);
    CHECK(again.labels == r.labels);
    CHECK(again.averages == r.averages);

    // doubling n: basin0 <-> basin1 flips among cells decided both times
    const auto longer = basin_raster(e, 128, 128, {}, 20000, {}, 2);
    std::size_t both = 0, flips = 0;
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        if (r.labels[i] == BasinLabel::undecided || longer.labels[i] == BasinLabel::undecided) continue;
        ++both;
        flips += r.labels[i] != longer.labels[i];
    }
    CHECK(both > 0);
    CHECK(double(flips) / both <= 0.05);
}

TEST_CASE("start points leave the dyadic grid") {
    // odd low bits put every start on a long orbit of x -> 3x
    for (std::uint64_t c = 0; c < 1000; ++c) {
        CHECK((cell_bits(c, 0) & 1) == 1);
        CHECK(cell_bits(c, 0) < (std::uint64_t{1} << 32));
    }
    CHECK(cell_bits(5, 0) != cell_bits(5, 1));
}

TEST_CASE("intermingling report") {
    const auto all0 = fake_raster(32, 32, [](int, int) { return BasinLabel::basin0; });
    const auto r0 = intermingling_report(all0, 2);
    CHECK(r0.min_fraction == 0);
    CHECK(r0.per_box_fractions.size() == 1u + 4u + 16u);

    const auto checker =
        fake_raster(32, 32, [](int i, int j) { return (i + j) % 2 ? BasinLabel::basin1 : BasinLabel::basin0; });
    const auto rc = intermingling_report(checker, 3);
    CHECK(rc.min_fraction == 0.5);
    for (const auto& b : rc.per_box_fractions) {
        CHECK(b.frac0 == 0.5);
        CHECK(b.frac0 + b.frac1 + b.frac_undecided == 1);
    }

    try {
        intermingling_report(checker, 4);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::depth_too_fine);
    }
    CHECK_THROWS_AS(intermingling_report(checker, 0), Error);
}

TEST_CASE("pgm export") {
    const auto r = fake_raster(3, 2, [](int i, int j) {
        return j == 0 ? BasinLabel::basin0 : (i == 1 ? BasinLabel::undecided : BasinLabel::basin1);
    });
    std::ostringstream os;
    write_pgm(os, r, 42);
    const std::string s = os.str();
    const std::string head = "P5\n# seed 42\n3 2\n255\n";
    REQUIRE(s.size() == head.size() + 6);
    CHECK(s.substr(0, head.size()) == head);
    // top row (j = 1) first
    CHECK(static_cast<unsigned char>(s[head.size()]) == 255);
    CHECK(static_cast<unsigned char>(s[head.size() + 1]) == 128);
    CHECK(static_cast<unsigned char>(s[head.size() + 3]) == 0);
}
