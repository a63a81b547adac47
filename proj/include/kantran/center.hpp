#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "core.hpp"
#include "fiber.hpp"
#include "number_theory.hpp"

namespace kantran {

struct IntervalPair {
    Interval I;
    Interval J;

    static IntervalPair make(real a, real b, real c, real d) {
        require(0 <= a && a < b && b <= 1, "I must satisfy 0 <= a < b <= 1");
        require(0 <= c && c < d && d <= 1, "J must satisfy 0 <= c < d <= 1");
        return {{a, b}, {c, d}};
    }
};

// increasing diffeomorphism of [0, 1] with an inverse
template <class H>
concept IntervalDiffeo = requires(const H& h, real t) {
    { h(t) } -> std::convertible_to<real>;
    { h.inverse(t) } -> std::convertible_to<real>;
};

struct IdentityDiffeo {
    real operator()(real t) const { return t; }
    real inverse(real t) const { return t; }
};

template <IntervalDiffeo H>
real slope_at_zero(const H& h) {
    if constexpr (requires { h.slope_at_zero(); }) return h.slope_at_zero();
    else {
        const real tau = 1e-40L;
        return h(tau) / tau;
    }
}

struct OrbitSample {
    std::vector<real> points;
    real largest_gap = 0;
};

// points f^-k h^-1 g^l (x), 1 <= k <= K, 1 <= l <= L, clipped to [0, 1]
template <C2Map F, C2Map G, IntervalDiffeo H>
OrbitSample dense_orbit_sample(const F& f, const G& g, const H& h, real x, int K, int L, unsigned workers = 1) {
    require(K >= 1 && L >= 1, "K and L must be positive");
    require(x > 0 && x < 1, "x must lie in (0, 1)");
    OrbitSample out;
    out.points.resize(static_cast<std::size_t>(K) * L);
    std::vector<real> gl(L);
    real y = x;
    for (int l = 0; l < L; ++l) gl[l] = y = g.value(y);
    parallel_for(static_cast<std::size_t>(L), workers, [&](std::size_t l) {
        real z = h.inverse(gl[l]);
        for (int k = 0; k < K; ++k) {
            z = inverse_value(f, z);
            out.points[l * K + k] = std::clamp<real>(z, 0, 1);
        }
    });
    std::vector<real> sorted = out.points;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 1; i < sorted.size(); ++i)
        out.largest_gap = std::max(out.largest_gap, sorted[i] - sorted[i - 1]);
    return out;
}

// Iterates of one point, advanced incrementally for nondecreasing requests.
template <C2Map M>
class OrbitCursor {
public:
    OrbitCursor(const M& m, real start) : m_(&m), start_(start), value_(start) {}
    real at(std::int64_t n) {
        if (n < index_) {
            index_ = 0;
            value_ = start_;
        }
        for (; index_ < n; ++index_) value_ = m_->value(value_);
        return value_;
    }

private:
    const M* m_;
    real start_;
    real value_;
    std::int64_t index_ = 0;
};

struct OverlapReport {
    std::int64_t k = 0, l = 0;
    real overlap_f_side = 0;
    real fund_f = 0;
    real ratio_f = 0;
    real overlap_g_side = 0;
    real fund_g = 0;
    real ratio_g = 0;
};

template <C2Map F, C2Map G, IntervalDiffeo H>
OverlapReport overlap_ratio(const F& f, const G& g, const H& h, const IntervalPair& pair, std::int64_t k,
                            std::int64_t l) {
    require(k >= 1 && l >= 1, "k and l must be positive");
    OverlapReport r{k, l};
    const real fa = iterate(f, pair.I.lo, k), fb = iterate(f, pair.I.hi, k);
    const real gc = iterate(g, pair.J.lo, l), gd = iterate(g, pair.J.hi, l);
    const Interval fk{fa, fb}, gl{gc, gd};
    r.overlap_f_side = intersect(fk, {h.inverse(gc), h.inverse(gd)}).length();
    r.fund_f = fb - f.value(fb);
    r.ratio_f = r.fund_f > 0 ? r.overlap_f_side / r.fund_f : 0;
    r.overlap_g_side = intersect({h(fa), h(fb)}, gl).length();
    r.fund_g = gd - g.value(gd);
    r.ratio_g = r.fund_g > 0 ? r.overlap_g_side / r.fund_g : 0;
    return r;
}

struct PairSearch {
    std::int64_t k_min = 1;
    std::int64_t k_max = 100000;
    bool improving = true;
    real safety = 1;
    // records at least halve the residual, so k_n / l_n settles within a few pairs
    real record_factor = 2;
    SternbergOptions chart{};
};

// Linearised target for the pair search, built from the middle thirds I0, J0:
// eta = theta * mid(h1(I0)) / h2(mid J0), eps = theta * |h1(I0)| / 4.
struct PairTarget {
    real alpha = 0, beta = 0;
    real theta = 1;
    real eta = 1;
    real epsilon = 0;
    real epsilon_log = 0;  // tolerance on the log residual that keeps eta* x within eps
    real x_tilde = 0;
    Interval I0, J0;
    Interval h1_I0;
};

inline Interval middle_third(Interval v) {
    const real w = v.length() / 3;
    return {v.lo + w, v.hi - w};
}

template <C2Map F, C2Map G, IntervalDiffeo H>
PairTarget middle_third_target(const F& f, const G& g, const H& h, const IntervalPair& pair,
                               const SternbergOptions& chart = {}) {
    const auto h1 = sternberg_linearize(f, chart);
    const auto h2 = sternberg_linearize(g, chart);
    PairTarget t;
    t.alpha = h1.alpha();
    t.beta = h2.alpha();
    t.theta = slope_at_zero(h);
    t.I0 = middle_third(pair.I);
    t.J0 = middle_third(pair.J);
    t.h1_I0 = {h1(t.I0.lo), h1(t.I0.hi)};
    t.x_tilde = h2(t.J0.mid());
    t.eta = t.theta * t.h1_I0.mid() / t.x_tilde;
    t.epsilon = t.theta * t.h1_I0.length() / 4;
    t.epsilon_log = std::log1p(t.epsilon / (t.eta * t.x_tilde));
    return t;
}

// h(f^k(I)) and g^l(J) overlap with positive length
template <C2Map F, C2Map G, IntervalDiffeo H>
bool verify_pair(const F& f, const G& g, const H& h, const IntervalPair& pair, std::int64_t k, std::int64_t l) {
    const real fa = iterate(f, pair.I.lo, k), fb = iterate(f, pair.I.hi, k);
    const real gc = iterate(g, pair.J.lo, l), gd = iterate(g, pair.J.hi, l);
    return intersect({h(fa), h(fb)}, {gc, gd}).length() > 0;
}

template <C2Map F, C2Map G, IntervalDiffeo H>
std::vector<DiophantinePair> intersection_pairs(const F& f, const G& g, const H& h, const IntervalPair& pair,
                                                std::size_t count, const PairSearch& opt = {}) {
    require(count >= 1, "count must be positive");
    const PairTarget target = middle_third_target(f, g, h, pair, opt.chart);
    std::vector<DiophantinePair> out;
    OrbitCursor<F> fa(f, pair.I.lo), fb(f, pair.I.hi);
    OrbitCursor<G> gc(g, pair.J.lo), gd(g, pair.J.hi);
    DiophantineOptions dopt{opt.k_min, opt.k_max, opt.improving, opt.safety, opt.record_factor};
    scan_diophantine(target.alpha, target.beta, target.eta, target.epsilon_log, dopt, [&](const DiophantinePair& c) {
        const Interval image{h(fa.at(c.k)), h(fb.at(c.k))};
        const Interval gl{gc.at(c.l), gd.at(c.l)};
        if (intersect(image, gl).length() > 0) out.push_back(c);
        return out.size() < count;
    });
    if (out.size() < count)
        fail(ErrorCode::exhausted_candidates, "only " + std::to_string(out.size()) + " of " + std::to_string(count) +
                                                   " pairs verified for k <= " + std::to_string(opt.k_max));
    return out;
}

}  // namespace kantran
