#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "center.hpp"
#include "core.hpp"
#include "fiber.hpp"
#include "number_theory.hpp"
#include "skew_product.hpp"
#include "torus.hpp"

namespace kantran {

// Base rectangle in (stable, unstable) leaf coordinates around a center, times a
// center interval.
struct Box {
    TorusPoint center;
    double side_s = 0;
    double side_u = 0;
    Interval t;

    static Box make(double x1, double x2, double side_s, double side_u, double t_lo, double t_hi) {
        require(side_s > 0 && side_u > 0, "box sides must be positive");
        require(side_s < 0.5 && side_u < 0.5, "box sides must stay below 1/2");
        require(0 <= t_lo && t_lo < t_hi && t_hi <= 1, "box needs 0 <= t_lo < t_hi <= 1");
        return {TorusPoint::from_real(x1, x2), side_s, side_u, {t_lo, t_hi}};
    }

    // leaf-coordinate excess outside the base rectangle, minimised over translates
    Vec2 base_excess(const ToralAutomorphism& A, const TorusPoint& x) const {
        const Vec2 d = lifted_difference(center, x);
        Vec2 best{1e300, 1e300};
        for (int n1 = -1; n1 <= 1; ++n1)
            for (int n2 = -1; n2 <= 1; ++n2) {
                const Vec2 su = A.leaf_coordinates(d + Vec2{double(n1), double(n2)});
                const Vec2 e{std::max(0.0, std::abs(su.x) - side_s / 2), std::max(0.0, std::abs(su.y) - side_u / 2)};
                if (e.norm() < best.norm()) best = e;
            }
        return best;
    }
    bool contains_base(const ToralAutomorphism& A, const TorusPoint& x) const {
        const Vec2 e = base_excess(A, x);
        return e.x == 0 && e.y == 0;
    }
    bool contains(const ToralAutomorphism& A, const StatePoint& z) const {
        return t.contains(z.t) && contains_base(A, z.base);
    }
    double distance(const ToralAutomorphism& A, const StatePoint& z) const {
        const Vec2 e = base_excess(A, z.base);
        const double et = static_cast<double>(std::max<real>({0, t.lo - z.t, z.t - t.hi}));
        return std::sqrt(e.x * e.x + e.y * e.y + et * et);
    }
};

// Uniform double from the top 53 bits; the same on every standard library.
inline double unit_draw(std::mt19937_64& g) { return std::ldexp(static_cast<double>(g() >> 11), -53); }

// Box with uniformly drawn center and t_lo in [0.05, 0.95 - t_width].
inline Box random_box(std::mt19937_64& g, double side, double t_width) {
    const double x1 = unit_draw(g), x2 = unit_draw(g);
    const double t_lo = 0.05 + unit_draw(g) * (0.9 - t_width);
    return Box::make(x1, x2, side, side, t_lo, t_lo + t_width);
}

struct RectCrossing {
    double sigma = 0;   // leaf parameter on the pole's leaf
    double a = 0;       // stable coordinate inside the rectangle, relative to its center
    double b = 0;       // unstable coordinate
};

// Crossing of {pole + sigma dir(leaf) : |sigma| <= radius} with the image rectangle
// {c + a ds + b du : |a| <= ha, |b| <= hb}, choosing the smallest |sigma|.
inline std::optional<RectCrossing> rectangle_crossing(const ToralAutomorphism& A, const TorusPoint& pole, Leaf leaf,
                                                      double radius, const TorusPoint& c, double ha, double hb) {
    const Vec2 w0 = lifted_difference(pole, c);
    const Vec2 e1 = A.leaf_coordinates({1, 0}), e2 = A.leaf_coordinates({0, 1});
    const bool stable = leaf == Leaf::stable;
    // along = coordinate on the pole leaf, across = the other one
    auto pick = [&](Vec2 v, bool along) { return (stable == along) ? v.x : v.y; };
    const double h_along = stable ? ha : hb, h_across = stable ? hb : ha;
    const double R = radius + ha + hb + 1;
    std::optional<RectCrossing> best;
    const auto n1_lo = static_cast<long long>(std::floor(-w0.x - R)), n1_hi = static_cast<long long>(std::ceil(-w0.x + R));
    for (long long n1 = n1_lo; n1 <= n1_hi; ++n1) {
        const double x = w0.x + double(n1);
        double lo = -w0.y - R, hi = -w0.y + R;
        // |across| <= h_across and |along| <= radius + h_along cut n2 to an interval
        for (int which = 0; which < 2; ++which) {
            const bool along = which == 0;
            const double k1 = pick(e1, along), k2 = pick(e2, along);
            const double bound = along ? radius + h_along : h_across;
            if (k2 == 0) continue;
            double l = (-bound - k1 * x) / k2 - w0.y, h = (bound - k1 * x) / k2 - w0.y;
            if (l > h) std::swap(l, h);
            lo = std::max(lo, l);
            hi = std::min(hi, h);
        }
        for (long long n2 = static_cast<long long>(std::ceil(lo)); n2 <= static_cast<long long>(std::floor(hi)); ++n2) {
            const Vec2 su = A.leaf_coordinates({x, w0.y + double(n2)});
            const double along = stable ? su.x : su.y, across = stable ? su.y : su.x;
            if (std::abs(across) > h_across) continue;
            // pole + sigma d = c + (rect offset) + n: the rectangle coordinate on the pole
            // leaf absorbs as much of `along` as it can
            const double shift = std::clamp(-along, -h_along, h_along);
            const double sigma = along + shift;
            if (std::abs(sigma) > radius) continue;
            if (best && !(std::abs(sigma) < std::abs(best->sigma))) continue;
            RectCrossing rc;
            rc.sigma = sigma;
            // w = c - pole + n = sigma d_leaf - (rect offset)
            if (stable) {
                rc.a = sigma - along;
                rc.b = -across;
            } else {
                rc.a = -across;
                rc.b = sigma - along;
            }
            best = rc;
        }
    }
    return best;
}

struct SlabOptions {
    double local_radius = 0.25;
    int max_steps = 64;
    double shrink = 0.1;  // fraction cut from each side of the fiber interval
    int delta_halvings = 24;
    HolonomyOptions holonomy{};
};

// Outcome of Step 1 for one side: after `steps` iterates (forward for U, backward for
// V) the image of the box crosses the local leaf of the pole at `anchor`, and carries
// the center interval `center` there; `at_pole` is its holonomy image over the pole.
struct SlabResult {
    int steps = 0;
    TorusPoint anchor;
    TorusPoint preimage;   // point of the box whose orbit lands on the anchor
    double sigma = 0;      // signed leaf coordinate of the anchor seen from the pole
    Interval center;
    Interval at_pole;
    double smallness = 0;  // d_c(b, phi_p(b)) or d_c(d, phi_q^-1(d))
    double delta = 0;      // radius of the cu (or cs) disk kept inside the image
};

namespace detail {

inline Interval fiber_image(const KanSystem& sys, TorusPoint x, Interval t, int steps, int direction) {
    const FiberFamily& F = sys.fiber();
    const ToralAutomorphism& A = sys.base();
    for (int i = 0; i < steps; ++i) {
        if (direction > 0) {
            t = {F.value(x, t.lo), F.value(x, t.hi)};
            x = A.apply(x);
        } else {
            x = A.apply_inverse(x);
            t = {F.inverse_at(x, t.lo), F.inverse_at(x, t.hi)};
        }
    }
    return t;
}

inline SlabResult reach_slab(const KanSystem& sys, const Box& box, int direction, const SlabOptions& opt) {
    sys.require_valid(direction > 0 ? "reach_stable_slab" : "reach_unstable_slab");
    const ToralAutomorphism& A = sys.base();
    const FiberFamily& F = sys.fiber();
    const bool fwd = direction > 0;
    const Leaf leaf = fwd ? Leaf::stable : Leaf::unstable;   // leaf through the pole
    const Leaf cross = fwd ? Leaf::unstable : Leaf::stable;  // expanding direction of the image
    const TorusPoint pole = fwd ? sys.p() : sys.q();
    const double ls = A.eigenvalue_s(), lu = A.eigenvalue_u();
    for (int k = 0; k <= opt.max_steps; ++k) {
        const double ps = std::pow(ls, fwd ? k : -k), pu = std::pow(lu, fwd ? k : -k);
        const TorusPoint c = A.apply(box.center, fwd ? k : -k);
        const double ha = box.side_s / 2 * std::abs(ps), hb = box.side_u / 2 * std::abs(pu);
        const auto rc = rectangle_crossing(A, pole, leaf, opt.local_radius, c, ha, hb);
        if (!rc) continue;
        SlabResult r;
        r.steps = k;
        r.sigma = rc->sigma;
        r.preimage = box.center.offset((rc->a / ps) * A.dir_s() + (rc->b / pu) * A.dir_u());
        r.anchor = A.apply(r.preimage, fwd ? k : -k);
        const Interval img = fiber_image(sys, r.preimage, box.t, k, direction);
        const real cut = img.length() * static_cast<real>(opt.shrink);
        r.center = {img.lo + cut, img.hi - cut};
        const HolonomyLeg to_pole{r.anchor, leaf, -r.sigma};
        const CenterHolonomy H(sys, {to_pole}, opt.holonomy);
        r.at_pole = {H(r.center.lo), H(r.center.hi)};
        const real e = r.at_pole.hi;
        const real image = fwd ? F.value(pole, e) : F.inverse_at(pole, e);
        r.smallness = static_cast<double>(e - image);
        if (!(std::abs(r.sigma) < r.smallness)) continue;

        // largest disk along the expanding leaf around the anchor whose fiber images
        // still contain the carried center interval
        const double h_cross = fwd ? hb : ha;
        const double along_cross = fwd ? rc->b : rc->a;
        const double grow = fwd ? pu : ps;
        double delta = opt.local_radius;
        bool found = false;
        for (int j = 0; j <= opt.delta_halvings && !found; ++j, delta /= 2) {
            if (std::abs(along_cross) + delta > h_cross) continue;
            bool ok = true;
            for (int sgn : {-1, 1}) {
                const TorusPoint x0 = r.preimage.offset((sgn * delta / grow) * A.dir(cross));
                const Interval there = fiber_image(sys, x0, box.t, k, direction);
                const CenterHolonomy slide(sys, {HolonomyLeg{r.anchor, cross, sgn * delta}}, opt.holonomy);
                ok = ok && there.lo <= slide(r.center.lo) && slide(r.center.hi) <= there.hi;
            }
            if (ok) {
                r.delta = delta;
                found = true;
            }
        }
        if (!found) continue;
        return r;
    }
    fail(ErrorCode::budget_exceeded, "no admissible crossing within " + std::to_string(opt.max_steps) + " steps");
}

}  // namespace detail

inline SlabResult reach_stable_slab(const KanSystem& sys, const Box& U, const SlabOptions& opt = {}) {
    return detail::reach_slab(sys, U, 1, opt);
}

inline SlabResult reach_unstable_slab(const KanSystem& sys, const Box& V, const SlabOptions& opt = {}) {
    return detail::reach_slab(sys, V, -1, opt);
}

// f = phi_p and g = phi_q^-1, the two NS maps of the center intersection step
struct CenterMaps {
    FiberSlice f;
    Inverse<FiberSlice> g;
};

inline CenterMaps center_maps(const KanSystem& sys) {
    return {sys.fiber_at(sys.p()), Inverse<FiberSlice>{sys.fiber_at(sys.q())}};
}

struct WitnessOptions {
    int max_depth = 40;
    std::size_t max_samples = std::size_t{1} << 18;
    std::size_t block = 4096;
    unsigned workers = 1;
};

// Nested dyadic subdivision of the unstable axis of the box: sample i sits at the
// bit-reversed fraction of i, so every prefix refines the previous one.
inline TorusPoint subdivision_sample(const ToralAutomorphism& A, const Box& U, std::uint64_t i) {
    std::uint64_t r = 0;
    for (int b = 0; b < 64; ++b) r |= ((i >> b) & 1u) << (63 - b);
    const double frac = std::ldexp(static_cast<double>(r), -64);
    const TorusPoint z = U.center.offset((U.side_u * (frac - 0.5)) * A.dir_u());
    // witnesses are stored as doubles, so sample on doubles
    return TorusPoint::from_real(z.x1(), z.x2());
}

inline std::size_t sample_budget(const WitnessOptions& opt) {
    const std::size_t depth_cap = opt.max_depth >= 63 ? std::numeric_limits<std::size_t>::max()
                                                      : (std::size_t{1} << opt.max_depth);
    return std::min(opt.max_samples, depth_cap);
}

namespace detail {

inline real push_forward(const KanSystem& sys, TorusPoint x, real t, std::int64_t m) {
    const FiberFamily& F = sys.fiber();
    for (std::int64_t i = 0; i < m; ++i) {
        t = F.value(x, t);
        x = sys.base().apply(x);
    }
    return t;
}

// center coordinate in U's interval whose m-th image is the middle of the overlap
// with V's interval, checked by exact forward iteration of the stored doubles
inline std::optional<StatePoint> settle_witness(const KanSystem& sys, const Box& U, const Box& V, const TorusPoint& z,
                                                std::int64_t m) {
    const real lo = push_forward(sys, z, U.t.lo, m), hi = push_forward(sys, z, U.t.hi, m);
    const Interval ov = intersect({lo, hi}, V.t);
    if (!(ov.hi >= ov.lo) || lo > V.t.hi || hi < V.t.lo) return std::nullopt;
    const real target = ov.mid();
    real a = U.t.lo, b = U.t.hi;
    for (int it = 0; it < 80; ++it) {
        const real mid = a + (b - a) / 2;
        if (push_forward(sys, z, mid, m) < target) a = mid; else b = mid;
    }
    const double t = static_cast<double>(a + (b - a) / 2);
    const StatePoint w{z, t};
    if (!U.contains(sys.base(), w)) return std::nullopt;
    if (!V.contains(sys.base(), sys.iterate(w, m))) return std::nullopt;
    return w;
}

}  // namespace detail

// witness z in U with F^m(z) in V, or nothing within the sample budget
inline std::optional<StatePoint> find_witness(const KanSystem& sys, const Box& U, const Box& V, std::int64_t m,
                                              const WitnessOptions& opt = {}) {
    const ToralAutomorphism& A = sys.base();
    const std::size_t total = sample_budget(opt);
    std::vector<char> hit(opt.block);
    std::vector<std::optional<StatePoint>> found(opt.block);
    for (std::size_t start = 1; start <= total; start += opt.block) {
        const std::size_t n = std::min(opt.block, total - start + 1);
        parallel_for(n, opt.workers, [&](std::size_t i) {
            const TorusPoint z = subdivision_sample(A, U, start + i);
            TorusPoint y = z;
            for (std::int64_t s = 0; s < m; ++s) y = A.apply(y);
            hit[i] = V.contains_base(A, y);
            found[i] = hit[i] ? detail::settle_witness(sys, U, V, z, m) : std::nullopt;
        });
        for (std::size_t i = 0; i < n; ++i)
            if (found[i]) return found[i];
    }
    return std::nullopt;
}

struct SearchResult {
    std::int64_t m = 0;
    StatePoint witness;
};

// Smallest m <= m_max at which some subdivision sample of U has a center image meeting
// V, with a verified witness.
inline std::optional<SearchResult> direct_search(const KanSystem& sys, const Box& U, const Box& V, std::int64_t m_max,
                                                 const WitnessOptions& opt = {}) {
    if (m_max < 1) return std::nullopt;
    const ToralAutomorphism& A = sys.base();
    const FiberFamily& F = sys.fiber();
    const std::size_t total = sample_budget(opt);
    std::vector<TorusPoint> z(total), x(total);
    std::vector<real> lo(total), hi(total);
    parallel_for(total, opt.workers, [&](std::size_t i) {
        z[i] = x[i] = subdivision_sample(A, U, i + 1);
        lo[i] = U.t.lo;
        hi[i] = U.t.hi;
    });
    std::vector<char> hit(total);
    for (std::int64_t m = 1; m <= m_max; ++m) {
        parallel_for(total, opt.workers, [&](std::size_t i) {
            lo[i] = F.value(x[i], lo[i]);
            hi[i] = F.value(x[i], hi[i]);
            x[i] = A.apply(x[i]);
            hit[i] = lo[i] <= V.t.hi && hi[i] >= V.t.lo && V.contains_base(A, x[i]);
        });
        for (std::size_t i = 0; i < total; ++i) {
            if (!hit[i]) continue;
            if (auto w = detail::settle_witness(sys, U, V, z[i], m)) return SearchResult{m, *w};
        }
    }
    return std::nullopt;
}

struct DistortionDiagnostics {
    real D1 = 0, D2 = 0, R1 = 0, R2 = 0;
    real Q_est = 0;
    real rho_used = 0;
    double lambda = 0, gamma = 0;
    std::optional<std::size_t> dominance_n;
};

// Everything Steps 1-2 produce that the diagnostics and the witness step consume.
struct CertificateStage {
    SlabResult stable;    // U side, anchored at p
    SlabResult unstable;  // V side, anchored at q
    LeafCrossing r;       // r on L^u(p) and L^s(q); s1 unstable from p, s2 stable from q
    std::vector<HolonomyLeg> legs;  // H = H_q^s o H_p^u
    IntervalPair center_pair;       // (J_p, J_q)
    std::vector<DiophantinePair> pairs;
    std::vector<OverlapReport> overlaps;
    real rho = 0;
    real K1 = 0, K2 = 0, Q = 0;
    double lambda = 0, gamma = 0;
};

namespace detail {

inline real min_slope(const CenterHolonomyMap& m) { return *std::min_element(m.dH.begin(), m.dH.end()); }
inline real max_slope(const CenterHolonomyMap& m) { return *std::max_element(m.dH.begin(), m.dH.end()); }

// sup of |H(t) - t| / (leaf distance) over sampled t in (0, edge] for a hop of the
// given size, i.e. the center displacement per unit base distance near the boundary
inline real boundary_displacement(const KanSystem& sys, const HolonomyLeg& leg, real edge, const HolonomyOptions& opt) {
    if (leg.offset == 0) return 0;
    real q = 0;
    for (int i = 1; i <= 8; ++i) {
        const real t = edge * i / 8;
        const real h = strong_holonomy(sys, {leg.source, t}, leg.leaf, leg.offset, opt).t_prime;
        q = std::max(q, std::abs(h - t) / std::abs(static_cast<real>(leg.offset)));
    }
    return q;
}

}  // namespace detail

inline real log_or_neg_inf(real v) { return v > 0 ? std::log(v) : -std::numeric_limits<real>::infinity(); }

// D_i and R_i for the n-th pair (1-based) of the stage, plus the first index up to n
// where both dominances hold.
inline DistortionDiagnostics distortion_diagnostics(const KanSystem& sys, const CertificateStage& st, std::size_t n) {
    require(n >= 1 && n <= st.pairs.size(), "pair index out of range");
    const FiberFamily& F = sys.fiber();
    DistortionDiagnostics d;
    d.lambda = st.lambda;
    d.gamma = st.gamma;
    d.Q_est = st.Q;
    d.rho_used = st.rho;
    const real b = st.center_pair.I.hi, dd = st.center_pair.J.hi;
    const real dcb = b - F.value(sys.p(), b), dcd = dd - F.inverse_at(sys.q(), dd);
    const real lg = std::log(static_cast<real>(st.gamma)), ll = std::log(static_cast<real>(st.lambda));
    auto eval = [&](std::size_t i, real& D1, real& D2, real& R1, real& R2) {
        const auto& pr = st.pairs[i - 1];
        D1 = st.K1 * st.rho * std::exp(pr.k * lg) * dcb;
        D2 = st.K2 * st.rho * std::exp(pr.l * lg) * dcd;
        R1 = 2 * st.Q * std::exp(pr.k * ll) * std::abs(static_cast<real>(st.stable.sigma));
        R2 = 2 * st.Q * std::exp(pr.l * ll) * std::abs(static_cast<real>(st.unstable.sigma));
    };
    for (std::size_t i = 1; i <= n; ++i) {
        real D1, D2, R1, R2;
        eval(i, D1, D2, R1, R2);
        if (D1 >= 2 * R1 && D2 >= 2 * R2) {
            d.dominance_n = i;
            break;
        }
    }
    eval(n, d.D1, d.D2, d.R1, d.R2);
    return d;
}

// Least-squares slope of log(R_i/D_i) against the iterate count over the stage's
// pairs, returned as the per-iterate ratio exp(slope) for i = 1, 2.
inline std::pair<real, real> diagnostic_decay(const KanSystem& sys, const CertificateStage& st) {
    const FiberFamily& F = sys.fiber();
    const real b = st.center_pair.I.hi, dd = st.center_pair.J.hi;
    const real dcb = b - F.value(sys.p(), b), dcd = dd - F.inverse_at(sys.q(), dd);
    const real lg = std::log(static_cast<real>(st.gamma)), ll = std::log(static_cast<real>(st.lambda));
    auto fit = [](const std::vector<real>& x, const std::vector<real>& y) -> real {
        const std::size_t n = x.size();
        if (n < 2) return std::numeric_limits<real>::quiet_NaN();
        real mx = 0, my = 0;
        for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
        mx /= n, my /= n;
        real sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < n; ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
        return sxx > 0 ? std::exp(sxy / sxx) : std::numeric_limits<real>::quiet_NaN();
    };
    std::vector<real> k1, y1, k2, y2;
    const real logQ2 = log_or_neg_inf(2 * st.Q);
    for (const auto& pr : st.pairs) {
        const real lr1 = logQ2 + pr.k * ll + log_or_neg_inf(std::abs(static_cast<real>(st.stable.sigma)));
        const real ld1 = std::log(st.K1 * st.rho * dcb) + pr.k * lg;
        const real lr2 = logQ2 + pr.l * ll + log_or_neg_inf(std::abs(static_cast<real>(st.unstable.sigma)));
        const real ld2 = std::log(st.K2 * st.rho * dcd) + pr.l * lg;
        if (std::isfinite(lr1)) k1.push_back(pr.k), y1.push_back(lr1 - ld1);
        if (std::isfinite(lr2)) k2.push_back(pr.l), y2.push_back(lr2 - ld2);
    }
    return {fit(k1, y1), fit(k2, y2)};
}

struct CertificateParams {
    SlabOptions slab{};
    double r_radius = 1.0;
    std::int64_t min_pair_k = 2048;  // first center iterate considered for (k_n, l_n)
    std::int64_t max_pair_k = 100000;
    // plain improvement keeps k_n near min_pair_k and m in the low thousands
    real record_factor = 1;
    std::size_t pair_count = 10;
    int retries = 4;
    int holonomy_grid = 64;
    bool assume_independent = false;
    WitnessOptions witness{};
    HolonomyOptions holonomy{};
};

struct TransitivityCertificate {
    std::string system;
    Box U, V;
    int k0s = 0, l0u = 0;
    std::int64_t kn = 0, ln = 0, m = 0;
    StatePoint witness;
    double image_residual = 0;
    DistortionDiagnostics diagnostics;
    std::size_t pair_index = 0;  // 1-based index of (kn, ln) in the stage pair list
    CertificateStage stage;
};

inline void check_independence(const KanSystem& sys, bool assumed) {
    const real a = sys.fiber().dt(sys.p(), 0), b = sys.fiber().dt(sys.q(), 0);
    const auto ra = recognize_rational(a), rb = recognize_rational(b);
    if (ra && rb) {
        if (multiplicative_independence(*ra, *rb).dependent)
            fail(ErrorCode::independence_unknown,
                 "multipliers " + to_string(*ra) + " and " + to_string(*rb) + " are multiplicatively dependent");
        return;
    }
    if (!assumed)
        fail(ErrorCode::independence_unknown, "multipliers are not recognisably rational; assert independence explicitly");
}

inline CertificateStage build_stage(const KanSystem& sys, const Box& U, const Box& V, const CertificateParams& prm) {
    const ToralAutomorphism& A = sys.base();
    CertificateStage st;
    st.lambda = sys.validation().lambda;
    st.gamma = sys.validation().gamma;
    st.stable = reach_stable_slab(sys, U, prm.slab);
    st.unstable = reach_unstable_slab(sys, V, prm.slab);
    const auto r = A.leaf_intersection(A.segment(sys.p(), Leaf::unstable, prm.r_radius),
                                       A.segment(sys.q(), Leaf::stable, prm.r_radius));
    if (!r) fail(ErrorCode::budget_exceeded, "no crossing of L^u(p) and L^s(q) within the given radius");
    st.r = *r;
    st.legs = {HolonomyLeg{sys.p(), Leaf::unstable, r->s1}, HolonomyLeg{r->point, Leaf::stable, -r->s2}};
    const CenterHolonomy H(sys, st.legs, prm.holonomy);
    st.center_pair = IntervalPair::make(st.stable.at_pole.lo, st.stable.at_pole.hi, st.unstable.at_pole.lo,
                                        st.unstable.at_pole.hi);
    const CenterMaps cm = center_maps(sys);
    PairSearch ps;
    ps.k_min = prm.min_pair_k;
    ps.k_max = prm.max_pair_k;
    ps.record_factor = prm.record_factor;
    st.pairs = intersection_pairs(cm.f, cm.g, H, st.center_pair, prm.pair_count + prm.retries, ps);
    st.rho = std::numeric_limits<real>::infinity();
    for (const auto& pr : st.pairs) {
        st.overlaps.push_back(overlap_ratio(cm.f, cm.g, H, st.center_pair, pr.k, pr.l));
        st.rho = std::min({st.rho, st.overlaps.back().ratio_f, st.overlaps.back().ratio_g});
    }
    const auto hu = holonomy_center_map(sys, {st.legs[0]}, prm.holonomy_grid, prm.holonomy);
    const auto hs = holonomy_center_map(sys, {st.legs[1]}, prm.holonomy_grid, prm.holonomy);
    st.K1 = detail::min_slope(hu);
    st.K2 = 1 / detail::max_slope(hs);
    const HolonomyLeg back_p{st.stable.anchor, Leaf::stable, -st.stable.sigma};
    const HolonomyLeg back_q{st.unstable.anchor, Leaf::unstable, -st.unstable.sigma};
    st.Q = std::max(detail::boundary_displacement(sys, back_p, st.center_pair.I.hi, prm.holonomy),
                    detail::boundary_displacement(sys, back_q, st.center_pair.J.hi, prm.holonomy));
    return st;
}

inline TransitivityCertificate build_certificate(const KanSystem& sys, const Box& U, const Box& V,
                                                 const CertificateParams& prm = {}, const std::string& name = "") {
    sys.require_valid("build_certificate");
    check_independence(sys, prm.assume_independent);
    TransitivityCertificate c;
    c.system = name.empty() ? sys.fiber().name : name;
    c.U = U;
    c.V = V;
    c.stage = build_stage(sys, U, V, prm);
    const CertificateStage& st = c.stage;
    c.k0s = st.stable.steps;
    c.l0u = st.unstable.steps;

    // first pair that is past dominance and long enough for the cu/cs disks to reach r
    const double lu = std::abs(sys.base().eigenvalue_u());
    std::optional<std::size_t> first;
    for (std::size_t n = 1; n <= st.pairs.size() && !first; ++n) {
        const auto& pr = st.pairs[n - 1];
        const bool reach_u = pr.k * std::log(lu) + std::log(st.stable.delta) > std::log(2 * std::abs(st.r.s1));
        const bool reach_s = pr.l * std::log(lu) + std::log(st.unstable.delta) > std::log(2 * std::abs(st.r.s2));
        const auto d = distortion_diagnostics(sys, st, n);
        if (reach_u && reach_s && d.dominance_n) first = n;
    }
    if (!first) fail(ErrorCode::verification_failed, "no pair reaches dominance within the verified list");
    for (std::size_t n = *first; n < *first + 1 + prm.retries && n <= st.pairs.size(); ++n) {
        const auto& pr = st.pairs[n - 1];
        const std::int64_t m = c.k0s + pr.k + pr.l + c.l0u;
        const auto w = find_witness(sys, U, V, m, prm.witness);
        if (!w) continue;
        c.kn = pr.k;
        c.ln = pr.l;
        c.m = m;
        c.witness = *w;
        c.pair_index = n;
        c.diagnostics = distortion_diagnostics(sys, st, n);
        c.image_residual = V.distance(sys.base(), sys.iterate(*w, m));
        return c;
    }
    fail(ErrorCode::verification_failed, "no witness found for pair " + std::to_string(*first) + " and " +
                                             std::to_string(prm.retries) + " retries");
}

// distance of F^m(witness) to V; zero means the certificate holds
inline double verify_certificate(const KanSystem& sys, const TransitivityCertificate& c) {
    require(c.m == c.k0s + c.kn + c.ln + c.l0u, "certificate m is not k0s + kn + ln + l0u");
    require(c.U.contains(sys.base(), c.witness), "witness is not in U");
    return c.V.distance(sys.base(), sys.iterate(c.witness, c.m));
}

}  // namespace kantran
