#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "fiber.hpp"
#include "torus.hpp"

namespace kantran {

struct StatePoint {
    TorusPoint base;
    real t = 0;
};

struct ValidationOptions {
    int base_grid = 256;
    int fiber_grid = 64;
    real boundary_tol = 1e-12L;
    unsigned workers = 1;
};

struct ValidationReport {
    bool k1_pass = false;
    bool k2_pass = false;
    bool k3_pass = false;
    double lambda = 0;  // conorm of A
    double gamma = 0;   // largest gamma with phi' in (gamma, 1/gamma) on the sample
    Interval derivative_range;
    bool closed_form_range = false;
    PoleKind p_kind = PoleKind::neither;
    PoleKind q_kind = PoleKind::neither;
    double x_lipschitz = 0;  // sup |grad_x phi_x(t)|
    int base_grid = 0;
    int fiber_grid = 0;
};

class KanSystem {
public:
    static KanSystem build(const IntMatrix2& m, FiberFamily fiber, TorusPoint p, TorusPoint q,
                           const ValidationOptions& opt = {}) {
        KanSystem s;
        s.A_ = ToralAutomorphism::analyze(m);
        s.fiber_ = std::make_shared<const FiberFamily>(std::move(fiber));
        s.p_ = p;
        s.q_ = q;
        for (const TorusPoint& x : {p, q})
            if (torus_distance(s.A_.apply(x), x) > 1e-12)
                fail(ErrorCode::not_fixed_point, "(" + std::to_string(x.x1()) + ", " + std::to_string(x.x2()) +
                                                     ") is not fixed by the base map");
        s.validation_ = validate(s, opt);
        return s;
    }

    const ToralAutomorphism& base() const { return A_; }
    const FiberFamily& fiber() const { return *fiber_; }
    const TorusPoint& p() const { return p_; }
    const TorusPoint& q() const { return q_; }
    const ValidationReport& validation() const { return validation_; }
    bool valid() const { return validation_.k1_pass && validation_.k2_pass && validation_.k3_pass; }
    void require_valid(const std::string& what) const {
        if (!valid()) fail(ErrorCode::invalid_argument, what + " needs a system passing K1-K3");
    }

    StatePoint step(const StatePoint& s, int direction = 1) const {
        if (direction >= 0) return {A_.apply(s.base), fiber_->value(s.base, s.t)};
        const TorusPoint y = A_.apply_inverse(s.base);
        return {y, fiber_->inverse_at(y, s.t)};
    }

    StatePoint iterate(StatePoint s, std::int64_t n) const {
        for (std::int64_t i = 0; i < n; ++i) s = step(s, 1);
        for (std::int64_t i = 0; i < -n; ++i) s = step(s, -1);
        return s;
    }

    // phi_x as a one-dimensional map; valid while this system is alive
    FiberSlice fiber_at(const TorusPoint& x) const { return {fiber_.get(), x}; }

private:
    static ValidationReport validate(const KanSystem& s, const ValidationOptions& opt) {
        ValidationReport r;
        r.base_grid = opt.base_grid;
        r.fiber_grid = opt.fiber_grid;
        r.lambda = s.A_.conorm();
        const FiberFamily& F = *s.fiber_;
        const int nb = opt.base_grid, nf = opt.fiber_grid;
        struct Row {
            bool k1 = true;
            real lo = 1e300L, hi = -1e300L;
            double lip = 0;
        };
        std::vector<Row> rows(nb);
        const bool want_lip = !F.x_lipschitz;
        parallel_for(static_cast<std::size_t>(nb), opt.workers, [&](std::size_t i) {
            Row& row = rows[i];
            for (int j = 0; j < nb; ++j) {
                const TorusPoint x = TorusPoint::from_real(double(i) / nb, double(j) / nb);
                row.k1 = row.k1 && std::abs(F.value(x, 0)) <= opt.boundary_tol &&
                         std::abs(F.value(x, 1) - 1) <= opt.boundary_tol;
                for (int k = 0; k <= nf; ++k) {
                    const real t = static_cast<real>(k) / nf;
                    const real d = F.dt(x, t);
                    row.lo = std::min(row.lo, d);
                    row.hi = std::max(row.hi, d);
                    if (want_lip) {
                        const double h = 1e-6;
                        const real g1 = (F.value(x.offset({h, 0}), t) - F.value(x.offset({-h, 0}), t)) / (2 * h);
                        const real g2 = (F.value(x.offset({0, h}), t) - F.value(x.offset({0, -h}), t)) / (2 * h);
                        row.lip = std::max(row.lip, static_cast<double>(std::hypot(g1, g2)));
                    }
                }
            }
        });
        r.k1_pass = true;
        r.derivative_range = {rows[0].lo, rows[0].hi};
        double lip = 0;
        for (const Row& row : rows) {
            r.k1_pass = r.k1_pass && row.k1;
            r.derivative_range.lo = std::min(r.derivative_range.lo, row.lo);
            r.derivative_range.hi = std::max(r.derivative_range.hi, row.hi);
            lip = std::max(lip, row.lip);
        }
        if (F.derivative_bounds) {
            r.derivative_range = *F.derivative_bounds;
            r.closed_form_range = true;
        }
        // sampled Lipschitz constants get a safety factor for between-grid excursions
        r.x_lipschitz = F.x_lipschitz ? *F.x_lipschitz : 1.25 * lip;

        auto kind = [&](const TorusPoint& x) {
            try {
                return classify_pole_map(FiberSlice{&F, x}).kind;
            } catch (const Error&) {
                return PoleKind::neither;
            }
        };
        r.p_kind = kind(s.p_);
        r.q_kind = kind(s.q_);
        r.k2_pass = r.p_kind == PoleKind::ns && r.q_kind == PoleKind::sn;
        const double lo = static_cast<double>(r.derivative_range.lo), hi = static_cast<double>(r.derivative_range.hi);
        r.k3_pass = r.lambda < lo && hi < 1 / r.lambda;
        r.gamma = hi > 0 ? std::min(lo, 1 / hi) : 0;
        return r;
    }

    ToralAutomorphism A_;
    std::shared_ptr<const FiberFamily> fiber_;
    TorusPoint p_, q_;
    ValidationReport validation_;
};

inline KanSystem kan_diffeo_system(const ValidationOptions& opt = {}) {
    return KanSystem::build({{{3, 1}, {2, 1}}}, kan_diffeo_family(), TorusPoint::from_real(0.5, 0),
                            TorusPoint::from_real(0, 0), opt);
}

struct HolonomyOptions {
    real tol = 1e-12L;
    int max_depth = 1000;
    double reach = 2.0;     // largest leaf distance accepted for a target
    double leaf_tol = 1e-10;
};

struct HolonomyResult {
    StatePoint source;
    TorusPoint target_base;
    Leaf leaf = Leaf::stable;
    double offset = 0;  // signed leaf coordinate of the target
    real t_prime = 0;
    int depth = 0;
    real error_bound = 0;
    real residual = 0;  // defining-property residual at the returned depth
};

// One strong-leaf hop: from `source` along `leaf` by the signed leaf distance `offset`.
struct HolonomyLeg {
    TorusPoint source;
    Leaf leaf = Leaf::stable;
    double offset = 0;

    TorusPoint target(const ToralAutomorphism& A) const { return source.offset(offset * A.dir(leaf)); }
    HolonomyLeg reversed(const ToralAutomorphism& A) const { return {target(A), leaf, -offset}; }
};

// t' = lim (phi^(n)_{x'})^-1 phi^(n)_x (t) for the stable leaf, and the time-reversed limit
// for the unstable one. Both base orbits are exact: the target orbit is the source orbit
// shifted by offset * lambda^n along the leaf direction.
inline HolonomyResult strong_holonomy(const KanSystem& sys, const StatePoint& s, Leaf leaf, double offset,
                                      const HolonomyOptions& opt = {}) {
    const ToralAutomorphism& A = sys.base();
    const FiberFamily& F = sys.fiber();
    const ValidationReport& v = sys.validation();
    // the limit only needs fixed boundaries and bunching, not the pole types
    require(v.k1_pass && v.k3_pass, "strong holonomy needs a system passing K1 and K3");
    const bool stable = leaf == Leaf::stable;
    const double lam = stable ? A.eigenvalue_s() : 1 / A.eigenvalue_u();  // signed contraction per step
    const double q = std::abs(lam) / v.gamma;
    if (!(q < 1)) fail(ErrorCode::no_convergence, "no bunching: |lambda|/gamma >= 1");
    const Vec2 dir = A.dir(leaf);

    HolonomyResult r;
    r.source = s;
    r.leaf = leaf;
    r.offset = offset;
    r.target_base = s.base.offset(offset * dir);
    r.t_prime = s.t;
    const auto tail = [&](int n) {
        return static_cast<real>(v.x_lipschitz * std::abs(offset) * std::pow(q, n) / (v.gamma * (1 - q)));
    };
    if (v.x_lipschitz == 0 || offset == 0 || s.t <= 0 || s.t >= 1) {
        // exact: boundary fibers are fixed, and equal fiber maps make every approximant t
        r.depth = s.t <= 0 || s.t >= 1 ? 0 : 1;
        return r;
    }

    std::vector<TorusPoint> xs{s.base}, xps{r.target_base};
    std::vector<real> us{s.t};
    real prev = s.t;
    double scale = 1;
    for (int n = 1; n <= opt.max_depth; ++n) {
        scale *= lam;
        if (stable) {
            us.push_back(F.value(xs.back(), us.back()));
            xs.push_back(A.apply(xs.back()));
        } else {
            xs.push_back(A.apply_inverse(xs.back()));
            us.push_back(F.inverse_at(xs.back(), us.back()));
        }
        xps.push_back(xs.back().offset(offset * scale * dir));
        real w = us[n];
        if (stable)
            for (int j = n - 1; j >= 0; --j) w = F.inverse_at(xps[j], w);
        else
            for (int j = n; j >= 1; --j) w = F.value(xps[j], w);
        const real inc = std::abs(w - prev);
        prev = w;
        if (inc <= opt.tol && tail(n) <= opt.tol) {
            r.t_prime = w;
            r.depth = n;
            const real geo = inc * static_cast<real>(q / (1 - q));
            r.error_bound = std::max(tail(n), geo) + 16 * std::numeric_limits<real>::epsilon();
            // defining property: push t' along the target orbit and compare
            real z = w;
            if (stable)
                for (int j = 0; j < n; ++j) z = F.value(xps[j], z);
            else
                for (int j = 1; j <= n; ++j) z = F.inverse_at(xps[j], z);
            r.residual = std::abs(z - us[n]);
            return r;
        }
    }
    fail(ErrorCode::no_convergence, "holonomy did not settle within depth " + std::to_string(opt.max_depth));
}

inline HolonomyResult strong_holonomy(const KanSystem& sys, const StatePoint& s, const TorusPoint& target, Leaf leaf,
                                      const HolonomyOptions& opt = {}) {
    const auto off = sys.base().leaf_offset(s.base, target, leaf, opt.reach, opt.leaf_tol);
    if (!off) fail(ErrorCode::not_on_leaf, "target is not on the " + std::string(to_string(leaf)) + " leaf of the source");
    return strong_holonomy(sys, s, leaf, *off, opt);
}

inline HolonomyResult strong_stable_holonomy(const KanSystem& sys, const StatePoint& s, const TorusPoint& target,
                                             const HolonomyOptions& opt = {}) {
    return strong_holonomy(sys, s, target, Leaf::stable, opt);
}

inline HolonomyResult strong_unstable_holonomy(const KanSystem& sys, const StatePoint& s, const TorusPoint& target,
                                               const HolonomyOptions& opt = {}) {
    return strong_holonomy(sys, s, target, Leaf::unstable, opt);
}

// Composite center holonomy along a chain of legs, usable as an interval diffeomorphism.
class CenterHolonomy {
public:
    CenterHolonomy(const KanSystem& sys, std::vector<HolonomyLeg> legs, HolonomyOptions opt = {})
        : sys_(&sys), legs_(std::move(legs)), opt_(opt) {}

    real operator()(real t) const { return run(legs_, t); }
    real inverse(real t) const {
        std::vector<HolonomyLeg> back;
        for (auto it = legs_.rbegin(); it != legs_.rend(); ++it) back.push_back(it->reversed(sys_->base()));
        return run(back, t);
    }
    real slope_at_zero() const {
        const real tau = 1e-40L;
        return (*this)(tau) / tau;
    }
    const std::vector<HolonomyLeg>& legs() const { return legs_; }
    const KanSystem& system() const { return *sys_; }

private:
    real run(const std::vector<HolonomyLeg>& legs, real t) const {
        for (const HolonomyLeg& leg : legs) t = strong_holonomy(*sys_, {leg.source, t}, leg.leaf, leg.offset, opt_).t_prime;
        return t;
    }

    const KanSystem* sys_;
    std::vector<HolonomyLeg> legs_;
    HolonomyOptions opt_;
};

struct CenterHolonomyMap {
    std::vector<real> t;
    std::vector<real> H;
    std::vector<real> dH;  // forward differences, one per grid cell
    bool monotone = false;
    real max_error_bound = 0;
};

inline CenterHolonomyMap holonomy_center_map(const KanSystem& sys, const std::vector<HolonomyLeg>& legs, int grid_n,
                                             const HolonomyOptions& opt = {}, unsigned workers = 1) {
    require(grid_n >= 1, "grid_n must be positive");
    CenterHolonomyMap m;
    m.t.resize(grid_n + 1);
    m.H.resize(grid_n + 1);
    std::vector<real> err(grid_n + 1, 0);
    parallel_for(static_cast<std::size_t>(grid_n + 1), workers, [&](std::size_t i) {
        real t = static_cast<real>(i) / grid_n;
        m.t[i] = t;
        for (const HolonomyLeg& leg : legs) {
            const HolonomyResult r = strong_holonomy(sys, {leg.source, t}, leg.leaf, leg.offset, opt);
            t = r.t_prime;
            err[i] += r.error_bound;
        }
        m.H[i] = t;
    });
    m.monotone = true;
    for (int i = 0; i < grid_n; ++i) {
        m.dH.push_back((m.H[i + 1] - m.H[i]) * grid_n);
        m.monotone = m.monotone && m.H[i + 1] > m.H[i];
    }
    m.max_error_bound = *std::max_element(err.begin(), err.end());
    return m;
}

inline CenterHolonomyMap holonomy_center_map(const KanSystem& sys, const TorusPoint& source, const TorusPoint& target,
                                             Leaf path, int grid_n, const HolonomyOptions& opt = {},
                                             unsigned workers = 1) {
    const auto off = sys.base().leaf_offset(source, target, path, opt.reach, opt.leaf_tol);
    if (!off) fail(ErrorCode::not_on_leaf, "target is not on the " + std::string(to_string(path)) + " leaf of the source");
    return holonomy_center_map(sys, {HolonomyLeg{source, path, *off}}, grid_n, opt, workers);
}

}  // namespace kantran
