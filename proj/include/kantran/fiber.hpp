#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "core.hpp"
#include "torus.hpp"

namespace kantran {

template <class M>
concept C2Map = requires(const M& m, real t) {
    { m.value(t) } -> std::convertible_to<real>;
    { m.d1(t) } -> std::convertible_to<real>;
    { m.d2(t) } -> std::convertible_to<real>;
};

template <class M>
concept HasInverse = requires(const M& m, real y) {
    { m.inverse(y) } -> std::convertible_to<real>;
};

struct FunctionMap {
    std::function<real(real)> f, df, ddf;
    real value(real t) const { return f(t); }
    real d1(real t) const { return df(t); }
    real d2(real t) const { return ddf(t); }
};

struct LinearMap {
    real slope = 1;
    real value(real t) const { return slope * t; }
    real d1(real) const { return slope; }
    real d2(real) const { return 0; }
    real inverse(real y) const { return y / slope; }
};

struct IdentityMap {
    real value(real t) const { return t; }
    real d1(real) const { return 1; }
    real d2(real) const { return 0; }
    real inverse(real y) const { return y; }
};

// Safeguarded Newton for an increasing map on [lo, hi]; stops on a relative step.
template <C2Map M>
real solve_increasing(const M& m, real y, real lo = 0, real hi = 1) {
    if (y <= m.value(lo)) return lo;
    if (y >= m.value(hi)) return hi;
    real a = lo, b = hi;
    real x = std::clamp(y, lo, hi);
    constexpr real eps = std::numeric_limits<real>::epsilon();
    for (int it = 0; it < 200; ++it) {
        const real fx = m.value(x) - y;
        if (fx == 0) return x;
        if (fx > 0) b = x; else a = x;
        const real d = m.d1(x);
        real nx = d > 0 ? x - fx / d : a + (b - a) / 2;
        if (!(nx > a && nx < b)) nx = a + (b - a) / 2;
        if (std::abs(nx - x) <= 4 * eps * std::abs(x) || b - a <= 4 * eps * std::abs(x)) return nx;
        x = nx;
    }
    return x;
}

template <C2Map M>
real inverse_value(const M& m, real y) {
    if constexpr (HasInverse<M>) return m.inverse(y);
    else return solve_increasing(m, y);
}

template <C2Map M>
struct Inverse {
    M base;
    real value(real y) const { return inverse_value(base, y); }
    real d1(real y) const { return 1 / base.d1(value(y)); }
    real d2(real y) const {
        const real x = value(y);
        const real d = base.d1(x);
        return -base.d2(x) / (d * d * d);
    }
    real inverse(real t) const { return base.value(t); }
};

// t -> 1 - m(1 - t), moving the endpoint 1 to 0
template <C2Map M>
struct Reflected {
    M base;
    real value(real t) const { return 1 - base.value(1 - t); }
    real d1(real t) const { return base.d1(1 - t); }
    real d2(real t) const { return -base.d2(1 - t); }
    real inverse(real y) const { return 1 - inverse_value(base, 1 - y); }
};

template <C2Map M>
real iterate(const M& m, real t, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) t = m.value(t);
    return t;
}

enum class PoleKind { ns, sn, neither };

inline std::string_view to_string(PoleKind k) {
    switch (k) {
    case PoleKind::ns: return "NS";
    case PoleKind::sn: return "SN";
    default: return "Neither";
    }
}

template <C2Map M>
struct PoleMap {
    M map;
    real mult0 = 1;
    real mult1 = 1;
    PoleKind kind = PoleKind::neither;

    real value(real t) const { return map.value(t); }
    real d1(real t) const { return map.d1(t); }
    real d2(real t) const { return map.d2(t); }
    real inverse(real y) const { return inverse_value(map, y); }
};

struct PoleOptions {
    int grid = 4096;
    real boundary_tol = 1e-12L;
};

template <C2Map M>
PoleMap<M> classify_pole_map(M map, PoleOptions opt = {}) {
    if (std::abs(map.value(0)) > opt.boundary_tol || std::abs(map.value(1) - 1) > opt.boundary_tol)
        fail(ErrorCode::not_boundary_fixing, "map does not fix 0 and 1");
    bool below = true, above = true;
    for (int i = 0; i <= opt.grid; ++i) {
        const real t = static_cast<real>(i) / opt.grid;
        if (!(map.d1(t) > 0)) fail(ErrorCode::not_monotone, "derivative not positive at t=" + std::to_string(double(t)));
        if (i == 0 || i == opt.grid) continue;
        const real v = map.value(t);
        below = below && v < t;
        above = above && v > t;
    }
    PoleMap<M> p{std::move(map), 0, 0, PoleKind::neither};
    p.mult0 = p.map.d1(0);
    p.mult1 = p.map.d1(1);
    if (p.mult0 > 0 && p.mult0 < 1 && p.mult1 > 1 && below) p.kind = PoleKind::ns;
    else if (p.mult1 > 0 && p.mult1 < 1 && p.mult0 > 1 && above) p.kind = PoleKind::sn;
    return p;
}

struct SternbergOptions {
    real tol = 1e-9L;
    real initial_delta = 0.5L;
    real delta_floor = 1e-6L;
    std::int64_t max_iterations = 10000;
    // sup of |h(t)/t - 1| for t <= delta/100; delta keeps shrinking until it holds
    real normalization_tol = 1e-6L;
    int grid = 256;
    real domain_hi = 1;
};

// h(t) = alpha^-N f^N(t) on [0, delta], extended to [0, domain_hi) through the
// conjugacy h = alpha^-j h f^j.
template <C2Map M>
class LinearizationChart {
public:
    LinearizationChart(M f, real alpha, real delta, std::int64_t depth, real domain_hi)
        : f_(std::move(f)), alpha_(alpha), delta_(delta), depth_(depth), domain_hi_(domain_hi) {}

    real alpha() const { return alpha_; }
    real delta() const { return delta_; }
    std::int64_t depth() const { return depth_; }
    real residual() const { return residual_; }
    real normalization_defect() const { return normalization_defect_; }
    const M& map() const { return f_; }

    real operator()(real t) const {
        if (t <= 0) return 0;
        if (t >= domain_hi_) return std::numeric_limits<real>::infinity();
        std::int64_t j = 0;
        while (t > delta_) {
            t = f_.value(t);
            if (++j > 100000000) fail(ErrorCode::no_convergence, "orbit does not enter the chart domain");
        }
        return local(t) * std::pow(alpha_, -static_cast<real>(j));
    }

    real inverse(real y) const {
        if (y <= 0) return 0;
        const real top = local(delta_);
        std::int64_t j = 0;
        real z = y;
        if (!std::isfinite(y)) return domain_hi_;
        while (z > top) {
            z *= alpha_;
            ++j;
        }
        real a = 0, b = delta_;
        for (int it = 0; it < 200 && b - a > std::numeric_limits<real>::epsilon() * b; ++it) {
            const real m = a + (b - a) / 2;
            if (local(m) < z) a = m; else b = m;
        }
        real t = a + (b - a) / 2;
        for (std::int64_t i = 0; i < j; ++i) {
            if constexpr (HasInverse<M>) t = f_.inverse(t);
            else t = solve_increasing(f_, t, 0, domain_hi_);
        }
        return t;
    }

    real local(real t) const {
        real v = t;
        for (std::int64_t n = 0; n < depth_; ++n) v = f_.value(v);
        return v * std::pow(alpha_, -static_cast<real>(depth_));
    }

    void set_quality(real residual, real normalization) {
        residual_ = residual;
        normalization_defect_ = normalization;
    }

private:
    M f_;
    real alpha_;
    real delta_;
    std::int64_t depth_;
    real domain_hi_;
    real residual_ = 0;
    real normalization_defect_ = 0;
};

template <C2Map M>
LinearizationChart<M> sternberg_linearize(M f, SternbergOptions opt = {}) {
    const real alpha = f.d1(0);
    require(alpha > 0 && alpha < 1, "sternberg_linearize needs 0 < f'(0) < 1");
    require(opt.tol > 0, "tolerance must be positive");
    bool stalled = false;
    for (real delta = opt.initial_delta; delta >= opt.delta_floor; delta /= 2) {
        // Cauchy increments at the domain edge, where they are largest
        std::int64_t depth = -1;
        real v = delta, prev = delta, prev_inc = 0;
        real scale = 1;
        for (std::int64_t n = 1; n <= opt.max_iterations; ++n) {
            v = f.value(v);
            scale /= alpha;
            const real cur = v * scale;
            const real inc = std::abs(cur - prev);
            prev = cur;
            if (inc == 0) { depth = n; break; }
            const real q = prev_inc > 0 ? inc / prev_inc : alpha;
            prev_inc = inc;
            if (q < 1 && inc * q / (1 - q) <= opt.tol / 8 * std::min<real>(1, cur)) { depth = n; break; }
        }
        if (depth < 0) { stalled = true; continue; }

        LinearizationChart<M> chart(f, alpha, delta, depth, opt.domain_hi);
        bool monotone = true;
        real residual = 0;
        real last = -1;
        for (int i = 0; i <= opt.grid; ++i) {
            const real t = delta * i / opt.grid;
            const real h = chart.local(t);
            if (i > 0 && !(h > last)) monotone = false;
            last = h;
            residual = std::max(residual, std::abs(chart.local(f.value(t)) - alpha * h));
        }
        real norm = 0;
        for (int i = 1; i <= 64; ++i) {
            const real t = delta / 100 * i / 64;
            norm = std::max(norm, std::abs(chart.local(t) / t - 1));
        }
        if (!monotone || residual > opt.tol || norm > opt.normalization_tol) continue;
        chart.set_quality(residual, norm);
        return chart;
    }
    if (stalled) fail(ErrorCode::no_convergence, "Cauchy increments stalled above tolerance");
    fail(ErrorCode::domain_collapse, "chart domain shrank below floor");
}

struct DistortionConstant {
    real value = 0;
    Interval interval;
};

template <C2Map M>
DistortionConstant distortion_constant(const M& g, real delta_tilde, int grid = 4096) {
    require(delta_tilde > 0, "distortion domain must be nonempty");
    const real step = delta_tilde / grid;
    int imax = 0, imin = 0;
    real vmax = -1, vmin = std::numeric_limits<real>::infinity();
    for (int i = 0; i <= grid; ++i) {
        const real t = step * i;
        const real a = std::abs(g.d2(t)), b = std::abs(g.d1(t));
        if (a > vmax) vmax = a, imax = i;
        if (b < vmin) vmin = b, imin = i;
    }
    // golden-section polish of each extremum inside its neighbouring cells
    auto refine = [&](int i, auto&& objective) {
        real a = std::max<real>(0, step * (i - 1)), b = std::min(delta_tilde, step * (i + 1));
        const real r = (std::sqrt(5.0L) - 1) / 2;
        real c = b - r * (b - a), d = a + r * (b - a);
        for (int it = 0; it < 80; ++it) {
            if (objective(c) > objective(d)) b = d; else a = c;
            c = b - r * (b - a);
            d = a + r * (b - a);
        }
        return objective(a + (b - a) / 2);
    };
    vmax = std::max(vmax, refine(imax, [&](real t) { return std::abs(g.d2(t)); }));
    vmin = std::min(vmin, -refine(imin, [&](real t) { return -std::abs(g.d1(t)); }));
    if (vmin < 1e-12L) fail(ErrorCode::degenerate_derivative, "min |g'| below 1e-12");
    return {vmax / vmin, {0, delta_tilde}};
}

// Family x -> phi_x of interval diffeomorphisms. Callables make any C^2 family
// usable; presets additionally supply closed-form inverses and bounds.
struct FiberFamily {
    using Fn = std::function<real(const TorusPoint&, real)>;

    std::string name;
    Fn value;
    Fn dt;
    Fn dtt;
    Fn inverse;                                  // optional
    std::optional<Interval> derivative_bounds;   // closed form, when known
    std::optional<double> x_lipschitz;           // sup |grad_x phi|, when known

    real inverse_at(const TorusPoint& x, real y) const {
        if (inverse) return inverse(x, y);
        struct Slice {
            const FiberFamily* f;
            TorusPoint x;
            real value(real t) const { return f->value(x, t); }
            real d1(real t) const { return f->dt(x, t); }
            real d2(real t) const { return f->dtt(x, t); }
        };
        return solve_increasing(Slice{this, x}, y);
    }
};

// phi_x(t) = t + t(1 - t) a(x) with a trigonometric coefficient function. Covers the
// kan-diffeo preset (cos_x1 = 1/32) and x-independent families (only bias).
struct TrigLogisticCoefficients {
    double bias = 0;
    double cos_x1 = 0;
    double sin_x1 = 0;
    double cos_x2 = 0;
    double sin_x2 = 0;

    double amplitude(const TorusPoint& x) const {
        double a = bias;
        if (cos_x1 != 0) a += cos_x1 * cos_turn(x.raw1());
        if (sin_x1 != 0) a += sin_x1 * sin_turn(x.raw1());
        if (cos_x2 != 0) a += cos_x2 * cos_turn(x.raw2());
        if (sin_x2 != 0) a += sin_x2 * sin_turn(x.raw2());
        return a;
    }
};

inline FiberFamily trig_logistic_family(const TrigLogisticCoefficients& c, std::string name = "trig-logistic") {
    FiberFamily F;
    F.name = std::move(name);
    F.value = [c](const TorusPoint& x, real t) { return t + t * (1 - t) * static_cast<real>(c.amplitude(x)); };
    F.dt = [c](const TorusPoint& x, real t) { return 1 + (1 - 2 * t) * static_cast<real>(c.amplitude(x)); };
    F.dtt = [c](const TorusPoint& x, real) { return -2 * static_cast<real>(c.amplitude(x)); };
    F.inverse = [c](const TorusPoint& x, real y) -> real {
        if (y <= 0) return 0;
        if (y >= 1) return 1;
        const real a = c.amplitude(x);
        if (a == 0) return y;
        // root of a t^2 - (1 + a) t + y = 0 in [0, 1], cancellation-free form
        return 2 * y / ((1 + a) + std::sqrt((1 + a) * (1 + a) - 4 * a * y));
    };
    const double h1 = std::hypot(c.cos_x1, c.sin_x1), h2 = std::hypot(c.cos_x2, c.sin_x2);
    // sup |a| is exact when at most one harmonic is present
    if (h1 == 0 || h2 == 0) {
        const real amax = std::abs(c.bias) + h1 + h2;
        F.derivative_bounds = Interval{1 - amax, 1 + amax};
    }
    F.x_lipschitz = 0.25 * 2 * std::numbers::pi * std::hypot(h1, h2);
    return F;
}

inline FiberFamily kan_diffeo_family() {
    return trig_logistic_family({0, 1.0 / 32, 0, 0, 0}, "kan-diffeo");
}

// fixed-x slice of a family as a C2Map
struct FiberSlice {
    const FiberFamily* family;
    TorusPoint x;
    real value(real t) const { return family->value(x, t); }
    real d1(real t) const { return family->dt(x, t); }
    real d2(real t) const { return family->dtt(x, t); }
    real inverse(real y) const { return family->inverse_at(x, y); }
};

struct CocycleValue {
    real value = 0;
    real log_derivative = 0;
};

inline CocycleValue fiber_cocycle(const FiberFamily& F, const ToralAutomorphism& A, TorusPoint x, real t,
                                  std::int64_t n) {
    CocycleValue r{t, 0};
    if (n >= 0) {
        for (std::int64_t i = 0; i < n; ++i) {
            r.log_derivative += std::log(F.dt(x, r.value));
            r.value = F.value(x, r.value);
            x = A.apply(x);
        }
    } else {
        for (std::int64_t i = 0; i < -n; ++i) {
            x = A.apply_inverse(x);
            r.value = F.inverse_at(x, r.value);
            r.log_derivative -= std::log(F.dt(x, r.value));
        }
    }
    return r;
}

}  // namespace kantran
