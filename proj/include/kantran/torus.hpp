#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace kantran {

struct Vec2 {
    double x = 0;
    double y = 0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    double norm() const { return std::hypot(x, y); }
};

// Point of T^2 stored as 64-bit binary fractions. Integer matrices act exactly on
// this representation (wraparound is reduction mod 1), so base orbits never drift.
class TorusPoint {
public:
    using word = std::uint64_t;

    constexpr TorusPoint() = default;
    static constexpr TorusPoint from_fixed(word a, word b) { return TorusPoint(a, b); }
    static TorusPoint from_real(double x1, double x2) { return TorusPoint(to_fixed(x1), to_fixed(x2)); }

    double x1() const { return std::ldexp(static_cast<double>(a_), -64); }
    double x2() const { return std::ldexp(static_cast<double>(b_), -64); }
    // exact value, 64 significant bits
    long double x1_exact() const { return std::ldexp(static_cast<long double>(a_), -64); }
    long double x2_exact() const { return std::ldexp(static_cast<long double>(b_), -64); }
    constexpr word raw1() const { return a_; }
    constexpr word raw2() const { return b_; }

    TorusPoint offset(Vec2 d) const { return TorusPoint(a_ + to_fixed(d.x), b_ + to_fixed(d.y)); }

    friend constexpr bool operator==(const TorusPoint&, const TorusPoint&) = default;

    // reduces any real mod 1 onto the 2^-64 grid
    static word to_fixed(long double v) {
        long double f = v - std::floor(v);
        long double scaled = std::nearbyint(std::ldexp(f, 64));
        if (scaled >= std::ldexp(1.0L, 64)) return 0;
        return static_cast<word>(scaled);
    }

private:
    constexpr TorusPoint(word a, word b) : a_(a), b_(b) {}
    word a_ = 0;
    word b_ = 0;
};

// Difference to - from in the lift, using the minimal integer translate.
inline Vec2 lifted_difference(const TorusPoint& from, const TorusPoint& to) {
    auto d = [](std::uint64_t a, std::uint64_t b) {
        return std::ldexp(static_cast<double>(static_cast<std::int64_t>(b - a)), -64);
    };
    return {d(from.raw1(), to.raw1()), d(from.raw2(), to.raw2())};
}

inline double torus_distance(const TorusPoint& a, const TorusPoint& b) {
    return lifted_difference(a, b).norm();
}

enum class Leaf { stable, unstable };

inline std::string_view to_string(Leaf l) { return l == Leaf::stable ? "stable" : "unstable"; }

using IntMatrix2 = std::array<std::array<std::int64_t, 2>, 2>;

struct LeafSegment {
    TorusPoint base;
    Leaf direction = Leaf::stable;
    double radius = 0;
};

// point of seg1 and seg2 together with the signed leaf parameters on each
struct LeafCrossing {
    TorusPoint point;
    double s1 = 0;
    double s2 = 0;
};

class ToralAutomorphism {
public:
    static ToralAutomorphism analyze(const IntMatrix2& m) {
        ToralAutomorphism A;
        A.m_ = m;
        const std::int64_t a = m[0][0], b = m[0][1], c = m[1][0], d = m[1][1];
        A.det_ = a * d - b * c;
        if (A.det_ != 1 && A.det_ != -1)
            fail(ErrorCode::not_unimodular, "determinant " + std::to_string(A.det_));
        const std::int64_t tr = a + d;
        // eigenvalue +-1 exactly when the characteristic polynomial vanishes there
        if (1 - tr + A.det_ == 0 || 1 + tr + A.det_ == 0 || tr * tr - 4 * A.det_ <= 0)
            fail(ErrorCode::not_hyperbolic, "eigenvalue of modulus 1");
        A.inv_ = {{{A.det_ * d, -A.det_ * b}, {-A.det_ * c, A.det_ * a}}};

        const double disc = std::sqrt(static_cast<double>(tr * tr - 4 * A.det_));
        const double sgn = tr > 0 ? 1.0 : -1.0;
        A.lu_ = (static_cast<double>(tr) + sgn * disc) / 2;
        A.ls_ = static_cast<double>(A.det_) / A.lu_;
        A.du_ = eigenvector(m, A.lu_);
        A.ds_ = eigenvector(m, A.ls_);

        const double t = static_cast<double>(a * a + b * b + c * c + d * d);
        A.norm_ = std::sqrt((t + std::sqrt(t * t - 4)) / 2);
        A.conorm_ = 1 / A.norm_;

        // basis change (s, u) <- lifted vector
        const double det_b = A.ds_.x * A.du_.y - A.du_.x * A.ds_.y;
        A.to_leaf_ = {A.du_.y / det_b, -A.du_.x / det_b, -A.ds_.y / det_b, A.ds_.x / det_b};
        A.fixed_ = enumerate_fixed_points(m);
        return A;
    }

    const IntMatrix2& entries() const { return m_; }
    const IntMatrix2& inverse_entries() const { return inv_; }
    std::int64_t determinant() const { return det_; }
    double eigenvalue_u() const { return lu_; }
    double eigenvalue_s() const { return ls_; }
    Vec2 dir_u() const { return du_; }
    Vec2 dir_s() const { return ds_; }
    Vec2 dir(Leaf l) const { return l == Leaf::stable ? ds_ : du_; }
    double eigenvalue(Leaf l) const { return l == Leaf::stable ? ls_ : lu_; }
    double norm() const { return norm_; }
    double conorm() const { return conorm_; }
    const std::vector<TorusPoint>& fixed_points() const { return fixed_; }

    TorusPoint apply(const TorusPoint& x) const { return mul(m_, x); }
    TorusPoint apply_inverse(const TorusPoint& x) const { return mul(inv_, x); }
    TorusPoint apply(const TorusPoint& x, std::int64_t n) const {
        TorusPoint y = x;
        if (n >= 0)
            for (std::int64_t i = 0; i < n; ++i) y = mul(m_, y);
        else
            for (std::int64_t i = 0; i < -n; ++i) y = mul(inv_, y);
        return y;
    }
    Vec2 apply_lifted(Vec2 v) const {
        return {static_cast<double>(m_[0][0]) * v.x + static_cast<double>(m_[0][1]) * v.y,
                static_cast<double>(m_[1][0]) * v.x + static_cast<double>(m_[1][1]) * v.y};
    }

    // v = s * dir_s + u * dir_u, returned as {s, u}
    Vec2 leaf_coordinates(Vec2 v) const {
        return {to_leaf_[0] * v.x + to_leaf_[1] * v.y, to_leaf_[2] * v.x + to_leaf_[3] * v.y};
    }
    Vec2 from_leaf_coordinates(double s, double u) const { return s * ds_ + u * du_; }

    LeafSegment segment(const TorusPoint& base, Leaf l, double radius) const {
        require(radius >= 0, "leaf radius must be nonnegative");
        return {base, l, radius};
    }
    TorusPoint point_on(const LeafSegment& seg, double s) const { return seg.base.offset(s * dir(seg.direction)); }

    // Signed leaf distance from `from` to `to` along the given leaf, or nothing when
    // `to` is farther than tol from that leaf (checked over translates within reach).
    std::optional<double> leaf_offset(const TorusPoint& from, const TorusPoint& to, Leaf l,
                                      double reach = 2.0, double tol = 1e-10) const {
        const Vec2 base = lifted_difference(from, to);
        std::optional<double> best;
        const int R = static_cast<int>(std::ceil(reach)) + 1;
        for (int n1 = -R; n1 <= R; ++n1)
            for (int n2 = -R; n2 <= R; ++n2) {
                const Vec2 su = leaf_coordinates(base + Vec2{double(n1), double(n2)});
                const double along = l == Leaf::stable ? su.x : su.y;
                const double across = l == Leaf::stable ? su.y : su.x;
                if (std::abs(across) > tol || std::abs(along) > reach) continue;
                if (!best || std::abs(along) < std::abs(*best)) best = along;
            }
        return best;
    }

    std::optional<LeafCrossing> leaf_intersection(const LeafSegment& seg1, const LeafSegment& seg2) const {
        if (seg1.direction == seg2.direction)
            fail(ErrorCode::parallel_leaves, "both segments are " + std::string(to_string(seg1.direction)));
        const bool first_stable = seg1.direction == Leaf::stable;
        const LeafSegment& st = first_stable ? seg1 : seg2;
        const LeafSegment& un = first_stable ? seg2 : seg1;
        // st.base + a dir_s = un.base + b dir_u + n  =>  a dir_s - b dir_u = w + n
        const Vec2 w = lifted_difference(st.base, un.base);
        const double reach = st.radius + un.radius + 1;
        const int R = static_cast<int>(std::ceil(reach));
        std::optional<LeafCrossing> best;
        double best_cost = 0;
        for (int n1 = -R; n1 <= R; ++n1)
            for (int n2 = -R; n2 <= R; ++n2) {
                const Vec2 su = leaf_coordinates(w + Vec2{double(n1), double(n2)});
                const double a = su.x, b = -su.y;
                if (std::abs(a) > st.radius || std::abs(b) > un.radius) continue;
                const double cost = std::abs(a) + std::abs(b);
                if (best && !(cost < best_cost)) continue;
                best = LeafCrossing{st.base.offset(a * ds_), a, b};
                best_cost = cost;
            }
        if (best && !first_stable) std::swap(best->s1, best->s2);
        return best;
    }

    // perpendicular distance from x to the line through base with the given direction
    double distance_to_line(const TorusPoint& base, Leaf l, const TorusPoint& x) const {
        const Vec2 d = lifted_difference(base, x);
        double best = 1e300;
        for (int n1 = -3; n1 <= 3; ++n1)
            for (int n2 = -3; n2 <= 3; ++n2) {
                const Vec2 v = d + Vec2{double(n1), double(n2)};
                const Vec2 e = dir(l);
                best = std::min(best, std::abs(v.x * e.y - v.y * e.x));
            }
        return best;
    }

private:
    static Vec2 eigenvector(const IntMatrix2& m, double lambda) {
        const Vec2 v1{static_cast<double>(m[0][1]), lambda - static_cast<double>(m[0][0])};
        const Vec2 v2{lambda - static_cast<double>(m[1][1]), static_cast<double>(m[1][0])};
        Vec2 v = v1.norm() >= v2.norm() ? v1 : v2;
        const double n = v.norm();
        v = (1 / n) * v;
        if (v.x < 0 || (v.x == 0 && v.y < 0)) v = (-1.0) * v;
        return v;
    }

    static TorusPoint mul(const IntMatrix2& m, const TorusPoint& x) {
        using W = std::uint64_t;
        const W a = static_cast<W>(m[0][0]), b = static_cast<W>(m[0][1]);
        const W c = static_cast<W>(m[1][0]), d = static_cast<W>(m[1][1]);
        return TorusPoint::from_fixed(a * x.raw1() + b * x.raw2(), c * x.raw1() + d * x.raw2());
    }

    // Solutions of (A - I)x in Z^2: x = (A - I)^{-1} n over the integer points n of the
    // image of the unit square; exact as rationals, then rounded onto the grid.
    static std::vector<TorusPoint> enumerate_fixed_points(const IntMatrix2& m) {
        const std::int64_t a = m[0][0] - 1, b = m[0][1], c = m[1][0], d = m[1][1] - 1;
        const std::int64_t D = a * d - b * c;
        const std::int64_t AD = D < 0 ? -D : D;
        std::vector<std::pair<std::int64_t, std::int64_t>> nums;  // numerators over AD
        const std::int64_t lo1 = std::min({0L, a, b, a + b}), hi1 = std::max({0L, a, b, a + b});
        const std::int64_t lo2 = std::min({0L, c, d, c + d}), hi2 = std::max({0L, c, d, c + d});
        for (std::int64_t n1 = lo1; n1 <= hi1; ++n1)
            for (std::int64_t n2 = lo2; n2 <= hi2; ++n2) {
                // x = adj(M) n / D
                std::int64_t p1 = d * n1 - b * n2, p2 = -c * n1 + a * n2;
                if (D < 0) p1 = -p1, p2 = -p2;
                auto mod = [AD](std::int64_t v) { return ((v % AD) + AD) % AD; };
                nums.emplace_back(mod(p1), mod(p2));
            }
        std::sort(nums.begin(), nums.end());
        nums.erase(std::unique(nums.begin(), nums.end()), nums.end());
        std::vector<TorusPoint> out;
        for (auto [p1, p2] : nums)
            out.push_back(TorusPoint::from_real(static_cast<double>(static_cast<long double>(p1) / AD),
                                                static_cast<double>(static_cast<long double>(p2) / AD)));
        return out;
    }

    IntMatrix2 m_{};
    IntMatrix2 inv_{};
    std::int64_t det_ = 1;
    double lu_ = 0, ls_ = 0, norm_ = 0, conorm_ = 0;
    Vec2 du_, ds_;
    std::array<double, 4> to_leaf_{};
    std::vector<TorusPoint> fixed_;
};

}  // namespace kantran
