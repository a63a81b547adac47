#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "skew_product.hpp"
#include "torus.hpp"

namespace kantran {

enum class BasinLabel { basin0, basin1, undecided };

inline std::string_view to_string(BasinLabel l) {
    switch (l) {
    case BasinLabel::basin0: return "basin0";
    case BasinLabel::basin1: return "basin1";
    case BasinLabel::undecided: return "undecided";
    }
    return "undecided";
}

// (x, t) -> (3x, t + t(1 - t) cos(2 pi x) / 32) on the cylinder. The circle coordinate
// lives in base.x1 on the 2^-64 grid, where tripling is exact; x2 is unused.
struct KanEndomorphism {
    real amplitude = 1.0L / 32;

    StatePoint step(const StatePoint& s) const {
        const auto x = s.base.raw1();
        const real a = amplitude * static_cast<real>(cos_turn(x));
        return {TorusPoint::from_fixed(x * 3, 0), s.t + s.t * (1 - s.t) * a};
    }
};

template <class D>
concept BasinDynamics = requires(const D& d, const StatePoint& s) {
    { d.step(s) } -> std::convertible_to<StatePoint>;
};

template <BasinDynamics D, class Obs>
real birkhoff_average(const D& dyn, StatePoint s, Obs&& observable, std::int64_t n) {
    require(n >= 1, "n must be positive");
    real sum = 0;
    for (std::int64_t k = 0; k < n; ++k) {
        sum += observable(s);
        if (k + 1 < n) s = dyn.step(s);
    }
    return sum / static_cast<real>(n);
}

// mean of t over iterates n/2 .. n-1
template <BasinDynamics D>
real tail_average_t(const D& dyn, StatePoint s, std::int64_t n) {
    require(n >= 1, "n must be positive");
    const std::int64_t start = n / 2;
    real sum = 0;
    for (std::int64_t k = 0; k < n; ++k) {
        if (k >= start) sum += s.t;
        if (k + 1 < n) s = dyn.step(s);
    }
    return sum / static_cast<real>(n - start);
}

struct Thresholds {
    real tau0 = 0.2L;
    real tau1 = 0.8L;
};

inline BasinLabel label_for(real avg, const Thresholds& th) {
    if (avg < th.tau0) return BasinLabel::basin0;
    if (avg > th.tau1) return BasinLabel::basin1;
    return BasinLabel::undecided;
}

template <BasinDynamics D>
BasinLabel classify_basin(const D& dyn, const StatePoint& s, std::int64_t n, const Thresholds& th = {}) {
    require(0 < th.tau0 && th.tau0 < th.tau1 && th.tau1 < 1, "thresholds need 0 < tau0 < tau1 < 1");
    return label_for(tail_average_t(dyn, s, n), th);
}

enum class SliceKind { cylinder, fixed_x2, fixed_t };

inline std::string_view to_string(SliceKind k) {
    switch (k) {
    case SliceKind::cylinder: return "cylinder";
    case SliceKind::fixed_x2: return "fixed-x2";
    case SliceKind::fixed_t: return "fixed-t";
    }
    return "cylinder";
}

// Horizontal axis is always x1. The vertical axis is t, except for fixed_t where it
// is x2 and t is held at `value`; fixed_x2 holds x2 at `value`.
struct SliceSpec {
    SliceKind kind = SliceKind::cylinder;
    double value = 0;

    StatePoint cell(double x1, double v) const {
        switch (kind) {
        case SliceKind::cylinder: return {TorusPoint::from_real(x1, 0), v};
        case SliceKind::fixed_x2: return {TorusPoint::from_real(x1, value), v};
        case SliceKind::fixed_t: return {TorusPoint::from_real(x1, v), value};
        }
        return {};
    }
};

// Grid centers are dyadic, and dyadic points sit on short periodic orbits of x -> 3x
// (period 256 for odd/1024). Low-order bits from a hash of the cell, forced odd, move the
// start by < 2^-32 and put it on an orbit of period 2^62.
inline std::uint64_t cell_bits(std::uint64_t cell, int axis) {
    std::uint64_t z = cell * 2 + static_cast<std::uint64_t>(axis) + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return (z >> 32) | 1;
}

inline StatePoint generic_start(const StatePoint& s, std::uint64_t cell) {
    return {TorusPoint::from_fixed(s.base.raw1() + cell_bits(cell, 0), s.base.raw2() + cell_bits(cell, 1)), s.t};
}

struct BasinRaster {
    int grid_w = 0, grid_h = 0;
    SliceSpec slice;
    std::int64_t n = 0;
    Thresholds thresholds;
    std::vector<BasinLabel> labels;  // row-major, row 0 at the bottom of the vertical axis
    std::vector<real> averages;

    BasinLabel at(int i, int j) const { return labels[static_cast<std::size_t>(j) * grid_w + i]; }
    static double center(int i, int size) { return (i + 0.5) / size; }

    std::size_t count(BasinLabel l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }
    double fraction(BasinLabel l) const { return static_cast<double>(count(l)) / labels.size(); }
};

template <BasinDynamics D>
BasinRaster basin_raster(const D& dyn, int grid_w, int grid_h, const SliceSpec& slice, std::int64_t n,
                         const Thresholds& th = {}, unsigned workers = 1) {
    require(grid_w >= 2 && grid_h >= 2, "grid dimensions must be at least 2");
    require(n >= 1, "n must be positive");
    require(0 < th.tau0 && th.tau0 < th.tau1 && th.tau1 < 1, "thresholds need 0 < tau0 < tau1 < 1");
    BasinRaster r;
    r.grid_w = grid_w;
    r.grid_h = grid_h;
    r.slice = slice;
    r.n = n;
    r.thresholds = th;
    const std::size_t cells = static_cast<std::size_t>(grid_w) * grid_h;
    r.labels.resize(cells);
    r.averages.resize(cells);
    parallel_for(cells, workers, [&](std::size_t c) {
        const int i = static_cast<int>(c % grid_w), j = static_cast<int>(c / grid_w);
        const StatePoint s =
            generic_start(slice.cell(BasinRaster::center(i, grid_w), BasinRaster::center(j, grid_h)), c);
        r.averages[c] = tail_average_t(dyn, s, n);
        r.labels[c] = label_for(r.averages[c], th);
    });
    return r;
}

struct BoxFractions {
    int depth = 0;
    int bx = 0, by = 0;
    double frac0 = 0, frac1 = 0, frac_undecided = 0;
};

struct InterminglingReport {
    int depth = 0;
    std::vector<BoxFractions> per_box_fractions;  // depth 0 (whole raster) up to depth
    double min_fraction = 0;
};

inline InterminglingReport intermingling_report(const BasinRaster& r, int depth) {
    require(depth >= 1, "depth must be at least 1");
    if ((std::int64_t{1} << std::min(depth, 40)) * 4 > std::min(r.grid_w, r.grid_h))
        fail(ErrorCode::depth_too_fine, "2^depth exceeds min(grid_w, grid_h) / 4");
    InterminglingReport rep;
    rep.depth = depth;
    rep.min_fraction = 1;
    for (int d = 0; d <= depth; ++d) {
        const int parts = 1 << d;
        for (int by = 0; by < parts; ++by)
            for (int bx = 0; bx < parts; ++bx) {
                const int i0 = bx * r.grid_w / parts, i1 = (bx + 1) * r.grid_w / parts;
                const int j0 = by * r.grid_h / parts, j1 = (by + 1) * r.grid_h / parts;
                std::size_t c0 = 0, c1 = 0, cu = 0;
                for (int j = j0; j < j1; ++j)
                    for (int i = i0; i < i1; ++i) switch (r.at(i, j)) {
                        case BasinLabel::basin0: ++c0; break;
                        case BasinLabel::basin1: ++c1; break;
                        case BasinLabel::undecided: ++cu; break;
                        }
                const double tot = static_cast<double>(c0 + c1 + cu);
                BoxFractions b{d, bx, by, c0 / tot, c1 / tot, cu / tot};
                rep.min_fraction = std::min(rep.min_fraction, std::min(b.frac0, b.frac1));
                rep.per_box_fractions.push_back(b);
            }
    }
    return rep;
}

inline unsigned char pgm_level(BasinLabel l) {
    switch (l) {
    case BasinLabel::basin0: return 0;
    case BasinLabel::basin1: return 255;
    case BasinLabel::undecided: return 128;
    }
    return 128;
}

// P5 with the vertical axis pointing up, so the first stored row is the top one
inline void write_pgm(std::ostream& os, const BasinRaster& r, std::uint64_t seed) {
    os << "P5\n# seed " << seed << "\n" << r.grid_w << " " << r.grid_h << "\n255\n";
    std::vector<char> row(r.grid_w);
    for (int j = r.grid_h - 1; j >= 0; --j) {
        for (int i = 0; i < r.grid_w; ++i) row[i] = static_cast<char>(pgm_level(r.at(i, j)));
        os.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
}

}  // namespace kantran
