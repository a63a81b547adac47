#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace kantran {

// Center coordinate. Extended precision buys exponent range: (31/32)^k underflows
// double long before k reaches the pair-search budget.
using real = long double;

enum class ErrorCode {
    not_unimodular,
    not_hyperbolic,
    parallel_leaves,
    not_boundary_fixing,
    not_monotone,
    no_convergence,
    domain_collapse,
    degenerate_derivative,
    factorization_budget_exceeded,
    precision_exhausted,
    no_pair_in_budget,
    exhausted_candidates,
    not_fixed_point,
    not_on_leaf,
    budget_exceeded,
    independence_unknown,
    verification_failed,
    depth_too_fine,
    invalid_argument,
};

constexpr std::string_view to_string(ErrorCode c) {
    switch (c) {
    case ErrorCode::not_unimodular: return "NotUnimodular";
    case ErrorCode::not_hyperbolic: return "NotHyperbolic";
    case ErrorCode::parallel_leaves: return "ParallelLeaves";
    case ErrorCode::not_boundary_fixing: return "NotBoundaryFixing";
    case ErrorCode::not_monotone: return "NotMonotone";
    case ErrorCode::no_convergence: return "NoConvergence";
    case ErrorCode::domain_collapse: return "DomainCollapse";
    case ErrorCode::degenerate_derivative: return "DegenerateDerivative";
    case ErrorCode::factorization_budget_exceeded: return "FactorizationBudgetExceeded";
    case ErrorCode::precision_exhausted: return "PrecisionExhausted";
    case ErrorCode::no_pair_in_budget: return "NoPairInBudget";
    case ErrorCode::exhausted_candidates: return "ExhaustedCandidates";
    case ErrorCode::not_fixed_point: return "NotFixedPoint";
    case ErrorCode::not_on_leaf: return "NotOnLeaf";
    case ErrorCode::budget_exceeded: return "BudgetExceeded";
    case ErrorCode::independence_unknown: return "IndependenceUnknown";
    case ErrorCode::verification_failed: return "VerificationFailed";
    case ErrorCode::depth_too_fine: return "DepthTooFine";
    case ErrorCode::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorCode::invalid_argument, what);
}

struct Interval {
    real lo = 0;
    real hi = 0;

    real length() const { return hi - lo; }
    real mid() const { return lo + (hi - lo) / 2; }
    bool contains(real t) const { return lo <= t && t <= hi; }
};

inline Interval intersect(Interval a, Interval b) {
    Interval r{std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
    if (r.hi < r.lo) r.hi = r.lo;
    return r;
}

// cos(2*pi*x / 2^64) for a fixed-point angle x. Table lookup on the top bits plus a
// short Taylor correction; within a few ulp of std::cos and several times faster.
namespace detail {
inline constexpr int turn_table_bits = 10;
inline constexpr std::size_t turn_table_size = std::size_t{1} << turn_table_bits;

struct TurnTable {
    std::array<double, turn_table_size> c{};
    std::array<double, turn_table_size> s{};
    TurnTable() {
        for (std::size_t i = 0; i < turn_table_size; ++i) {
            // quadrant points are set exactly so cos(pi) == -1 etc.
            const std::size_t q = turn_table_size / 4;
            if (i % q == 0) {
                static constexpr double cs[4] = {1.0, 0.0, -1.0, 0.0};
                static constexpr double sn[4] = {0.0, 1.0, 0.0, -1.0};
                c[i] = cs[i / q];
                s[i] = sn[i / q];
                continue;
            }
            const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / turn_table_size;
            c[i] = std::cos(a);
            s[i] = std::sin(a);
        }
    }
};

inline const TurnTable& turn_table() {
    static const TurnTable t;
    return t;
}
}  // namespace detail

inline double cos_turn(std::uint64_t x) {
    const auto& tab = detail::turn_table();
    constexpr int shift = 64 - detail::turn_table_bits;
    const std::size_t idx = static_cast<std::size_t>(x >> shift);
    const std::uint64_t rem = x & ((std::uint64_t{1} << shift) - 1);
    if (rem == 0) return tab.c[idx];
    const double d = 2.0 * std::numbers::pi * std::ldexp(static_cast<double>(rem), -64);
    const double d2 = d * d;
    const double cd = 1.0 - d2 * (0.5 - d2 * (1.0 / 24 - d2 / 720));
    const double sd = d * (1.0 - d2 * (1.0 / 6 - d2 * (1.0 / 120 - d2 / 5040)));
    return tab.c[idx] * cd - tab.s[idx] * sd;
}

inline double sin_turn(std::uint64_t x) { return cos_turn(x - (std::uint64_t{1} << 62)); }

// Runs fn(i) for i in [0, n). Results must be written positionally by fn, so the
// worker count never changes the output.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace kantran
