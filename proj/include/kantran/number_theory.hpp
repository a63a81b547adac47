#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <boost/multiprecision/miller_rabin.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"

namespace kantran {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
// 40 decimal digits, about 133 bits of mantissa
using HighFloat = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<40>>;

inline Rational parse_rational(const std::string& text) {
    const auto slash = text.find('/');
    try {
        if (slash == std::string::npos) return Rational(BigInt(text));
        const BigInt num(text.substr(0, slash));
        const BigInt den(text.substr(slash + 1));
        require(den != 0, "zero denominator in " + text);
        return Rational(num, den);
    } catch (const std::runtime_error&) {
        fail(ErrorCode::invalid_argument, "not a rational: " + text);
    }
}

inline std::string to_string(const Rational& r) {
    const auto num = boost::multiprecision::numerator(r);
    const auto den = boost::multiprecision::denominator(r);
    return den == 1 ? num.str() : num.str() + "/" + den.str();
}

// exact binary value of a floating number as a rational
template <class F>
Rational exact_rational(const F& x) {
    using boost::multiprecision::frexp;
    using std::frexp;
    int e = 0;
    F m = frexp(x, &e);
    // shift mantissa into an integer, 8 bits at a time, exactly
    BigInt num = 0;
    int shift = 0;
    while (m != 0) {
        m *= 256;
        const F ip = floor(m);
        num = num * 256 + BigInt(static_cast<long long>(ip));
        m -= ip;
        shift += 8;
    }
    Rational r(num);
    e -= shift;
    if (e >= 0) r *= Rational(BigInt(1) << e);
    else r /= Rational(BigInt(1) << -e);
    return r;
}

struct FactorizationOptions {
    unsigned trial_limit = 100000;
    std::uint64_t pollard_budget = std::uint64_t{1} << 20;
};

namespace detail {

inline const std::vector<unsigned>& small_primes(unsigned limit) {
    static std::map<unsigned, std::vector<unsigned>> cache;
    static std::mutex m;
    std::lock_guard lock(m);
    auto& v = cache[limit];
    if (v.empty()) {
        std::vector<bool> composite(limit + 1, false);
        for (unsigned i = 2; i <= limit; ++i) {
            if (composite[i]) continue;
            v.push_back(i);
            for (std::uint64_t j = std::uint64_t{i} * i; j <= limit; j += i) composite[j] = true;
        }
    }
    return v;
}

// Splits elements sharing a factor until the set is pairwise coprime.
inline std::vector<BigInt> coprime_base(std::vector<BigInt> v) {
    for (bool changed = true; changed;) {
        changed = false;
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        std::erase_if(v, [](const BigInt& b) { return b <= 1; });
        for (std::size_t i = 0; i < v.size() && !changed; ++i)
            for (std::size_t j = i + 1; j < v.size() && !changed; ++j) {
                const BigInt g = gcd(v[i], v[j]);
                if (g == 1) continue;
                const BigInt a = v[i] / g, b = v[j] / g;
                v[i] = g;
                v[j] = a;
                v.push_back(b);
                changed = true;
            }
    }
    return v;
}

inline std::map<BigInt, int> valuations(BigInt n, const std::vector<BigInt>& base) {
    std::map<BigInt, int> out;
    for (const BigInt& b : base)
        while (n % b == 0) {
            n /= b;
            ++out[b];
        }
    return out;
}

// Brent's cycle variant of Pollard rho; returns a nontrivial factor or 0.
inline BigInt pollard_brent(const BigInt& n, std::uint64_t& budget) {
    if (n % 2 == 0) return 2;
    for (unsigned c = 1; c < 64 && budget > 0; ++c) {
        BigInt y = 2, x, g = 1, q = 1, ys;
        std::uint64_t r = 1;
        const std::uint64_t m = 128;
        auto f = [&](const BigInt& v) { return (v * v + c) % n; };
        while (g == 1 && budget > 0) {
            x = y;
            for (std::uint64_t i = 0; i < r; ++i) y = f(y);
            std::uint64_t k = 0;
            while (k < r && g == 1 && budget > 0) {
                ys = y;
                const std::uint64_t lim = std::min(m, r - k);
                for (std::uint64_t i = 0; i < lim; ++i) {
                    y = f(y);
                    q = (q * (x > y ? x - y : y - x)) % n;
                }
                budget = budget > lim ? budget - lim : 0;
                g = gcd(q, n);
                k += m;
            }
            r *= 2;
        }
        if (g == n) {
            do {
                ys = f(ys);
                g = gcd(x > ys ? x - ys : ys - x, n);
            } while (g == 1);
        }
        if (g != n && g != 1) return g;
    }
    return 0;
}

}  // namespace detail

// prime factorization of n >= 1 as prime -> exponent
inline std::map<BigInt, int> factorize(BigInt n, const FactorizationOptions& opt = {}) {
    require(n >= 1, "factorize expects a positive integer");
    std::map<BigInt, int> out;
    for (unsigned p : detail::small_primes(opt.trial_limit)) {
        if (n == 1) break;
        while (n % p == 0) {
            n /= p;
            ++out[BigInt(p)];
        }
    }
    std::uint64_t budget = opt.pollard_budget;
    std::vector<BigInt> stack;
    if (n > 1) stack.push_back(n);
    const BigInt trial_sq = BigInt(opt.trial_limit) * opt.trial_limit;
    while (!stack.empty()) {
        BigInt x = stack.back();
        stack.pop_back();
        if (x < trial_sq || boost::multiprecision::miller_rabin_test(x, 32)) {
            ++out[x];
            continue;
        }
        const BigInt s = sqrt(x);
        if (s * s == x) {
            stack.push_back(s);
            stack.push_back(s);
            continue;
        }
        const BigInt d = detail::pollard_brent(x, budget);
        if (d == 0)
            fail(ErrorCode::factorization_budget_exceeded, "could not split " + x.str() + " within the Pollard budget");
        stack.push_back(d);
        stack.push_back(x / d);
    }
    // Re-express over a pairwise coprime base; this keeps the exponent comparison
    // exact even if a probable-prime test were ever wrong.
    std::vector<BigInt> keys;
    for (auto& kv : out) keys.push_back(kv.first);
    const auto base = detail::coprime_base(keys);
    if (base != keys) {
        BigInt whole = 1;
        for (auto& [p, e] : out) whole *= boost::multiprecision::pow(p, static_cast<unsigned>(e));
        out = detail::valuations(whole, base);
    }
    return out;
}

struct IndependenceVerdict {
    bool dependent = false;
    // r^n == s^m
    std::optional<std::pair<BigInt, BigInt>> witness;
};

namespace detail {

inline std::map<BigInt, BigInt> exponent_vector(const Rational& r, const FactorizationOptions& opt) {
    std::map<BigInt, BigInt> v;
    for (auto& [p, e] : factorize(boost::multiprecision::numerator(r), opt)) v[p] += e;
    for (auto& [p, e] : factorize(boost::multiprecision::denominator(r), opt)) v[p] -= e;
    std::erase_if(v, [](const auto& kv) { return kv.second == 0; });
    return v;
}

inline Rational rational_pow(const Rational& r, const BigInt& e) {
    using boost::multiprecision::pow;
    require(abs(e) <= 1000000, "exponent too large for exact power");
    const unsigned k = static_cast<unsigned>(abs(e));
    Rational p(pow(boost::multiprecision::numerator(r), k), pow(boost::multiprecision::denominator(r), k));
    return e < 0 ? Rational(1) / p : p;
}

}  // namespace detail

inline IndependenceVerdict multiplicative_independence(const Rational& r, const Rational& s,
                                                       const FactorizationOptions& opt = {}) {
    require(r > 0 && s > 0 && r != 1 && s != 1, "multiplicative_independence needs r, s > 0 and != 1");
    auto u = detail::exponent_vector(r, opt);
    auto v = detail::exponent_vector(s, opt);
    std::vector<BigInt> keys;
    for (auto& kv : u) keys.push_back(kv.first);
    for (auto& kv : v) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    const auto base = detail::coprime_base(keys);
    if (base != keys) {
        auto over_base = [&](const Rational& x) {
            std::map<BigInt, BigInt> w;
            for (auto& [b, e] : detail::valuations(boost::multiprecision::numerator(x), base)) w[b] += e;
            for (auto& [b, e] : detail::valuations(boost::multiprecision::denominator(x), base)) w[b] -= e;
            std::erase_if(w, [](const auto& kv) { return kv.second == 0; });
            return w;
        };
        u = over_base(r);
        v = over_base(s);
    }

    IndependenceVerdict verdict;
    if (u.size() != v.size()) return verdict;
    // u = (a/b) v with a/b fixed across all primes
    std::optional<Rational> ratio;
    for (auto& [p, e] : u) {
        auto it = v.find(p);
        if (it == v.end()) return verdict;
        // boost::rational rejects a negative denominator here, so fix signs first
        const BigInt num = it->second < 0 ? BigInt(-e) : e, den = abs(it->second);
        const Rational c(num, den);
        if (ratio && *ratio != c) return verdict;
        ratio = c;
    }
    const BigInt m = boost::multiprecision::numerator(*ratio);
    const BigInt n = boost::multiprecision::denominator(*ratio);
    if (detail::rational_pow(r, n) != detail::rational_pow(s, m))
        fail(ErrorCode::invalid_argument, "internal: witness identity failed");
    verdict.dependent = true;
    verdict.witness = std::make_pair(m, n);
    return verdict;
}

struct ContinuedFraction {
    std::vector<BigInt> quotients;
    std::vector<std::pair<BigInt, BigInt>> convergents;  // p_j / q_j
    bool terminated = false;                             // expansion ended exactly
};

// Expansion certified against [x - abs_error, x + abs_error]: a quotient is emitted
// only when both ends of the interval agree on it.
inline ContinuedFraction continued_fraction(const HighFloat& x, int depth, const HighFloat& abs_error) {
    require(x > 0, "continued_fraction needs x > 0");
    require(depth >= 1, "continued_fraction needs depth >= 1");
    require(abs_error >= 0, "error bound must be nonnegative");
    Rational lo = exact_rational(HighFloat(x - abs_error));
    Rational hi = exact_rational(HighFloat(x + abs_error));
    ContinuedFraction cf;
    BigInt p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    auto floor_of = [](const Rational& r) {
        BigInt n = boost::multiprecision::numerator(r), d = boost::multiprecision::denominator(r);
        BigInt q = n / d;
        if (n < 0 && q * d != n) --q;
        return q;
    };
    for (int i = 0; i < depth; ++i) {
        const BigInt a = floor_of(lo);
        if (a != floor_of(hi))
            fail(ErrorCode::precision_exhausted, "cannot certify quotient " + std::to_string(i + 1));
        cf.quotients.push_back(a);
        const BigInt p2 = a * p1 + p0, q2 = a * q1 + q0;
        cf.convergents.emplace_back(p2, q2);
        p0 = p1, q0 = q1, p1 = p2, q1 = q2;
        const Rational flo = lo - a, fhi = hi - a;
        if (flo == 0 && fhi == 0) {
            cf.terminated = true;
            break;
        }
        if (i + 1 == depth) break;
        if (flo == 0 || fhi == 0)
            fail(ErrorCode::precision_exhausted, "cannot certify quotient " + std::to_string(i + 2));
        lo = 1 / fhi;
        hi = 1 / flo;
    }
    return cf;
}

inline ContinuedFraction continued_fraction(const HighFloat& x, int depth) {
    // default: trust all but the last few digits of the working precision
    return continued_fraction(x, depth, abs(x) * HighFloat("1e-36"));
}

// Recognises a float as a small-denominator rational, e.g. a preset multiplier.
inline std::optional<Rational> recognize_rational(real x, long long max_den = 1000000, real rel_tol = 1e-15L) {
    if (!(x > 0)) return std::nullopt;
    const Rational exact = exact_rational(x);
    Rational cur = exact;
    BigInt p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    for (int i = 0; i < 64; ++i) {
        BigInt n = boost::multiprecision::numerator(cur), d = boost::multiprecision::denominator(cur);
        const BigInt a = n / d;
        const BigInt p2 = a * p1 + p0, q2 = a * q1 + q0;
        if (q2 > max_den) break;
        const Rational cand(p2, q2);
        const Rational err = abs(cand - exact);
        if (err <= exact_rational(static_cast<real>(rel_tol * x))) return cand;
        p0 = p1, q0 = q1, p1 = p2, q1 = q2;
        const Rational frac = cur - a;
        if (frac == 0) break;
        cur = 1 / frac;
    }
    return std::nullopt;
}

struct DiophantinePair {
    std::int64_t k = 0;
    std::int64_t l = 0;
    real residual = 0;  // -k ln(alpha) + l ln(beta) - ln(eta)
    real eta_star = 0;  // alpha^-k beta^l
};

struct DiophantineOptions {
    std::int64_t k_min = 1;
    std::int64_t k_max = 100000;
    // keep only pairs whose |residual| beats every earlier one
    bool improving = false;
    real safety = 1;
    // with improving: a new record must be below best / record_factor
    real record_factor = 1;
};

struct DiophantineResult {
    std::vector<DiophantinePair> pairs;
    bool dependence_suspected = false;
};

// Lattice scan: for each k the admissible l form an explicit window around the real
// solution l*, so every pair with |residual| < eps is visited, in (k, l) order.
// Stops early when visit returns false. Returns true if some residual was zero.
template <class Visit>
bool scan_diophantine(real alpha, real beta, real eta, real epsilon, const DiophantineOptions& opt, Visit&& visit) {
    require(alpha > 0 && alpha < 1 && beta > 0 && beta < 1, "alpha, beta must lie in (0, 1)");
    require(eta > 0 && epsilon > 0, "eta and epsilon must be positive");
    require(opt.record_factor >= 1, "record_factor must be at least 1");
    require(opt.k_min >= 1 && opt.k_max >= opt.k_min, "bad k range");
    const HighFloat la = log(HighFloat(alpha)), lb = log(HighFloat(beta)), le = log(HighFloat(eta));
    const HighFloat eps = HighFloat(epsilon) * HighFloat(opt.safety);
    const HighFloat width = eps / abs(lb);
    const HighFloat zero("1e-35");
    HighFloat best = eps;
    bool zero_seen = false;
    for (std::int64_t k = opt.k_min; k <= opt.k_max; ++k) {
        const HighFloat center = (le + HighFloat(k) * la) / lb;
        const auto l_lo = std::max<std::int64_t>(1, static_cast<std::int64_t>(floor(center - width)));
        const auto l_hi = static_cast<std::int64_t>(ceil(center + width));
        for (std::int64_t l = l_lo; l <= l_hi; ++l) {
            const HighFloat r = -HighFloat(k) * la + HighFloat(l) * lb - le;
            const HighFloat ar = abs(r);
            if (!(ar < eps)) continue;
            if (opt.improving && !(ar < best)) continue;
            best = ar / HighFloat(opt.record_factor);
            zero_seen = zero_seen || ar < zero;
            if (!visit(DiophantinePair{k, l, static_cast<real>(r), static_cast<real>(HighFloat(eta) * exp(r))}))
                return zero_seen;
        }
    }
    return zero_seen;
}

inline DiophantineResult diophantine_pairs(real alpha, real beta, real eta, real epsilon, std::size_t max_terms,
                                           const DiophantineOptions& opt = {}) {
    DiophantineResult out;
    if (max_terms == 0) return out;
    out.dependence_suspected = scan_diophantine(alpha, beta, eta, epsilon, opt, [&](const DiophantinePair& p) {
        out.pairs.push_back(p);
        return out.pairs.size() < max_terms;
    });
    if (out.pairs.empty())
        fail(ErrorCode::no_pair_in_budget, "no pair with |residual| < epsilon for k <= " + std::to_string(opt.k_max));
    // an exactly terminating expansion of the log ratio means the logs are dependent
    try {
        const HighFloat ratio = log(HighFloat(beta)) / log(HighFloat(alpha));
        if (continued_fraction(ratio, 12).terminated) out.dependence_suspected = true;
    } catch (const Error&) {
    }
    return out;
}

// Pairs (k, l) = (p_j, q_j) from the convergents of ln(beta)/ln(alpha), residuals for eta = 1.
inline std::vector<DiophantinePair> convergent_pairs(real alpha, real beta, int count) {
    const HighFloat la = log(HighFloat(alpha)), lb = log(HighFloat(beta));
    const ContinuedFraction cf = continued_fraction(lb / la, count + 2);
    std::vector<DiophantinePair> out;
    for (auto& [p, q] : cf.convergents) {
        if (p < 1 || q < 1) continue;
        const auto k = static_cast<std::int64_t>(p), l = static_cast<std::int64_t>(q);
        const HighFloat r = -HighFloat(k) * la + HighFloat(l) * lb;
        out.push_back({k, l, static_cast<real>(r), static_cast<real>(exp(r))});
        if (static_cast<int>(out.size()) == count) break;
    }
    return out;
}

}  // namespace kantran
