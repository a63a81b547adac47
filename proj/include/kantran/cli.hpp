#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "io.hpp"
#include "kantran.hpp"

namespace kantran::cli {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat INI sections, checked against the known keys.
class RunConfig {
public:
    static const std::map<std::string, std::set<std::string>>& schema() {
        static const std::map<std::string, std::set<std::string>> s = {
            {"system", {"matrix", "p", "q", "bias", "cos_x1", "sin_x1", "cos_x2", "sin_x2"}},
            {"U", {"x1", "x2", "side_s", "side_u", "t_lo", "t_hi"}},
            {"V", {"x1", "x2", "side_s", "side_u", "t_lo", "t_hi"}},
            {"certify", {"min_pair_k", "max_pair_k", "pair_count", "retries", "samples", "assume_independent",
                         "box_side", "t_width"}},
            {"search", {"m_max", "samples"}},
            {"pairs", {"alpha", "beta", "eta", "epsilon", "count", "k_min", "k_max", "improving"}},
            {"linearize", {"map", "grid"}},
            {"holonomy", {"x1", "x2", "t", "leaf", "offset"}},
            {"basins", {"width", "height", "n", "slice", "slice_value", "tau0", "tau1", "depth", "csv"}},
        };
        return s;
    }

    static RunConfig load(const std::string& path) {
        RunConfig c;
        if (path.empty()) return c;
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::ini_parser::read_ini(path, tree);
        } catch (const std::exception& e) {
            throw UsageError(std::string("cannot read config: ") + e.what());
        }
        for (const auto& [section, body] : tree) {
            const auto it = schema().find(section);
            if (it == schema().end()) throw UsageError("unknown config section [" + section + "]");
            if (body.empty()) throw UsageError("config key outside a section: " + section);
            for (const auto& [key, value] : body) {
                if (!it->second.count(key)) throw UsageError("unknown key " + key + " in [" + section + "]");
                c.values_[section][key] = value.get_value<std::string>();
            }
        }
        return c;
    }

    bool has(const std::string& section) const { return values_.count(section) > 0; }
    bool has(const std::string& section, const std::string& key) const {
        const auto it = values_.find(section);
        return it != values_.end() && it->second.count(key);
    }
    std::string text(const std::string& section, const std::string& key) const {
        return values_.at(section).at(key);
    }

    template <class T>
    T get(const std::string& section, const std::string& key, T fallback) const {
        if (!has(section, key)) return fallback;
        const std::string s = text(section, key);
        if constexpr (std::is_same_v<T, std::string>) {
            return s;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (s == "true" || s == "1") return true;
            if (s == "false" || s == "0") return false;
            throw UsageError("[" + section + "] " + key + " must be true or false");
        } else {
            std::istringstream in(s);
            T v{};
            in >> v;
            if (!in || !(in >> std::ws).eof()) throw UsageError("[" + section + "] " + key + " is not a number: " + s);
            return v;
        }
    }

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

struct Globals {
    std::string system = "kan-diffeo";
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::optional<double> tol;
};

template <class T>
T pick(const std::optional<T>& flag, const RunConfig& cfg, const std::string& section, const std::string& key,
       T fallback) {
    return flag ? *flag : cfg.get<T>(section, key, fallback);
}

inline std::vector<double> numbers(const std::string& s, std::size_t n, const std::string& what) {
    std::istringstream in(s);
    std::vector<double> v;
    double x;
    while (in >> x) v.push_back(x);
    if (v.size() != n || !(in.eof())) throw UsageError(what + " needs " + std::to_string(n) + " numbers");
    return v;
}

inline KanSystem make_system(const Globals& g, const RunConfig& cfg) {
    if (g.system == "kan-diffeo") return kan_diffeo_system({.workers = g.workers});
    if (g.system == "kan-endo") fail(ErrorCode::invalid_argument, "kan-endo is not invertible; use it with basins");
    if (g.system != "inline") throw UsageError("unknown system " + g.system + " (kan-diffeo, kan-endo, inline)");
    if (!cfg.has("system")) throw UsageError("system inline needs a [system] section");
    const auto m = numbers(cfg.get<std::string>("system", "matrix", "3 1 2 1"), 4, "matrix");
    for (double e : m)
        if (e != std::floor(e)) throw UsageError("matrix entries must be integers");
    const auto p = numbers(cfg.get<std::string>("system", "p", "0.5 0"), 2, "p");
    const auto q = numbers(cfg.get<std::string>("system", "q", "0 0"), 2, "q");
    TrigLogisticCoefficients c;
    c.bias = cfg.get("system", "bias", 0.0);
    c.cos_x1 = cfg.get("system", "cos_x1", 0.0);
    c.sin_x1 = cfg.get("system", "sin_x1", 0.0);
    c.cos_x2 = cfg.get("system", "cos_x2", 0.0);
    c.sin_x2 = cfg.get("system", "sin_x2", 0.0);
    const IntMatrix2 A{{{std::int64_t(m[0]), std::int64_t(m[1])}, {std::int64_t(m[2]), std::int64_t(m[3])}}};
    return KanSystem::build(A, trig_logistic_family(c, "inline"), TorusPoint::from_real(p[0], p[1]),
                            TorusPoint::from_real(q[0], q[1]), {.workers = g.workers});
}

inline Box config_box(const RunConfig& cfg, const std::string& s) {
    auto need = [&](const char* k) {
        if (!cfg.has(s, k)) throw UsageError("[" + s + "] needs " + k);
        return cfg.get(s, k, 0.0);
    };
    const double side_s = need("side_s");
    return Box::make(need("x1"), need("x2"), side_s, cfg.get(s, "side_u", side_s), need("t_lo"), need("t_hi"));
}

// boxes from [U]/[V], or drawn from the seed when the config has neither
inline std::pair<Box, Box> boxes(const Globals& g, const RunConfig& cfg) {
    if (cfg.has("U") != cfg.has("V")) throw UsageError("give both [U] and [V] or neither");
    if (cfg.has("U")) return {config_box(cfg, "U"), config_box(cfg, "V")};
    std::mt19937_64 rng(g.seed);
    const double side = cfg.get("certify", "box_side", 0.1), width = cfg.get("certify", "t_width", 0.1);
    Box U = random_box(rng, side, width);
    Box V = random_box(rng, side, width);
    return {U, V};
}

class Output {
public:
    Output(const std::string& path, std::ostream& fallback, bool binary = false) {
        if (path.empty() || path == "-") {
            os_ = &fallback;
            return;
        }
        file_.open(path, binary ? std::ios::binary : std::ios::out);
        if (!file_) throw UsageError("cannot open " + path + " for writing");
        os_ = &file_;
    }
    std::ostream& operator*() { return *os_; }

private:
    std::ofstream file_;
    std::ostream* os_;
};

inline void emit(const Globals& g, std::ostream& out, const Json& j) {
    Output o(g.out, out);
    *o << to_json_string(j);
}

inline HolonomyOptions holonomy_options(const Globals& g) {
    HolonomyOptions h;
    if (g.tol) h.tol = *g.tol;
    return h;
}

inline CertificateParams certificate_params(const Globals& g, const RunConfig& cfg) {
    CertificateParams prm;
    prm.min_pair_k = cfg.get<std::int64_t>("certify", "min_pair_k", prm.min_pair_k);
    prm.max_pair_k = cfg.get<std::int64_t>("certify", "max_pair_k", prm.max_pair_k);
    prm.pair_count = cfg.get<std::size_t>("certify", "pair_count", prm.pair_count);
    prm.retries = cfg.get("certify", "retries", prm.retries);
    prm.witness.max_samples = cfg.get<std::size_t>("certify", "samples", prm.witness.max_samples);
    prm.assume_independent = cfg.get("certify", "assume_independent", false);
    prm.witness.workers = g.workers;
    prm.holonomy = prm.slab.holonomy = holonomy_options(g);
    if (prm.min_pair_k < 1 || prm.pair_count < 1 || prm.retries < 0 || prm.witness.max_samples < 1)
        throw UsageError("certify budgets must be positive");
    return prm;
}

inline std::optional<BasinRaster> raster_for(const Globals& g, const RunConfig& cfg,
                                             const std::optional<int>& w_flag, const std::optional<int>& h_flag,
                                             const std::optional<std::int64_t>& n_flag) {
    const int w = pick(w_flag, cfg, "basins", "width", 128), h = pick(h_flag, cfg, "basins", "height", 128);
    const std::int64_t n = pick(n_flag, cfg, "basins", "n", std::int64_t{10000});
    Thresholds th{cfg.get<real>("basins", "tau0", 0.2L), cfg.get<real>("basins", "tau1", 0.8L)};
    const std::string slice = cfg.get<std::string>("basins", "slice", g.system == "kan-endo" ? "cylinder" : "fixed-x2");
    SliceSpec spec;
    spec.value = cfg.get("basins", "slice_value", 0.0);
    if (slice == "cylinder") spec.kind = SliceKind::cylinder;
    else if (slice == "fixed-x2") spec.kind = SliceKind::fixed_x2;
    else if (slice == "fixed-t") spec.kind = SliceKind::fixed_t;
    else throw UsageError("unknown slice " + slice + " (cylinder, fixed-x2, fixed-t)");
    if (g.system == "kan-endo") {
        if (spec.kind != SliceKind::cylinder) throw UsageError("kan-endo only has the cylinder slice");
        return basin_raster(KanEndomorphism{}, w, h, spec, n, th, g.workers);
    }
    if (spec.kind == SliceKind::cylinder) throw UsageError("the cylinder slice needs --system kan-endo");
    const KanSystem sys = make_system(g, cfg);
    return basin_raster(sys, w, h, spec, n, th, g.workers);
}

inline void print_error(std::ostream& err, std::string_view code, const std::string& message) {
    err << Json{{"error", code}, {"message", message}}.dump() << "\n";
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Kan-type skew products: validation, pairs, holonomy, certificates and basin rasters", "kantran"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--system", g.system, "preset (kan-diffeo, kan-endo) or inline from [system]");
    app.add_option("--config", g.config, "INI configuration file");
    app.add_option("--out", g.out, "output file (default stdout)");
    app.add_option("--seed", g.seed, "seed for drawn boxes");
    app.add_option("--workers", g.workers, "worker threads; results do not depend on it")->check(CLI::Range(1u, 256u));
    app.add_option("--tol", g.tol, "holonomy / chart tolerance")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "check K1-K3 and print the validation report");

    auto* independence = app.add_subcommand("independence", "exact multiplicative independence of two rationals");
    std::string r_text, s_text;
    independence->add_option("--r", r_text, "rational r, e.g. 31/32")->required();
    independence->add_option("--s", s_text, "rational s")->required();

    auto* linearize = app.add_subcommand("linearize", "Sternberg chart of phi_p or phi_q^-1");
    std::optional<std::string> map_flag;
    std::optional<int> grid_flag;
    linearize->add_option("--map", map_flag, "p or q");
    linearize->add_option("--grid", grid_flag, "number of sample points");

    auto* pairs = app.add_subcommand("pairs", "Diophantine pairs (k, l) as CSV");
    std::optional<std::string> alpha_flag, beta_flag;
    std::optional<double> eta_flag, eps_flag;
    std::optional<std::size_t> count_flag;
    std::optional<std::int64_t> kmin_flag, kmax_flag;
    std::optional<bool> improving_flag;
    pairs->add_option("--alpha", alpha_flag, "multiplier in (0,1), rational or decimal");
    pairs->add_option("--beta", beta_flag, "multiplier in (0,1)");
    pairs->add_option("--eta", eta_flag, "target eta > 0");
    pairs->add_option("--eps", eps_flag, "tolerance on |log residual|");
    pairs->add_option("--count", count_flag, "number of pairs");
    pairs->add_option("--k-min", kmin_flag, "first k");
    pairs->add_option("--k-max", kmax_flag, "last k");
    pairs->add_option("--improving", improving_flag, "only strictly improving residuals");

    auto* holonomy = app.add_subcommand("holonomy", "strong stable/unstable holonomy of one point");
    std::optional<double> hx1, hx2, ht, hoff;
    std::optional<std::string> hleaf;
    holonomy->add_option("--x1", hx1);
    holonomy->add_option("--x2", hx2);
    holonomy->add_option("--t", ht);
    holonomy->add_option("--leaf", hleaf, "stable or unstable");
    holonomy->add_option("--offset", hoff, "signed leaf distance to the target");

    auto* certify = app.add_subcommand("certify", "build a transitivity certificate for boxes U, V");

    auto* search = app.add_subcommand("search", "direct search for F^m(U) meeting V, or verify a certificate");
    std::string verify_path;
    std::optional<std::int64_t> mmax_flag;
    search->add_option("--verify", verify_path, "certificate JSON to re-verify");
    search->add_option("--m-max", mmax_flag, "largest m searched");

    auto* basins = app.add_subcommand("basins", "basin raster as PGM (and CSV with --csv)");
    std::optional<int> w_flag, h_flag, depth_flag;
    std::optional<std::int64_t> n_flag;
    std::optional<std::string> csv_flag;
    for (auto* sc : {basins, app.add_subcommand("intermingle", "intermingling report of a basin raster")}) {
        sc->add_option("--width", w_flag);
        sc->add_option("--height", h_flag);
        sc->add_option("--n", n_flag, "orbit length");
    }
    basins->add_option("--csv", csv_flag, "also write cell labels as CSV");
    auto* intermingle = app.get_subcommand("intermingle");
    intermingle->add_option("--depth", depth_flag, "dyadic depth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << e.what() << "\n";
        return 2;
    }

    try {
        const RunConfig cfg = RunConfig::load(g.config);
        if (validate->parsed()) {
            const KanSystem sys = make_system(g, cfg);
            Json j = to_json(sys.validation());
            j["system"] = g.system;
            const auto& fp = sys.base().fixed_points();
            Json pts = Json::array();
            for (const auto& x : fp) pts.push_back(Json::array({x.x1(), x.x2()}));
            j["fixed_points"] = pts;
            j["norm"] = sys.base().norm();
            j["conorm"] = sys.base().conorm();
            emit(g, out, j);
        } else if (independence->parsed()) {
            Rational r, s;
            try {
                r = parse_rational(r_text);
                s = parse_rational(s_text);
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
            const auto v = multiplicative_independence(r, s);
            Output o(g.out, out);
            if (v.dependent) *o << "dependent " << v.witness->first << " " << v.witness->second << "\n";
            else *o << "independent\n";
        } else if (linearize->parsed()) {
            const KanSystem sys = make_system(g, cfg);
            const std::string which = pick(map_flag, cfg, "linearize", "map", std::string("p"));
            const int grid = pick(grid_flag, cfg, "linearize", "grid", 16);
            if (grid < 1) throw UsageError("grid must be positive");
            SternbergOptions so;
            if (g.tol) so.tol = *g.tol;
            const CenterMaps cm = center_maps(sys);
            Json j;
            auto fill = [&](const auto& h) {
                j = {{"map", which},
                     {"alpha", static_cast<double>(h.alpha())},
                     {"delta", static_cast<double>(h.delta())},
                     {"depth", h.depth()},
                     {"residual", static_cast<double>(h.residual())},
                     {"normalization_defect", static_cast<double>(h.normalization_defect())},
                     {"seed", g.seed}};
                Json pts = Json::array();
                for (int i = 0; i <= grid; ++i) {
                    const real t = static_cast<real>(i) / grid;
                    pts.push_back(Json::array({static_cast<double>(t), static_cast<double>(h(t))}));
                }
                j["samples"] = pts;
            };
            if (which == "p") fill(sternberg_linearize(cm.f, so));
            else if (which == "q") fill(sternberg_linearize(cm.g, so));
            else throw UsageError("--map must be p or q");
            emit(g, out, j);
        } else if (pairs->parsed()) {
            auto multiplier = [&](const std::optional<std::string>& flag, const char* key, const char* def) {
                const std::string s = pick(flag, cfg, "pairs", key, std::string(def));
                try {
                    const Rational q = parse_rational(s);
                    return static_cast<real>(HighFloat(boost::multiprecision::numerator(q)) /
                                             HighFloat(boost::multiprecision::denominator(q)));
                } catch (const Error&) {
                    try {
                        return static_cast<real>(std::stold(s));
                    } catch (const std::exception&) {
                        throw UsageError(std::string(key) + " is not a number: " + s);
                    }
                }
            };
            const real a = multiplier(alpha_flag, "alpha", "31/32"), b = multiplier(beta_flag, "beta", "32/33");
            DiophantineOptions opt;
            opt.k_min = pick(kmin_flag, cfg, "pairs", "k_min", std::int64_t{1});
            opt.k_max = pick(kmax_flag, cfg, "pairs", "k_max", std::int64_t{100000});
            opt.improving = pick(improving_flag, cfg, "pairs", "improving", false);
            const auto res = diophantine_pairs(a, b, pick(eta_flag, cfg, "pairs", "eta", 1.0),
                                               pick(eps_flag, cfg, "pairs", "epsilon", 1e-3),
                                               pick(count_flag, cfg, "pairs", "count", std::size_t{10}), opt);
            Output o(g.out, out);
            write_pairs_csv(*o, res.pairs);
        } else if (holonomy->parsed()) {
            const KanSystem sys = make_system(g, cfg);
            const std::string leaf = pick(hleaf, cfg, "holonomy", "leaf", std::string("stable"));
            if (leaf != "stable" && leaf != "unstable") throw UsageError("--leaf must be stable or unstable");
            const StatePoint s{TorusPoint::from_real(pick(hx1, cfg, "holonomy", "x1", 0.5),
                                                     pick(hx2, cfg, "holonomy", "x2", 0.0)),
                               pick(ht, cfg, "holonomy", "t", 0.5)};
            const auto r = strong_holonomy(sys, s, leaf == "stable" ? Leaf::stable : Leaf::unstable,
                                           pick(hoff, cfg, "holonomy", "offset", 0.1), holonomy_options(g));
            Json j = to_json(r);
            j["seed"] = g.seed;
            emit(g, out, j);
        } else if (certify->parsed()) {
            const KanSystem sys = make_system(g, cfg);
            const auto [U, V] = boxes(g, cfg);
            const auto c = build_certificate(sys, U, V, certificate_params(g, cfg), g.system);
            emit(g, out, to_json(c));
        } else if (search->parsed()) {
            const KanSystem sys = make_system(g, cfg);
            WitnessOptions wo;
            wo.workers = g.workers;
            wo.max_samples = cfg.get<std::size_t>("search", "samples", wo.max_samples);
            if (!verify_path.empty()) {
                std::ifstream in(verify_path);
                if (!in) throw UsageError("cannot open " + verify_path);
                TransitivityCertificate c;
                try {
                    c = certificate_from_json(Json::parse(in));
                } catch (const Json::exception& e) {
                    throw UsageError(std::string("malformed certificate: ") + e.what());
                }
                const double res = verify_certificate(sys, c);
                if (res != 0)
                    fail(ErrorCode::verification_failed, "F^m(witness) misses V by " + std::to_string(res));
                emit(g, out, {{"verified", true}, {"m", c.m}, {"image_residual", res}});
            } else {
                const auto [U, V] = boxes(g, cfg);
                const std::int64_t m_max = pick(mmax_flag, cfg, "search", "m_max", std::int64_t{5000});
                const auto r = direct_search(sys, U, V, m_max, wo);
                Json j = {{"U", to_json(U)}, {"V", to_json(V)}, {"m_max", m_max}, {"seed", g.seed}};
                j["found"] = r.has_value();
                if (r) {
                    j["m"] = r->m;
                    j["witness"] = Json::array({r->witness.base.x1(), r->witness.base.x2(),
                                                static_cast<double>(r->witness.t)});
                }
                emit(g, out, j);
            }
        } else if (basins->parsed()) {
            const auto r = raster_for(g, cfg, w_flag, h_flag, n_flag);
            {
                Output o(g.out, out, true);
                write_pgm(*o, *r, g.seed);
            }
            const std::string csv = csv_flag ? *csv_flag : cfg.get<std::string>("basins", "csv", "");
            if (!csv.empty()) {
                Output o(csv, out);
                write_raster_csv(*o, *r);
            }
        } else if (intermingle->parsed()) {
            const auto r = raster_for(g, cfg, w_flag, h_flag, n_flag);
            const int depth = pick(depth_flag, cfg, "basins", "depth", 3);
            Json j = to_json(intermingling_report(*r, depth));
            j["basin0"] = r->fraction(BasinLabel::basin0);
            j["basin1"] = r->fraction(BasinLabel::basin1);
            j["undecided"] = r->fraction(BasinLabel::undecided);
            j["seed"] = g.seed;
            emit(g, out, j);
        }
    } catch (const UsageError& e) {
        err << "usage: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        const std::string what = e.what();
        const std::string prefix = std::string(to_string(e.code())) + ": ";
        print_error(err, to_string(e.code()), what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what);
        return 1;
    }
    return 0;
}

}  // namespace kantran::cli
