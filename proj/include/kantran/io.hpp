#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "basins.hpp"
#include "skew_product.hpp"
#include "transitivity.hpp"

namespace kantran {

using Json = nlohmann::json;

// Sorted keys (nlohmann objects are std::map) and %.17g for every float, so equal
// values always print to equal bytes.
inline void write_json(std::ostream& os, const Json& j, int indent = 2, int level = 0) {
    const std::string pad(static_cast<std::size_t>(indent) * (level + 1), ' ');
    const std::string close(static_cast<std::size_t>(indent) * level, ' ');
    switch (j.type()) {
    case Json::value_t::object: {
        if (j.empty()) {
            os << "{}";
            return;
        }
        os << "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) os << ",\n";
            first = false;
            os << pad << Json(it.key()).dump() << ": ";
            write_json(os, it.value(), indent, level + 1);
        }
        os << "\n" << close << "}";
        return;
    }
    case Json::value_t::array: {
        if (j.empty()) {
            os << "[]";
            return;
        }
        // flat numeric arrays stay on one line
        bool flat = true;
        for (const auto& v : j) flat = flat && v.is_primitive();
        os << (flat ? "[" : "[\n");
        bool first = true;
        for (const auto& v : j) {
            if (!first) os << (flat ? ", " : ",\n");
            first = false;
            if (!flat) os << pad;
            write_json(os, v, indent, level + 1);
        }
        os << (flat ? "]" : "\n" + close + "]");
        return;
    }
    case Json::value_t::number_float: {
        const double v = j.get<double>();
        if (!std::isfinite(v)) {
            os << "null";
            return;
        }
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
        return;
    }
    default: os << j.dump();
    }
}

inline std::string to_json_string(const Json& j) {
    std::ostringstream os;
    write_json(os, j);
    os << "\n";
    return os.str();
}

inline Json to_json(const Interval& v) { return Json::array({static_cast<double>(v.lo), static_cast<double>(v.hi)}); }

inline Json to_json(const ValidationReport& r) {
    return {{"k1", r.k1_pass},
            {"k2", r.k2_pass},
            {"k3", r.k3_pass},
            {"lambda", r.lambda},
            {"gamma", r.gamma},
            {"derivative_range", to_json(r.derivative_range)},
            {"p_kind", std::string(to_string(r.p_kind))},
            {"q_kind", std::string(to_string(r.q_kind))},
            {"x_lipschitz", r.x_lipschitz},
            {"base_grid", r.base_grid},
            {"fiber_grid", r.fiber_grid}};
}

inline Json to_json(const Box& b) {
    return {{"center", Json::array({b.center.x1(), b.center.x2()})},
            {"side_s", b.side_s},
            {"side_u", b.side_u},
            {"t", to_json(b.t)}};
}

inline Box box_from_json(const Json& j) {
    const auto& c = j.at("center");
    const auto& t = j.at("t");
    return Box::make(c.at(0).get<double>(), c.at(1).get<double>(), j.at("side_s").get<double>(),
                     j.at("side_u").get<double>(), t.at(0).get<double>(), t.at(1).get<double>());
}

inline Json to_json(const DistortionDiagnostics& d) {
    return {{"D1", static_cast<double>(d.D1)},
            {"D2", static_cast<double>(d.D2)},
            {"R1", static_cast<double>(d.R1)},
            {"R2", static_cast<double>(d.R2)},
            {"Q", static_cast<double>(d.Q_est)},
            {"rho", static_cast<double>(d.rho_used)},
            {"lambda", d.lambda},
            {"gamma", d.gamma},
            {"dominance_n", d.dominance_n ? Json(*d.dominance_n) : Json(nullptr)}};
}

inline Json to_json(const TransitivityCertificate& c) {
    return {{"system", c.system},
            {"U", to_json(c.U)},
            {"V", to_json(c.V)},
            {"k0s", c.k0s},
            {"l0u", c.l0u},
            {"kn", c.kn},
            {"ln", c.ln},
            {"m", c.m},
            {"witness", Json::array({c.witness.base.x1(), c.witness.base.x2(), static_cast<double>(c.witness.t)})},
            {"image_residual", c.image_residual},
            {"diagnostics", to_json(c.diagnostics)}};
}

// Enough of a certificate to re-verify it; stage data is not serialised.
inline TransitivityCertificate certificate_from_json(const Json& j) {
    TransitivityCertificate c;
    c.system = j.at("system").get<std::string>();
    c.U = box_from_json(j.at("U"));
    c.V = box_from_json(j.at("V"));
    c.k0s = j.at("k0s").get<int>();
    c.l0u = j.at("l0u").get<int>();
    c.kn = j.at("kn").get<std::int64_t>();
    c.ln = j.at("ln").get<std::int64_t>();
    c.m = j.at("m").get<std::int64_t>();
    const auto& w = j.at("witness");
    c.witness = {TorusPoint::from_real(w.at(0).get<double>(), w.at(1).get<double>()), w.at(2).get<double>()};
    c.image_residual = j.at("image_residual").get<double>();
    const auto& d = j.at("diagnostics");
    auto num = [&](const char* k) -> real { return d.at(k).is_null() ? 0 : d.at(k).get<double>(); };
    c.diagnostics.D1 = num("D1");
    c.diagnostics.D2 = num("D2");
    c.diagnostics.R1 = num("R1");
    c.diagnostics.R2 = num("R2");
    c.diagnostics.Q_est = num("Q");
    c.diagnostics.rho_used = num("rho");
    c.diagnostics.lambda = static_cast<double>(num("lambda"));
    c.diagnostics.gamma = static_cast<double>(num("gamma"));
    if (!d.at("dominance_n").is_null()) c.diagnostics.dominance_n = d.at("dominance_n").get<std::size_t>();
    return c;
}

inline Json to_json(const HolonomyResult& r) {
    return {{"source", Json::array({r.source.base.x1(), r.source.base.x2(), static_cast<double>(r.source.t)})},
            {"target_base", Json::array({r.target_base.x1(), r.target_base.x2()})},
            {"leaf", std::string(to_string(r.leaf))},
            {"offset", r.offset},
            {"t_prime", static_cast<double>(r.t_prime)},
            {"depth", r.depth},
            {"error_bound", static_cast<double>(r.error_bound)},
            {"residual", static_cast<double>(r.residual)}};
}

inline Json to_json(const InterminglingReport& rep) {
    Json boxes = Json::array();
    for (const auto& b : rep.per_box_fractions)
        boxes.push_back({{"depth", b.depth}, {"bx", b.bx}, {"by", b.by}, {"basin0", b.frac0}, {"basin1", b.frac1},
                         {"undecided", b.frac_undecided}});
    return {{"depth", rep.depth}, {"min_fraction", rep.min_fraction}, {"per_box_fractions", boxes}};
}

inline void write_pairs_csv(std::ostream& os, const std::vector<DiophantinePair>& pairs) {
    os << "k,l,residual,eta_star\n";
    char buf[96];
    for (const auto& p : pairs) {
        std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g\n", static_cast<long long>(p.k),
                      static_cast<long long>(p.l), static_cast<double>(p.residual), static_cast<double>(p.eta_star));
        os << buf;
    }
}

inline void write_raster_csv(std::ostream& os, const BasinRaster& r) {
    os << "x1,x2_or_t,label,avg_t\n";
    char buf[128];
    for (int j = 0; j < r.grid_h; ++j)
        for (int i = 0; i < r.grid_w; ++i) {
            const std::size_t c = static_cast<std::size_t>(j) * r.grid_w + i;
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%s,%.17g\n", BasinRaster::center(i, r.grid_w),
                          BasinRaster::center(j, r.grid_h), std::string(to_string(r.labels[c])).c_str(),
                          static_cast<double>(r.averages[c]));
            os << buf;
        }
}

}  // namespace kantran
