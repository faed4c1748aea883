#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "errors.hpp"
#include "scalar_fn.hpp"

namespace cellcycle {

/// The five model ingredients plus the numerical domain.
///
/// g1, g2: maturation velocities in the resting and proliferating phase.
/// phi: rate of entering the proliferating phase; zero up to mP.
/// h: maturity of a daughter as a function of the mother's maturity at division.
/// tau: duration of the proliferating phase.
/// mMax: right end of the numerical maturity domain [0, mMax].
struct ModelSpec {
    ScalarFn g1 = ScalarFn::constant(1.0);
    ScalarFn g2 = ScalarFn::constant(1.0);
    ScalarFn phi;
    ScalarFn h;
    double tau = 1.0;
    double mP = 0.0;
    double mMax = 1.0;

    // Q(mMax) must reach this value; finite stand-in for Q(m) -> infinity.
    double m4_threshold = 50.0;
    // Declared properties of phi used by the continuous-time classifier.
    bool phi_bounded = false;
    bool phi_eventually_positive = false;

    bool operator==(const ModelSpec&) const = default;
};

namespace detail {

inline int line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

inline double require_number(const nlohmann::json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key))
        throw ParseError(where + ": missing field '" + key + "'");
    const auto& v = obj.at(key);
    if (!v.is_number())
        throw ParseError(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

inline double optional_number(const nlohmann::json& obj, const std::string& key, double fallback,
                              const std::string& where) {
    if (!obj.contains(key)) return fallback;
    return require_number(obj, key, where);
}

inline std::vector<double> require_array(const nlohmann::json& obj, const std::string& key,
                                         const std::string& where) {
    if (!obj.contains(key) || !obj.at(key).is_array())
        throw ParseError(where + ": field '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& v : obj.at(key)) {
        if (!v.is_number()) throw ParseError(where + ": field '" + key + "' must contain numbers only");
        out.push_back(v.get<double>());
    }
    return out;
}

inline std::string allowed_families() {
    std::string s;
    for (const char* name : ScalarFn::family_names) {
        if (!s.empty()) s += ", ";
        s += name;
    }
    return s;
}

} // namespace detail

inline nlohmann::json to_json(const ScalarFn& f) {
    using nlohmann::json;
    json params = json::object();
    std::visit(
        [&params](const auto& form) {
            using T = std::decay_t<decltype(form)>;
            if constexpr (std::is_same_v<T, fn::Constant>) {
                params["c"] = form.c;
            } else if constexpr (std::is_same_v<T, fn::Linear>) {
                params["a"] = form.a;
                params["b"] = form.b;
            } else if constexpr (std::is_same_v<T, fn::PowerLaw>) {
                params["a"] = form.a;
                params["p"] = form.p;
                params["b"] = form.b;
                params["shift"] = form.shift;
            } else if constexpr (std::is_same_v<T, fn::HillRate>) {
                params["a"] = form.a;
                params["p"] = form.p;
                params["K"] = form.K;
                params["shift"] = form.shift;
            } else if constexpr (std::is_same_v<T, fn::PiecewiseLinear>) {
                json knots = json::array();
                for (const auto& [x, y] : form.knots) knots.push_back({x, y});
                params["knots"] = knots;
            } else {
                params["shift"] = form.shift;
                params["x"] = form.x;
                params["y"] = form.y;
            }
        },
        f.form());
    return {{"family", f.family()}, {"params", params}};
}

inline ScalarFn scalar_fn_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("family") || !j.at("family").is_string())
        throw ParseError(where + ": expected an object with a string field 'family'");
    const std::string family = j.at("family").get<std::string>();
    const nlohmann::json params = j.contains("params") ? j.at("params") : nlohmann::json::object();
    const std::string at = where + ".params";
    try {
        if (family == "Constant") return ScalarFn(fn::Constant{detail::require_number(params, "c", at)});
        if (family == "Linear")
            return ScalarFn(fn::Linear{detail::require_number(params, "a", at), detail::require_number(params, "b", at)});
        if (family == "PowerLaw")
            return ScalarFn(fn::PowerLaw{detail::require_number(params, "a", at), detail::require_number(params, "p", at),
                                         detail::optional_number(params, "b", 0.0, at),
                                         detail::optional_number(params, "shift", 0.0, at)});
        if (family == "HillRate")
            return ScalarFn(fn::HillRate{detail::require_number(params, "a", at), detail::require_number(params, "p", at),
                                         detail::require_number(params, "K", at),
                                         detail::optional_number(params, "shift", 0.0, at)});
        if (family == "PiecewiseLinear") {
            if (!params.contains("knots") || !params.at("knots").is_array())
                throw ParseError(at + ": field 'knots' must be an array of [x, y] pairs");
            fn::PiecewiseLinear pl;
            for (const auto& kn : params.at("knots")) {
                if (!kn.is_array() || kn.size() != 2 || !kn[0].is_number() || !kn[1].is_number())
                    throw ParseError(at + ": each knot must be a pair [x, y]");
                pl.knots.emplace_back(kn[0].get<double>(), kn[1].get<double>());
            }
            return ScalarFn(std::move(pl));
        }
        if (family == "ShiftedTable")
            return ScalarFn(fn::ShiftedTable{detail::optional_number(params, "shift", 0.0, at),
                                             detail::require_array(params, "x", at),
                                             detail::require_array(params, "y", at)});
    } catch (const DomainError& e) {
        throw ParseError(where + ": " + e.what());
    }
    throw ParseError(where + ": unknown family '" + family + "'; allowed families: " + detail::allowed_families());
}

inline nlohmann::json to_json(const ModelSpec& s) {
    return {{"g1", to_json(s.g1)},
            {"g2", to_json(s.g2)},
            {"phi", to_json(s.phi)},
            {"h", to_json(s.h)},
            {"tau", s.tau},
            {"mP", s.mP},
            {"mMax", s.mMax},
            {"m4Threshold", s.m4_threshold},
            {"phiBounded", s.phi_bounded},
            {"phiEventuallyPositive", s.phi_eventually_positive}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("model: top level must be a JSON object");
    ModelSpec s;
    for (const char* key : {"g1", "g2", "phi", "h"})
        if (!j.contains(key)) throw ParseError(std::string("model: missing field '") + key + "'");
    s.g1 = scalar_fn_from_json(j.at("g1"), "g1");
    s.g2 = scalar_fn_from_json(j.at("g2"), "g2");
    s.phi = scalar_fn_from_json(j.at("phi"), "phi");
    s.h = scalar_fn_from_json(j.at("h"), "h");
    s.tau = detail::require_number(j, "tau", "model");
    s.mP = detail::require_number(j, "mP", "model");
    s.mMax = detail::require_number(j, "mMax", "model");
    s.m4_threshold = detail::optional_number(j, "m4Threshold", 50.0, "model");
    for (auto [key, target] : {std::pair{"phiBounded", &s.phi_bounded},
                               std::pair{"phiEventuallyPositive", &s.phi_eventually_positive}}) {
        if (!j.contains(key)) continue;
        if (!j.at(key).is_boolean()) throw ParseError(std::string("model: field '") + key + "' must be a boolean");
        *target = j.at(key).get<bool>();
    }
    return s;
}

inline ModelSpec parse_spec(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("model: syntax error at line " + std::to_string(detail::line_of_offset(text, e.byte)) +
                         ": " + e.what());
    }
    return spec_from_json(j);
}

inline ModelSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_spec(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void save_spec(const ModelSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model file '" + path + "'");
    out << to_json(spec).dump(2) << '\n';
}

} // namespace cellcycle
