#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flows.hpp"

namespace cellcycle {

struct AssumptionCheck {
    std::string name;
    bool passed = false;
    // Advisory checks are reported but do not reject the model.
    bool required = true;
    std::optional<double> witness; // maturity (or value) where the check failed
    std::string detail;
};

struct ValidationReport {
    std::vector<AssumptionCheck> checks;

    bool accepted() const {
        for (const auto& c : checks)
            if (c.required && !c.passed) return false;
        return true;
    }

    const AssumptionCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }

    std::vector<std::string> failed() const {
        std::vector<std::string> out;
        for (const auto& c : checks)
            if (!c.passed) out.push_back(c.name);
        return out;
    }
};

inline nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks) {
        nlohmann::json j = {{"name", c.name}, {"passed", c.passed}, {"required", c.required}, {"detail", c.detail}};
        j["witness"] = c.witness ? nlohmann::json(*c.witness) : nlohmann::json(nullptr);
        checks.push_back(j);
    }
    return {{"accepted", r.accepted()}, {"checks", checks}};
}

struct ValidationOptions {
    std::size_t grid_points = 10000;
    double consistency_tol = 1e-9;
};

/// Checks the model assumptions on a uniform grid of [0, mMax].
///
/// EA2 (non-synchronous growth) is advisory: its failure only weakens the
/// continuous-time stability conclusion and is reported without rejecting.
inline ValidationReport validate(const ModelSpec& spec, const ValidationOptions& opt = {}) {
    if (!(spec.mMax > spec.mP)) throw DomainError("mMax must exceed mP");
    if (!(spec.mP >= 0.0)) throw DomainError("mP must be nonnegative");
    if (!(spec.tau > 0.0)) throw DomainError("tau must be positive");

    const std::size_t n = std::max<std::size_t>(opt.grid_points, 2);
    std::vector<double> grid(n);
    for (std::size_t k = 0; k < n; ++k)
        grid[k] = spec.mMax * static_cast<double>(k) / static_cast<double>(n - 1);

    auto finite = [](const ScalarFn& f, const char* name, double m, bool with_derivative) {
        detail::finite_or_throw(f(m), name, m);
        if (with_derivative) detail::finite_or_throw(f.derivative(m), name, m);
    };
    for (double m : grid) {
        finite(spec.g1, "g1", m, false);
        finite(spec.phi, "phi", m, false);
        if (m >= spec.mP) {
            finite(spec.g2, "g2", m, false);
            finite(spec.h, "h", m, true);
        }
    }

    ValidationReport report;
    auto add = [&report](std::string name, bool required, std::optional<double> witness, std::string detail) {
        report.checks.push_back({std::move(name), !witness.has_value(), required, witness, std::move(detail)});
    };
    auto first_failure = [&grid](auto&& pred, double from, bool open_left) -> std::optional<double> {
        for (double m : grid) {
            if (m < from || (open_left && m == from)) continue;
            if (!pred(m)) return m;
        }
        return std::nullopt;
    };

    {
        std::optional<double> w;
        for (double m : grid) {
            const bool ok = m <= spec.mP ? spec.phi(m) == 0.0 : spec.phi(m) > 0.0;
            if (!ok) {
                w = m;
                break;
            }
        }
        add("M1", true, w, "phi = 0 on [0, mP] and phi > 0 on (mP, mMax]");
    }
    add("M2", true, first_failure([&](double m) { return spec.h.derivative(m) > 0.0; }, spec.mP, false),
        "h' > 0 on [mP, mMax]");
    {
        auto w = first_failure([&](double m) { return spec.g1(m) > 0.0; }, 0.0, false);
        if (!w) w = first_failure([&](double m) { return spec.g2(m) > 0.0; }, spec.mP, false);
        add("M3", true, w, "g1 > 0 on [0, mMax] and g2 > 0 on [mP, mMax]");
    }

    std::optional<FlowSolver> solver;
    try {
        solver.emplace(spec);
    } catch (const Error& e) {
        add("flows", true, spec.mP, std::string("flow construction failed: ") + e.what());
        return report;
    }

    {
        const double q = solver->hazard_Q(spec.mMax);
        add("M4", true, q >= spec.m4_threshold ? std::nullopt : std::optional<double>(q),
            "Q(mMax) >= " + std::to_string(spec.m4_threshold) + " (Q(mMax) = " + std::to_string(q) + ")");
    }
    {
        std::optional<double> w;
        double v = 0.0;
        try {
            v = spec.h(solver->flow(Phase::Proliferating, spec.tau, spec.mP));
            if (!(std::abs(v) <= opt.consistency_tol)) w = v;
        } catch (const Error&) {
            w = spec.mP;
        }
        add("consistency", true, w, "h(pi_2(tau, mP)) = 0 (value " + std::to_string(v) + ")");
    }
    add("EA1", true,
        first_failure([&](double m) { return solver->psi(m) < m; }, spec.mP, true),
        "psi(m) < m on (mP, mMax]");
    {
        double scale = 0.0;
        bool nonzero = false;
        for (double m : grid) {
            if (m < spec.mP) continue;
            const double end = solver->flow(Phase::Proliferating, spec.tau, m);
            const double lhs = spec.h.derivative(end) * spec.g2(end) * spec.g1(m);
            const double rhs = spec.g1(spec.h(end)) * spec.g2(m);
            scale = std::max({scale, std::abs(lhs), std::abs(rhs)});
            if (std::abs(lhs - rhs) > 1e-12 * std::max(1.0, std::max(std::abs(lhs), std::abs(rhs)))) {
                nonzero = true;
                break;
            }
        }
        add("EA2", false, nonzero ? std::nullopt : std::optional<double>(spec.mP),
            nonzero ? "growth is not synchronous"
                    : "h'(pi_2)g2(pi_2)g1(m) = g1(h(pi_2))g2(m) on the whole grid: synchronous growth");
    }
    return report;
}

} // namespace cellcycle
