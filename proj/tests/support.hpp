#pragma once

// Oracles and fixtures shared by the test programs. Everything here is
// computed without the library's numerics: closed forms, plain bisection,
// composite Simpson.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <cellcycle.hpp>

namespace oracle {

/// Root of 1 - b = e^{-2b} in (0, 1) by bisection.
inline double beta(double tol = 1e-12) {
    double lo = 0.5, hi = 0.99; // F(lo) > 0 > F(hi)
    auto F = [](double b) { return 1.0 - b - std::exp(-2.0 * b); };
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (F(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double fixed_point(double m) {
    static const double b = beta();
    return m < 0.0 ? 0.0 : b * std::exp(-b * m);
}

inline double exp_cdf(double x) { return x <= 0.0 ? 0.0 : -std::expm1(-x); }

inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k) s += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Mass of each bin [k w, (k + 1) w).
inline std::vector<double> bin_masses(const std::function<double(double)>& f, double w, std::size_t bins) {
    std::vector<double> out(bins);
    for (std::size_t k = 0; k < bins; ++k) out[k] = simpson(f, k * w, (k + 1) * w, 16);
    return out;
}

inline double histogram_l1(const std::vector<double>& samples, std::size_t n_total,
                           const std::function<double(double)>& f, double w, std::size_t bins) {
    std::vector<double> emp(bins, 0.0);
    for (double x : samples) {
        const auto k = static_cast<std::size_t>(x / w);
        if (x >= 0.0 && k < bins) emp[k] += 1.0 / static_cast<double>(n_total);
    }
    const auto ref = bin_masses(f, w, bins);
    double s = 0.0;
    for (std::size_t k = 0; k < bins; ++k) s += std::abs(emp[k] - ref[k]);
    return s;
}

} // namespace oracle

namespace fixture {

using namespace cellcycle;

/// g1 = g2 = 1, tau = 1, h(m) = m - 3, mP = 2, phi = 1 on (2, inf).
inline ModelSpec unit_model(double m_max = 52.0) {
    ModelSpec s;
    s.g1 = ScalarFn::constant(1.0);
    s.g2 = ScalarFn::constant(1.0);
    s.phi = ScalarFn(fn::PiecewiseLinear{{{2.0, 0.0}, {2.0, 1.0}}});
    s.h = ScalarFn::linear(1.0, -3.0);
    s.tau = 1.0;
    s.mP = 2.0;
    s.mMax = m_max;
    s.phi_bounded = true;
    s.phi_eventually_positive = true;
    return s;
}

/// Same growth with a smooth Hill rate switching on at mP = 2.
inline ModelSpec hill_model() {
    ModelSpec s = unit_model();
    s.phi = ScalarFn(fn::HillRate{2.0, 2.0, 1.0, 2.0});
    return s;
}

/// Phi = 1/4 above mP: alpha = 1/2 on the tail, P sweeps.
inline ModelSpec sweeping_model() {
    ModelSpec s = unit_model(240.0);
    s.phi = ScalarFn(fn::PiecewiseLinear{{{2.0, 0.0}, {2.0, 0.25}}});
    s.phi_eventually_positive = false;
    return s;
}

/// Nonlinear proliferating growth g2 = sqrt(m) + 1, so psi is nonlinear;
/// h shifts so that h(pi_2(tau, mP)) = 0.
inline ModelSpec curved_model() {
    ModelSpec s;
    s.g1 = ScalarFn::linear(0.05, 1.0);
    s.g2 = ScalarFn(fn::PowerLaw{1.0, 0.5, 1.0, 0.0});
    s.phi = ScalarFn(fn::HillRate{3.0, 1.5, 1.0, 1.0});
    s.tau = 0.7;
    s.mP = 1.0;
    s.mMax = 40.0;
    s.h = ScalarFn::linear(0.5, 0.0);
    const FlowSolver probe(s);
    const double end = probe.flow(Phase::Proliferating, s.tau, s.mP);
    s.h = ScalarFn::linear(0.5, -0.5 * end);
    s.phi_bounded = true;
    s.phi_eventually_positive = true;
    return s;
}

/// Random specs from every family, kept only when validate accepts them.
/// Deterministic for a given seed.
inline std::vector<ModelSpec> random_accepted_specs(std::size_t count, std::uint64_t seed = 7) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto u = [&](double a, double b) { return a + (b - a) * U(gen); };
    std::vector<ModelSpec> out;
    for (int attempt = 0; out.size() < count && attempt < 1000; ++attempt) {
        ModelSpec s;
        s.mP = u(0.5, 3.0);
        s.tau = u(0.4, 1.5);
        s.mMax = u(40.0, 60.0);
        switch (gen() % 3) {
        case 0: s.g1 = ScalarFn::constant(u(0.5, 2.0)); break;
        case 1: s.g1 = ScalarFn::linear(u(0.0, 0.1), u(0.5, 1.5)); break;
        default: s.g1 = ScalarFn(fn::PowerLaw{u(0.1, 0.5), u(0.3, 0.9), u(0.5, 1.5), 0.0}); break;
        }
        switch (gen() % 3) {
        case 0: s.g2 = ScalarFn::constant(u(0.5, 2.0)); break;
        case 1: s.g2 = ScalarFn::linear(u(0.0, 0.2), u(0.5, 1.5)); break;
        default: s.g2 = ScalarFn(fn::PowerLaw{u(0.2, 1.0), u(0.3, 0.8), u(0.5, 1.5), 0.0}); break;
        }
        const double v = u(1.0, 4.0);
        switch (gen() % 4) {
        case 0: s.phi = ScalarFn(fn::PiecewiseLinear{{{s.mP, 0.0}, {s.mP, v}}}); break;
        case 1: s.phi = ScalarFn(fn::PiecewiseLinear{{{s.mP, 0.0}, {s.mP + u(0.2, 2.0), v}}}); break;
        case 2: s.phi = ScalarFn(fn::HillRate{v, u(1.0, 3.0), u(0.3, 2.0), s.mP}); break;
        default: s.phi = ScalarFn(fn::PowerLaw{u(0.5, 2.0), u(0.5, 1.0), 0.0, s.mP}); break;
        }
        s.h = ScalarFn::linear(1.0, 0.0);
        double end;
        try {
            end = FlowSolver(s).flow(Phase::Proliferating, s.tau, s.mP);
        } catch (const Error&) {
            continue;
        }
        const double a = u(0.3, 0.9);
        s.h = ScalarFn::linear(a, -a * end);
        s.phi_bounded = true;
        try {
            if (validate(s).accepted()) out.push_back(s);
        } catch (const Error&) {
        }
    }
    return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("cellcycle_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace fixture
