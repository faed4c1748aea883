#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "errors.hpp"
#include "model_spec.hpp"

namespace cellcycle {

enum class Phase { Resting = 1, Proliferating = 2 };

namespace detail {

inline double finite_or_throw(double v, const char* what, double at) {
    if (!std::isfinite(v))
        throw NonFiniteEvaluation(std::string(what) + " is not finite at m=" + std::to_string(at));
    return v;
}

inline double gk_integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    if (b <= a) return 0.0;
    // Integrate over [0, 1]: boost compares its unscaled error estimate
    // (floor 2 eps |I| / (b - a)) with a scaled tolerance, so short intervals
    // would otherwise refine to the depth limit. Passing a lambda also keeps
    // boost from copying a std::function that may own large tables.
    const double w = b - a;
    auto unit = [&f, a, w](double u) { return w * f(a + w * u); };
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(unit, 0.0, 1.0, 12, tol);
}

} // namespace detail

/// Running integral C(m) = int_lo^m f(r) dr of a nonnegative integrand,
/// tabulated at cell boundaries that include every breakpoint of f.
///
/// Within a cell the integrand is smooth; when it is known to be linear on
/// each cell the value and its inverse are evaluated in closed form.
class CumulativeIntegral {
public:
    CumulativeIntegral() = default;

    CumulativeIntegral(std::function<double(double)> integrand, double lo, double hi,
                       std::vector<double> breaks, std::size_t cells, double tol, bool linear_cells)
        : f_(std::move(integrand)), tol_(tol), linear_(linear_cells) {
        nodes_.reserve(cells + breaks.size() + 1);
        for (std::size_t k = 0; k <= cells; ++k)
            nodes_.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(cells));
        for (double b : breaks)
            if (b > lo && b < hi) nodes_.push_back(b);
        std::sort(nodes_.begin(), nodes_.end());
        const double eps = 1e-13 * std::max(1.0, std::abs(hi));
        nodes_.erase(std::unique(nodes_.begin(), nodes_.end(), [eps](double a, double b) { return b - a < eps; }),
                     nodes_.end());
        nodes_.back() = hi;

        cum_.assign(nodes_.size(), 0.0);
        if (linear_) {
            mid_.resize(nodes_.size() - 1);
            slope_.resize(nodes_.size() - 1);
        }
        for (std::size_t k = 0; k + 1 < nodes_.size(); ++k) {
            const double a = nodes_[k], b = nodes_[k + 1];
            double piece;
            if (linear_) {
                // sample inside the cell so that jumps at its ends are irrelevant
                const double fa = f_(a + 0.25 * (b - a));
                const double fb = f_(a + 0.75 * (b - a));
                detail::finite_or_throw(fa, "integrand", a);
                detail::finite_or_throw(fb, "integrand", b);
                slope_[k] = (fb - fa) / (0.5 * (b - a));
                mid_[k] = 0.5 * (fa + fb);
                piece = mid_[k] * (b - a);
            } else {
                piece = detail::gk_integrate(f_, a, b, tol_);
            }
            cum_[k + 1] = cum_[k] + detail::finite_or_throw(piece, "integral", b);
        }
    }

    double lower() const { return nodes_.front(); }
    double upper() const { return nodes_.back(); }
    double total() const { return cum_.back(); }
    double integrand(double m) const { return f_(m); }

    double operator()(double m) const {
        if (m <= nodes_.front()) return 0.0;
        if (m >= nodes_.back())
            return cum_.back() + detail::gk_integrate(f_, nodes_.back(), m, tol_);
        const std::size_t k = cell_of(m);
        return cum_[k] + within(k, m);
    }

    /// Least m with C(m) = q. RangeError when q exceeds the tabulated total.
    double inverse(double q) const {
        if (q <= 0.0) return nodes_.front();
        if (q > cum_.back()) throw RangeError("cumulative integral: value beyond tabulated range");
        // first node whose cumulative value reaches q
        auto it = std::lower_bound(cum_.begin(), cum_.end(), q);
        const std::size_t k = static_cast<std::size_t>(it - cum_.begin()) - 1;
        const double a = nodes_[k], b = nodes_[k + 1];
        const double d = q - cum_[k];
        if (linear_) {
            const double half = 0.5 * (b - a);
            const double s = slope_[k];
            const double f0 = mid_[k] - s * half; // line value at a
            double u;
            if (std::abs(s) * (b - a) <= 1e-14 * std::abs(f0)) {
                u = d / f0;
            } else {
                const double disc = std::max(f0 * f0 + 2.0 * s * d, 0.0);
                u = 2.0 * d / (f0 + std::sqrt(disc));
            }
            return std::clamp(a + u, a, b);
        }
        auto g = [&](double x) { return within(k, x) - d; };
        if (g(b) <= 0.0) return b;
        boost::math::tools::eps_tolerance<double> stop(50);
        std::uintmax_t iters = 100;
        auto [l, r] = boost::math::tools::toms748_solve(g, a, b, -d, g(b), stop, iters);
        return 0.5 * (l + r);
    }

private:
    std::function<double(double)> f_;
    std::vector<double> nodes_;
    std::vector<double> cum_;
    std::vector<double> mid_;
    std::vector<double> slope_;
    double tol_ = 1e-10;
    bool linear_ = false;

    std::size_t cell_of(double m) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), m);
        return static_cast<std::size_t>(it - nodes_.begin()) - 1;
    }

    double within(std::size_t k, double m) const {
        const double a = nodes_[k];
        if (linear_) {
            const double half = 0.5 * (nodes_[k + 1] - a);
            const double f0 = mid_[k] - slope_[k] * half;
            const double u = m - a;
            return u * (f0 + 0.5 * slope_[k] * u);
        }
        return detail::gk_integrate(f_, a, m, tol_);
    }
};

struct FlowTolerances {
    double ode = 1e-12; // psi o lambda = id is checked to 1e-10
    double quad = 1e-10;
    double root = 1e-12;
};

/// Deterministic part of the model: the maturation flows, the cumulative
/// hazard Q(m) = int_0^m phi/g1, the daughter map psi(m) = h(pi_2(tau, m))
/// and its inverse lambda.
///
/// Immutable after construction; all members are const and reentrant.
class FlowSolver {
public:
    explicit FlowSolver(ModelSpec spec, FlowTolerances tol = {}) : spec_(std::move(spec)), tol_(tol) {
        if (!(tol_.ode > 0.0 && tol_.quad > 0.0 && tol_.root > 0.0))
            throw DomainError("flow tolerances must be positive");
        if (!(spec_.mMax > spec_.mP)) throw DomainError("mMax must exceed mP");
        if (!(spec_.tau > 0.0)) throw DomainError("tau must be positive");

        // Q is needed beyond mMax: kernel rows look up Q(lambda(m)) for m up to mMax.
        double upper = 2.0 * spec_.mMax;
        try {
            upper = std::max(spec_.mMax, lambda_fn(spec_.mMax));
        } catch (const Error&) {
        }
        q_upper_ = upper * 1.0001 + 1e-9;

        const auto& g1 = spec_.g1;
        const auto& phi = spec_.phi;
        const bool linear_q = g1.is<fn::Constant>() &&
                              (phi.is<fn::Constant>() || phi.is<fn::Linear>() || phi.is<fn::PiecewiseLinear>());
        std::vector<double> breaks = phi.breakpoints();
        for (double b : g1.breakpoints()) breaks.push_back(b);
        breaks.push_back(spec_.mP);
        breaks.push_back(spec_.mMax);

        Q_ = CumulativeIntegral(
            [g1, phi](double r) {
                const double v = phi(r) / g1(r);
                return v;
            },
            0.0, q_upper_, breaks, 4096, tol_.quad, linear_q);
        if (!g1.is<fn::Constant>() && !g1.is<fn::Linear>()) {
            travel_ = CumulativeIntegral([g1](double r) { return 1.0 / g1(r); }, 0.0, q_upper_, g1.breakpoints(),
                                         4096, tol_.quad, false);
            has_travel_ = true;
        }
    }

    const ModelSpec& spec() const { return spec_; }
    const FlowTolerances& tolerances() const { return tol_; }

    const ScalarFn& velocity(Phase i) const { return i == Phase::Resting ? spec_.g1 : spec_.g2; }
    double lower_bound(Phase i) const { return i == Phase::Resting ? 0.0 : spec_.mP; }

    /// pi_i(t, m0): solution of m' = g_i(m), m(0) = m0, for signed t.
    /// Backward flows that would cross 0 (resting) or mP (proliferating)
    /// raise DomainExit.
    double flow(Phase i, double t, double m0) const {
        if (t == 0.0) return m0;
        const ScalarFn& g = velocity(i);
        const double lo = lower_bound(i);
        double m;
        if (g.is<fn::Constant>()) {
            m = m0 + g.as<fn::Constant>().c * t;
        } else if (g.is<fn::Linear>()) {
            const auto& L = g.as<fn::Linear>();
            m = L.a == 0.0 ? m0 + L.b * t : m0 + (L.a * m0 + L.b) * std::expm1(L.a * t) / L.a;
        } else if (i == Phase::Resting && has_travel_ && m0 >= 0.0 && m0 <= travel_.upper()) {
            // invert the tabulated travel time, consistent with resting_travel_time
            const double target = travel_(m0) + t;
            if (target < 0.0) {
                m = -1.0;
            } else if (target <= travel_.total()) {
                m = travel_.inverse(target);
            } else {
                m = integrate_flow(g, t - (travel_.total() - travel_(m0)), travel_.upper(), lo);
            }
        } else {
            m = integrate_flow(g, t, m0, lo);
        }
        if (t < 0.0 && m < lo - 1e-9 * std::max(1.0, std::abs(lo)))
            throw DomainExit("backward flow of phase " + std::to_string(static_cast<int>(i)) + " from m=" +
                             std::to_string(m0) + " leaves the state space before time " + std::to_string(-t));
        return m;
    }

    double hazard_Q(double m) const { return m <= 0.0 ? 0.0 : Q_(m); }
    /// Right derivative of Q: at a jump of phi the value just above it.
    double hazard_Q_prime(double m) const { return Q_.integrand(std::nextafter(m, INFINITY)); }

    /// Least maturity m with Q(m) = q, for 0 <= q <= Q(mMax).
    double hazard_Q_inverse(double q) const {
        if (q < 0.0) throw RangeError("hazard_Q_inverse: negative argument");
        if (q > hazard_Q(spec_.mMax))
            throw RangeError("hazard_Q_inverse: q exceeds Q(mMax); the sample leaves the numerical domain");
        return Q_.inverse(q);
    }

    /// Time needed by the resting-phase flow to go from m0 to m1 >= m0.
    double resting_travel_time(double m0, double m1) const {
        const ScalarFn& g = spec_.g1;
        if (g.is<fn::Constant>()) return (m1 - m0) / g.as<fn::Constant>().c;
        if (g.is<fn::Linear>()) {
            const auto& L = g.as<fn::Linear>();
            if (L.a == 0.0) return (m1 - m0) / L.b;
            return std::log((L.a * m1 + L.b) / (L.a * m0 + L.b)) / L.a;
        }
        return travel_(m1) - travel_(m0);
    }

    double h_inverse(double m) const {
        const ScalarFn& h = spec_.h;
        if (h.is<fn::Linear>()) {
            const auto& L = h.as<fn::Linear>();
            if (L.a == 0.0) throw DomainError("h is constant and cannot be inverted");
            return (m - L.b) / L.a;
        }
        const double lo = spec_.mP;
        const double h_lo = h(lo);
        if (m <= h_lo) {
            if (m >= h_lo - tol_.root) return lo;
            throw RangeError("h_inverse: value below h(mP)");
        }
        double hi = std::max(2.0 * lo, lo + 1.0);
        int guard = 0;
        while (h(hi) < m) {
            hi = lo + 2.0 * (hi - lo);
            if (++guard > 200) throw RangeError("h_inverse: no preimage found");
        }
        auto g = [&](double x) { return h(x) - m; };
        boost::math::tools::eps_tolerance<double> stop(50);
        std::uintmax_t iters = 200;
        auto [l, r] = boost::math::tools::toms748_solve(g, lo, hi, h_lo - m, h(hi) - m, stop, iters);
        return 0.5 * (l + r);
    }

    /// Daughter's initial maturity when the mother enters proliferation at m.
    double psi(double m) const {
        if (m < spec_.mP - 1e-9) throw RangeError("psi: maturity below mP");
        return spec_.h(flow(Phase::Proliferating, spec_.tau, m));
    }

    double psi_prime(double m) const {
        const double end = flow(Phase::Proliferating, spec_.tau, m);
        return spec_.h.derivative(end) * spec_.g2(end) / spec_.g2(m);
    }

    /// lambda = psi^{-1}: maturity at entry into proliferation of a mother
    /// whose daughter starts at maturity m.
    double lambda_fn(double m) const {
        if (m < -1e-12) throw RangeError("lambda: negative maturity");
        // the backward flow can land a rounding error below mP
        return std::max(spec_.mP, flow(Phase::Proliferating, -spec_.tau, h_inverse(std::max(m, 0.0))));
    }

    double lambda_prime(double m) const {
        const double k = h_inverse(std::max(m, 0.0));
        return spec_.g2(lambda_fn(m)) / (spec_.g2(k) * spec_.h.derivative(k));
    }

private:
    ModelSpec spec_;
    FlowTolerances tol_;
    double q_upper_ = 0.0;
    CumulativeIntegral Q_;
    CumulativeIntegral travel_;
    bool has_travel_ = false;

    double integrate_flow(const ScalarFn& g, double t, double m0, double lo) const {
        namespace ode = boost::numeric::odeint;
        using State = double;
        const double sign = t > 0.0 ? 1.0 : -1.0;
        auto rhs = [&](const State& x, State& dxdt, double) {
            const double at = sign < 0.0 ? std::max(x, lo) : x;
            dxdt = sign * detail::finite_or_throw(g(at), "velocity", at);
        };
        State x = m0;
        auto stepper = ode::make_controlled(tol_.ode, tol_.ode, ode::runge_kutta_dopri5<State>());
        const double T = std::abs(t);
        ode::integrate_adaptive(stepper, rhs, x, 0.0, T, std::min(T, 1e-2));
        return x;
    }
};

} // namespace cellcycle
