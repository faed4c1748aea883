#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "errors.hpp"

namespace cellcycle {

/// Closed family of one-dimensional model functions.
///
/// Every form has an analytic derivative. Piecewise forms report the
/// right-sided derivative at knots, and expose their knots through
/// breakpoints() so that integrators can split there.
namespace fn {

struct Constant {
    double c = 0.0;
    bool operator==(const Constant&) const = default;
};

/// a*m + b
struct Linear {
    double a = 0.0;
    double b = 0.0;
    bool operator==(const Linear&) const = default;
};

/// a*x^p + b with x = max(m - shift, 0)
struct PowerLaw {
    double a = 0.0;
    double p = 1.0;
    double b = 0.0;
    double shift = 0.0;
    bool operator==(const PowerLaw&) const = default;
};

/// a*x^p / (K + x^p) with x = max(m - shift, 0)
struct HillRate {
    double a = 0.0;
    double p = 1.0;
    double K = 1.0;
    double shift = 0.0;
    bool operator==(const HillRate&) const = default;
};

/// Linear interpolation through (x, y) knots, constant beyond the ends.
/// Knots must be nondecreasing in x; a repeated x encodes a jump, and the
/// function takes the left value at the jump.
struct PiecewiseLinear {
    std::vector<std::pair<double, double>> knots;
    bool operator==(const PiecewiseLinear&) const = default;
};

/// Tabulated values y over strictly increasing knots x, evaluated at
/// m - shift with linear interpolation and constant extrapolation.
struct ShiftedTable {
    double shift = 0.0;
    std::vector<double> x;
    std::vector<double> y;
    bool operator==(const ShiftedTable&) const = default;
};

} // namespace fn

class ScalarFn {
public:
    using Form = std::variant<fn::Constant, fn::Linear, fn::PowerLaw, fn::HillRate,
                              fn::PiecewiseLinear, fn::ShiftedTable>;

    ScalarFn() : form_(fn::Constant{0.0}) {}
    ScalarFn(Form form) : form_(std::move(form)) { check(); }

    static ScalarFn constant(double c) { return ScalarFn(fn::Constant{c}); }
    static ScalarFn linear(double a, double b) { return ScalarFn(fn::Linear{a, b}); }

    static constexpr const char* family_names[] = {"Constant", "Linear", "PowerLaw",
                                                   "HillRate", "PiecewiseLinear", "ShiftedTable"};

    const Form& form() const { return form_; }
    std::string family() const { return family_names[form_.index()]; }

    template <class T>
    bool is() const { return std::holds_alternative<T>(form_); }
    template <class T>
    const T& as() const { return std::get<T>(form_); }

    double operator()(double m) const {
        return std::visit([m](const auto& f) { return eval(f, m); }, form_);
    }

    double derivative(double m) const {
        return std::visit([m](const auto& f) { return deriv(f, m); }, form_);
    }

    /// Points where the function or its derivative may be discontinuous.
    std::vector<double> breakpoints() const {
        return std::visit([](const auto& f) { return kinks(f); }, form_);
    }

    bool operator==(const ScalarFn&) const = default;

private:
    Form form_;

    void check() const {
        if (auto* t = std::get_if<fn::ShiftedTable>(&form_)) {
            if (t->x.size() != t->y.size() || t->x.empty())
                throw DomainError("ShiftedTable: x and y must be nonempty and of equal length");
            for (std::size_t k = 1; k < t->x.size(); ++k)
                if (!(t->x[k] > t->x[k - 1]))
                    throw DomainError("ShiftedTable: knots must be strictly increasing");
        }
        if (auto* p = std::get_if<fn::PiecewiseLinear>(&form_)) {
            if (p->knots.empty())
                throw DomainError("PiecewiseLinear: at least one knot required");
            for (std::size_t k = 1; k < p->knots.size(); ++k)
                if (p->knots[k].first < p->knots[k - 1].first)
                    throw DomainError("PiecewiseLinear: knots must be nondecreasing");
        }
    }

    static double eval(const fn::Constant& f, double) { return f.c; }
    static double eval(const fn::Linear& f, double m) { return f.a * m + f.b; }
    static double eval(const fn::PowerLaw& f, double m) {
        const double x = std::max(m - f.shift, 0.0);
        return f.a * std::pow(x, f.p) + f.b;
    }
    static double eval(const fn::HillRate& f, double m) {
        const double x = std::max(m - f.shift, 0.0);
        const double xp = std::pow(x, f.p);
        return f.a * xp / (f.K + xp);
    }
    static double eval(const fn::PiecewiseLinear& f, double m) {
        const auto& k = f.knots;
        if (m <= k.front().first) return k.front().second;
        if (m >= k.back().first) return k.back().second;
        // last knot strictly left of m; its successor is >= m
        auto it = std::lower_bound(k.begin(), k.end(), m,
                                   [](const auto& kn, double v) { return kn.first < v; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        const double w = (m - lo.first) / (hi.first - lo.first);
        return lo.second + w * (hi.second - lo.second);
    }
    static double eval(const fn::ShiftedTable& f, double m) {
        const double u = m - f.shift;
        if (u <= f.x.front()) return f.y.front();
        if (u >= f.x.back()) return f.y.back();
        auto it = std::upper_bound(f.x.begin(), f.x.end(), u);
        const std::size_t k = static_cast<std::size_t>(it - f.x.begin()) - 1;
        const double w = (u - f.x[k]) / (f.x[k + 1] - f.x[k]);
        return f.y[k] + w * (f.y[k + 1] - f.y[k]);
    }

    static double deriv(const fn::Constant&, double) { return 0.0; }
    static double deriv(const fn::Linear& f, double) { return f.a; }
    static double deriv(const fn::PowerLaw& f, double m) {
        const double x = m - f.shift;
        if (x < 0.0) return 0.0;
        if (f.p == 0.0) return 0.0;
        if (f.p == 1.0) return f.a;
        return f.a * f.p * std::pow(x, f.p - 1.0);
    }
    static double deriv(const fn::HillRate& f, double m) {
        const double x = m - f.shift;
        if (x < 0.0) return 0.0;
        if (x == 0.0) return f.p == 1.0 ? f.a / f.K : (f.p < 1.0 ? INFINITY : 0.0);
        const double xp = std::pow(x, f.p);
        const double den = f.K + xp;
        return f.a * f.K * f.p * std::pow(x, f.p - 1.0) / (den * den);
    }
    static double deriv(const fn::PiecewiseLinear& f, double m) {
        const auto& k = f.knots;
        if (m < k.front().first || m >= k.back().first) return 0.0;
        // right derivative: segment [x_j, x_{j+1}) with x_j <= m < x_{j+1}
        auto it = std::upper_bound(k.begin(), k.end(), m,
                                   [](double v, const auto& kn) { return v < kn.first; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        return (hi.second - lo.second) / (hi.first - lo.first);
    }
    static double deriv(const fn::ShiftedTable& f, double m) {
        const double u = m - f.shift;
        if (u < f.x.front() || u >= f.x.back()) return 0.0;
        auto it = std::upper_bound(f.x.begin(), f.x.end(), u);
        const std::size_t k = static_cast<std::size_t>(it - f.x.begin()) - 1;
        return (f.y[k + 1] - f.y[k]) / (f.x[k + 1] - f.x[k]);
    }

    static std::vector<double> kinks(const fn::Constant&) { return {}; }
    static std::vector<double> kinks(const fn::Linear&) { return {}; }
    static std::vector<double> kinks(const fn::PowerLaw& f) { return {f.shift}; }
    static std::vector<double> kinks(const fn::HillRate& f) { return {f.shift}; }
    static std::vector<double> kinks(const fn::PiecewiseLinear& f) {
        std::vector<double> out;
        for (const auto& [x, y] : f.knots)
            if (out.empty() || out.back() != x) out.push_back(x);
        return out;
    }
    static std::vector<double> kinks(const fn::ShiftedTable& f) {
        std::vector<double> out;
        out.reserve(f.x.size());
        for (double x : f.x) out.push_back(x + f.shift);
        return out;
    }
};

} // namespace cellcycle
