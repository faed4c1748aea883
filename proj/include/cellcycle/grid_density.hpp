#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"

namespace cellcycle {

/// Uniform maturity grid m_k = k * step, k = 0..n, covering [0, mMax].
struct UniformGrid {
    double m_max = 1.0;
    std::size_t n = 2048; // number of intervals

    double step() const { return m_max / static_cast<double>(n); }
    std::size_t size() const { return n + 1; }
    double operator[](std::size_t k) const { return static_cast<double>(k) * step(); }

    /// Trapezoid weight of node k.
    double weight(std::size_t k) const { return (k == 0 || k == n) ? 0.5 * step() : step(); }

    bool operator==(const UniformGrid&) const = default;
};

/// Nonnegative function on a uniform maturity grid with the mass that has
/// left [0, mMax] kept alongside, so that in-domain mass + escaped = 1.
struct GridDensity {
    UniformGrid grid;
    std::vector<double> values;
    double escaped_mass = 0.0;

    GridDensity() = default;
    explicit GridDensity(UniformGrid g) : grid(g), values(g.size(), 0.0) {}

    static GridDensity from_function(UniformGrid g, const std::function<double(double)>& f) {
        GridDensity d(g);
        for (std::size_t k = 0; k < g.size(); ++k) d.values[k] = f(g[k]);
        return d;
    }

    /// Normalized indicator of [a, b] (trapezoid mass 1).
    static GridDensity uniform(UniformGrid g, double a, double b) {
        GridDensity d = from_function(g, [a, b](double m) { return (m >= a && m <= b) ? 1.0 : 0.0; });
        d.normalize();
        return d;
    }

    /// Single-node spike carrying unit trapezoid mass.
    static GridDensity spike(UniformGrid g, std::size_t k) {
        GridDensity d(g);
        d.values[k] = 1.0 / g.weight(k);
        return d;
    }

    double mass() const {
        double s = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) s += grid.weight(k) * values[k];
        return s;
    }

    /// Trapezoid mass of the part of the grid inside [0, upper].
    double mass_below(double upper) const {
        double s = 0.0;
        const double dm = grid.step();
        for (std::size_t k = 0; k + 1 < values.size(); ++k) {
            const double a = grid[k], b = grid[k + 1];
            if (a >= upper) break;
            if (b <= upper) {
                s += 0.5 * dm * (values[k] + values[k + 1]);
            } else {
                const double t = (upper - a) / dm;
                const double vu = values[k] + t * (values[k + 1] - values[k]);
                s += 0.5 * (upper - a) * (values[k] + vu);
            }
        }
        return s;
    }

    void normalize() {
        const double s = mass();
        if (!(s > 0.0)) throw DomainError("cannot normalize a density with zero mass");
        for (double& v : values) v /= s;
        escaped_mass = 0.0;
    }

    /// Linear interpolation; zero outside [0, mMax].
    double operator()(double m) const {
        if (m < 0.0 || m > grid.m_max) return 0.0;
        const double u = m / grid.step();
        const std::size_t k = std::min(static_cast<std::size_t>(u), grid.n - 1);
        const double t = u - static_cast<double>(k);
        return values[k] + t * (values[k + 1] - values[k]);
    }
};

/// Trapezoid L1 distance between two densities on the same grid.
inline double l1_distance(const GridDensity& a, const GridDensity& b) {
    if (!(a.grid == b.grid)) throw DomainError("l1_distance: grids differ");
    double s = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) s += a.grid.weight(k) * std::abs(a.values[k] - b.values[k]);
    return s;
}

inline double l1_distance(const GridDensity& a, const std::function<double(double)>& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) s += a.grid.weight(k) * std::abs(a.values[k] - f(a.grid[k]));
    return s;
}

/// Two-column CSV (m,value) plus a JSON sidecar {escaped_mass, grid_n, mMax}.
inline void write_density(const GridDensity& d, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw Error("cannot write " + csv_path);
    out << "m,value\n" << std::setprecision(17);
    for (std::size_t k = 0; k < d.values.size(); ++k) out << d.grid[k] << ',' << d.values[k] << '\n';
    std::ofstream side(csv_path + ".json");
    if (!side) throw Error("cannot write " + csv_path + ".json");
    side << nlohmann::json{{"escaped_mass", d.escaped_mass}, {"grid_n", d.grid.n}, {"mMax", d.grid.m_max}}.dump(2)
         << '\n';
}

inline GridDensity read_density(const std::string& csv_path) {
    std::ifstream side(csv_path + ".json");
    if (!side) throw ParseError("missing sidecar " + csv_path + ".json");
    nlohmann::json meta;
    try {
        side >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(csv_path + ".json: " + e.what());
    }
    GridDensity d(UniformGrid{meta.at("mMax").get<double>(), meta.at("grid_n").get<std::size_t>()});
    d.escaped_mass = meta.at("escaped_mass").get<double>();
    std::ifstream in(csv_path);
    std::string line;
    std::getline(in, line);
    std::size_t k = 0;
    while (std::getline(in, line) && k < d.values.size()) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError(csv_path + ": line " + std::to_string(k + 2) + " malformed");
        d.values[k++] = std::stod(line.substr(comma + 1));
    }
    if (k != d.values.size()) throw ParseError(csv_path + ": expected " + std::to_string(d.values.size()) + " rows");
    return d;
}

} // namespace cellcycle
