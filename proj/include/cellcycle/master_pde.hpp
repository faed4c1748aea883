#pragma once

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <string>
#include <vector>

#include <json.hpp>

#include "stationary.hpp"

namespace cellcycle {

struct PdeOptions {
    double dm = 1e-2;
    double dt = 0.0;      // 0: largest step with CFL number `cfl` that divides tau
    double cfl = 0.5;
    double cfl_limit = 0.9;
};

/// Resting-cell density R(t, m) for
///   R_t + (g1 R)_m = -phi R + phi(lambda) lambda' R(t - tau, lambda(m))
/// on nodes m_k = k dm, k = 0..n, with R(t, 0) = 0 (no inflow).
///
/// Node k is updated from the upwind cell [m_{k-1}, m_k]: the flux
/// difference is first-order upwind, and the sink and delayed source are
/// integrated over the cell against the linear interpolant of their end
/// values, with phi and phi(lambda) lambda' kept exact (weights by Gauss
/// quadrature split at their jumps). The delayed profile is read from a ring
/// buffer of past steps with linear interpolation in time and in the
/// nonlocal point lambda(m); lambda(m) > mMax reads 0.
class DelayField {
public:
    using History = std::function<double(double t, double m)>; // t in [-tau, 0]

    DelayField(std::shared_ptr<const FlowSolver> flows, const std::vector<double>& R0, const PdeOptions& opt,
               History history = {})
        : flows_(std::move(flows)), opt_(opt) {
        const ModelSpec& s = flows_->spec();
        n_ = static_cast<std::size_t>(std::llround(s.mMax / opt.dm));
        if (n_ < 2) throw DomainError("pde: dm too large for the domain");
        dm_ = s.mMax / static_cast<double>(n_);
        if (R0.size() != n_ + 1) throw DomainError("pde: initial profile has the wrong length");
        g_.resize(n_ + 1);
        src_pos_.assign(n_ + 1, -1.0);
        double gmax = 0.0;
        for (std::size_t k = 0; k <= n_; ++k) {
            const double m = dm_ * static_cast<double>(k);
            g_[k] = s.g1(m);
            gmax = std::max(gmax, g_[k]);
            const double lam = flows_->lambda_fn(m);
            if (lam <= s.mMax) src_pos_[k] = lam / dm_;
        }
        build_cell_weights();
        const double tau = s.tau;
        dt_ = opt.dt;
        if (dt_ <= 0.0) {
            const double target = opt.cfl * dm_ / gmax;
            dt_ = tau / std::ceil(tau / target);
        }
        cfl_ = gmax * dt_ / dm_;
        if (cfl_ > opt.cfl_limit)
            throw CflViolation("pde: CFL number " + std::to_string(cfl_) + " exceeds " + std::to_string(opt.cfl_limit));
        lag_ = tau / dt_;
        depth_ = static_cast<std::size_t>(std::ceil(lag_ - 1e-9)) + 1;
        R_ = R0;
        R_[0] = 0.0;
        for (std::size_t d = depth_; d-- > 0;) {
            const double t = -static_cast<double>(d) * dt_;
            std::vector<double> prof(n_ + 1);
            for (std::size_t k = 0; k <= n_; ++k)
                prof[k] = (history && d > 0) ? history(t, dm_ * static_cast<double>(k)) : R0[k];
            past_.push_back(std::move(prof));
        }
        history_kind_ = history ? "file" : "frozen initial profile";
    }

    double t() const { return t_; }
    double dt() const { return dt_; }
    double dm() const { return dm_; }
    std::size_t nodes() const { return n_ + 1; }
    double cfl() const { return cfl_; }
    double escaped_mass() const { return escaped_; }
    const std::string& history_kind() const { return history_kind_; }
    const std::vector<double>& profile() const { return R_; }
    double node(std::size_t k) const { return dm_ * static_cast<double>(k); }

    /// Mass of R with the right-endpoint rule that the update conserves.
    double mass() const {
        double s = 0.0;
        for (std::size_t k = 1; k <= n_; ++k) s += R_[k];
        return s * dm_;
    }

    double mass_below(double M) const {
        double s = 0.0;
        for (std::size_t k = 1; k <= n_ && node(k) <= M + 1e-12; ++k) s += R_[k];
        return s * dm_;
    }

    /// Cells in the proliferating phase: everything that left R during the
    /// last tau and has not returned yet, restricted to entry maturity <= M.
    /// Under the frozen default history this includes the tau * sink(R0)
    /// that the history implies at t = 0.
    double in_transit(double M = INFINITY) const {
        const std::size_t last = past_.size() - 1;
        const auto whole = static_cast<std::size_t>(std::floor(lag_ + 1e-9));
        const double frac = lag_ - static_cast<double>(whole);
        double s = 0.0;
        for (std::size_t j = 1; j <= std::min(whole + (frac > 1e-9 ? 1 : 0), last); ++j) {
            const std::vector<double>& P = past_[last - j];
            double loss = 0.0;
            for (std::size_t k = 1; k <= n_ && node(k) <= M + 1e-12; ++k)
                loss += sinkA_[k] * P[k - 1] + sinkB_[k] * P[k];
            s += (j <= whole ? 1.0 : frac) * dt_ * loss;
        }
        return s;
    }

    /// Resting mass on [0, M] plus the proliferating cells that entered at
    /// maturity <= M.
    double population_below(double M) const { return mass_below(M) + in_transit(M); }

    /// Net rate of change of mass predicted by the current state:
    /// trapezoid integral of (source - sink) minus the outflow at mMax.
    struct Balance {
        double source = 0.0, sink = 0.0, outflow = 0.0;
        double rate() const { return source - sink - outflow; }
    };

    Balance balance() const {
        const std::vector<double> S = source_now();
        Balance b;
        for (std::size_t k = 1; k <= n_; ++k) {
            b.source += srcA_[k] * S[k - 1] + srcB_[k] * S[k];
            b.sink += sinkA_[k] * R_[k - 1] + sinkB_[k] * R_[k];
        }
        b.outflow = g_[n_] * R_[n_];
        return b;
    }

    void step() {
        const std::vector<double> S = source_now();
        std::vector<double> next(n_ + 1, 0.0);
        const double r = dt_ / dm_;
        for (std::size_t k = 1; k <= n_; ++k) {
            const double flux = g_[k] * R_[k] - g_[k - 1] * R_[k - 1];
            const double gain = srcA_[k] * S[k - 1] + srcB_[k] * S[k];
            const double loss = sinkA_[k] * R_[k - 1] + sinkB_[k] * R_[k];
            next[k] = R_[k] - r * flux + r * (gain - loss);
            if (next[k] < 0.0) {
                if (next[k] < -1e-12)
                    throw NegativeDensity("pde: R = " + std::to_string(next[k]) + " at m = " +
                                          std::to_string(node(k)) + ", t = " + std::to_string(t_ + dt_));
                next[k] = 0.0;
            }
        }
        escaped_ += dt_ * g_[n_] * R_[n_];
        past_.pop_front();
        past_.push_back(next);
        R_ = std::move(next);
        t_ += dt_;
    }

private:
    std::shared_ptr<const FlowSolver> flows_;
    PdeOptions opt_;
    std::size_t n_ = 0;
    double dm_ = 0.0, dt_ = 0.0, cfl_ = 0.0, lag_ = 0.0;
    std::size_t depth_ = 0;
    std::vector<double> g_, src_pos_;
    // cell k = [m_{k-1}, m_k]: weights of the left and right end values
    std::vector<double> sinkA_, sinkB_, srcA_, srcB_;
    std::vector<double> R_;
    std::deque<std::vector<double>> past_; // past_.back() is the current profile
    double t_ = 0.0;
    double escaped_ = 0.0;
    std::string history_kind_;

    void build_cell_weights() {
        const FlowSolver& fl = *flows_;
        const ModelSpec& s = fl.spec();
        std::vector<double> phi_breaks = s.phi.breakpoints();
        phi_breaks.push_back(s.mP);
        std::sort(phi_breaks.begin(), phi_breaks.end());
        // phi(lambda(m)) jumps where lambda(m) crosses a jump of phi
        std::vector<double> src_breaks;
        const double lam0 = fl.lambda_fn(0.0);
        for (double b : phi_breaks)
            if (b >= lam0 && b <= s.mMax) src_breaks.push_back(fl.psi(b));
        std::sort(src_breaks.begin(), src_breaks.end());
        auto rate = [&](double m) {
            const double lam = fl.lambda_fn(m);
            return lam <= s.mMax ? s.phi(lam) * fl.lambda_prime(m) : 0.0;
        };
        sinkA_.assign(n_ + 1, 0.0);
        sinkB_ = srcA_ = srcB_ = sinkA_;
        for (std::size_t k = 1; k <= n_; ++k) {
            const double a = node(k - 1), b = node(k);
            auto left = [&](double m) { return (b - m) / dm_; };
            auto right = [&](double m) { return (m - a) / dm_; };
            sinkA_[k] = detail::gauss_pieces([&](double m) { return s.phi(m) * left(m); }, a, b, phi_breaks);
            sinkB_[k] = detail::gauss_pieces([&](double m) { return s.phi(m) * right(m); }, a, b, phi_breaks);
            srcA_[k] = detail::gauss_pieces([&](double m) { return rate(m) * left(m); }, a, b, src_breaks);
            srcB_[k] = detail::gauss_pieces([&](double m) { return rate(m) * right(m); }, a, b, src_breaks);
        }
    }

    /// Delayed profile R(t - tau, lambda(m)) at every node (0 beyond mMax).
    std::vector<double> source_now() const {
        // t - tau sits `lag_` steps back; interpolate between whole steps
        const double back = lag_;
        const auto j0 = static_cast<std::size_t>(std::floor(back));
        const double w = back - static_cast<double>(j0);
        const std::size_t last = past_.size() - 1;
        const std::vector<double>& A = past_[last - std::min(j0, last)];
        const std::vector<double>& B = past_[last - std::min(j0 + 1, last)];
        std::vector<double> S(n_ + 1, 0.0);
        for (std::size_t k = 0; k <= n_; ++k) {
            if (src_pos_[k] < 0.0) continue;
            const double u = src_pos_[k];
            const std::size_t i = std::min(static_cast<std::size_t>(u), n_ - 1);
            const double th = u - static_cast<double>(i);
            const double a = (1.0 - th) * A[i] + th * A[i + 1];
            const double b = w > 0.0 ? (1.0 - th) * B[i] + th * B[i + 1] : a;
            S[k] = (1.0 - w) * a + w * b;
        }
        return S;
    }
};

/// Called after every `every`-th step with the field.
using SnapshotFn = std::function<void(const DelayField&)>;

inline void evolve(DelayField& field, double t_end, const SnapshotFn& snapshot = {}, std::size_t every = 0) {
    std::size_t k = 0;
    while (field.t() < t_end - 0.5 * field.dt()) {
        field.step();
        ++k;
        if (snapshot && every > 0 && k % every == 0) snapshot(field);
    }
}

/// CSV frames (t, m, R), one row per node per snapshot.
class FrameWriter {
public:
    explicit FrameWriter(const std::string& path) : out_(path) {
        if (!out_) throw Error("cannot write " + path);
        out_ << "t,m,R\n" << std::setprecision(12);
    }
    void operator()(const DelayField& f) {
        for (std::size_t k = 0; k < f.nodes(); ++k) out_ << f.t() << ',' << f.node(k) << ',' << f.profile()[k] << '\n';
    }

private:
    std::ofstream out_;
};

/// Reads (t, m, R) frames as a history on [-tau, 0], bilinear in (t, m).
inline DelayField::History read_history(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot read history " + path);
    std::string line;
    std::getline(in, line);
    std::vector<double> times;
    std::vector<std::vector<std::pair<double, double>>> frames;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        double t, m, r;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &m, &r) != 3)
            throw ParseError(path + ": line " + std::to_string(lineno) + " is not t,m,R");
        if (times.empty() || t != times.back()) {
            if (!times.empty() && t < times.back()) throw ParseError(path + ": times must be nondecreasing");
            times.push_back(t);
            frames.emplace_back();
        }
        frames.back().emplace_back(m, r);
    }
    if (times.empty()) throw ParseError(path + ": no frames");
    auto at = [](const std::vector<std::pair<double, double>>& fr, double m) {
        if (m <= fr.front().first) return fr.front().second;
        if (m >= fr.back().first) return fr.back().second;
        auto it = std::lower_bound(fr.begin(), fr.end(), m, [](const auto& e, double v) { return e.first < v; });
        const auto& [m1, r1] = *it;
        const auto& [m0, r0] = *(it - 1);
        return r0 + (r1 - r0) * (m - m0) / (m1 - m0);
    };
    return [times, frames, at](double t, double m) {
        if (t <= times.front()) return at(frames.front(), m);
        if (t >= times.back()) return at(frames.back(), m);
        const std::size_t j = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
        const double w = (t - times[j - 1]) / (times[j] - times[j - 1]);
        return (1.0 - w) * at(frames[j - 1], m) + w * at(frames[j], m);
    };
}

struct StationaryResidual {
    std::vector<double> m;
    std::vector<double> residual; // NaN where skipped
    double l1 = 0.0;
    double max_abs = 0.0;
};

namespace detail {

inline bool jumps_at(const ScalarFn& f, double b) {
    const double l = f(b), r = f(std::nextafter(b, INFINITY));
    return std::abs(r - l) > 1e-9 * (std::abs(l) + std::abs(r));
}

inline bool slope_jumps_at(const ScalarFn& f, double b) {
    const double l = f.derivative(std::nextafter(b, -INFINITY)), r = f.derivative(b);
    return std::abs(r - l) > 1e-9 * (std::abs(l) + std::abs(r));
}

} // namespace detail

/// Residual of (g1 R)' + phi R - phi(lambda) lambda' R(lambda) for R given
/// on a grid, with centered differences. Nodes whose stencil holds a jump
/// of phi or g1, or a point where phi(lambda) lambda' jumps, are skipped
/// (a kink only costs O(dm) at one node; a jump costs O(1)), as are the
/// ends. Restrict to [from, to] if given.
inline StationaryResidual stationary_residual(const FlowSolver& fl, const GridDensity& R, double from = 0.0,
                                              double to = INFINITY) {
    const ModelSpec& s = fl.spec();
    const UniformGrid& g = R.grid;
    std::vector<double> jumps;
    for (double b : detail::hazard_breaks(s))
        if (detail::jumps_at(s.phi, b) || detail::jumps_at(s.g1, b)) jumps.push_back(b);
    std::vector<double> src_jumps = jumps;
    for (double b : s.g2.breakpoints())
        if (detail::jumps_at(s.g2, b)) src_jumps.push_back(b);
    for (double b : s.h.breakpoints())
        if (detail::slope_jumps_at(s.h, b)) src_jumps.push_back(b);
    // lambda(m) reaches b at m = psi(b), and h^{-1}(m) reaches b at m = h(b)
    for (double b : s.g2.breakpoints())
        if (detail::jumps_at(s.g2, b)) jumps.push_back(s.h(b));
    for (double b : src_jumps) {
        if (b < s.mP) continue;
        try {
            jumps.push_back(fl.psi(b));
        } catch (const Error&) {
        }
    }
    for (double b : s.h.breakpoints()) jumps.push_back(s.h(b));
    std::sort(jumps.begin(), jumps.end());
    const double dm = g.step();
    StationaryResidual out;
    for (std::size_t k = 1; k < g.n; ++k) {
        const double m = g[k];
        if (m < from || m > to) continue;
        out.m.push_back(m);
        const auto it = std::lower_bound(jumps.begin(), jumps.end(), m - dm - 1e-12);
        if (it != jumps.end() && *it < m + dm + 1e-12) {
            out.residual.push_back(NAN);
            continue;
        }
        const double d = (s.g1(g[k + 1]) * R.values[k + 1] - s.g1(g[k - 1]) * R.values[k - 1]) / (2.0 * dm);
        const double lam = fl.lambda_fn(m);
        const double src = lam <= g.m_max ? s.phi(lam) * fl.lambda_prime(m) * R(lam) : 0.0;
        const double r = d + s.phi(m) * R.values[k] - src;
        out.residual.push_back(r);
        out.l1 += dm * std::abs(r);
        out.max_abs = std::max(out.max_abs, std::abs(r));
    }
    return out;
}

struct BoundaryCheck {
    double brzeg_r = 0.0; // max |r(0, m) - k'(m) p(tau, k(m))|, k = h^{-1}
    double brzeg_p = 0.0; // max |p(0, m) - phi(m) int r(a, m) da|
    double max() const { return std::max(brzeg_r, brzeg_p); }
};

/// Both boundary identities of the age-structured system at the stationary
/// densities r = f~*(., ., 1), p = f~*(., ., 2), on `points` maturities.
inline BoundaryCheck boundary_consistency_check(const StationaryProfile& p, std::size_t points = 200) {
    const FlowSolver& fl = p.flows();
    const ModelSpec& s = fl.spec();
    BoundaryCheck b;
    const double top = std::min(s.mMax, fl.psi(s.mMax));
    for (std::size_t q = 0; q <= points; ++q) {
        const double m = top * static_cast<double>(q) / static_cast<double>(points);
        // (brzeg-r): newborns at m come from mothers dividing at k(m)
        double rhs = 0.0;
        const double km = fl.h_inverse(m);
        if (km >= s.mP) {
            const double kprime = 1.0 / s.h.derivative(km);
            rhs = kprime * p.phase_density(s.tau, km, Phase::Proliferating);
        }
        b.brzeg_r = std::max(b.brzeg_r, std::abs(p.phase_density(0.0, m, Phase::Resting) - rhs));
        // (brzeg-p): entry into proliferation at m
        const double lhs = p.phase_density(0.0, m, Phase::Proliferating);
        // right limit of phi: the entry density at a jump of phi is the limit from above
        const double right = s.phi(std::nextafter(m, INFINITY)) * p.c() * p.resting_profile()(m);
        b.brzeg_p = std::max(b.brzeg_p, std::abs(lhs - right));
    }
    return b;
}

} // namespace cellcycle
