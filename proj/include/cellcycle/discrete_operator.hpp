#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "classification.hpp"
#include "flows.hpp"
#include "grid_density.hpp"

namespace cellcycle {

/// Transition density of the generational operator: the daughter's initial
/// maturity is m when the mother was born with maturity y.
inline double kernel_value(const FlowSolver& flows, double m, double y) {
    const double lam = flows.lambda_fn(m);
    if (y > lam) return 0.0;
    return flows.lambda_prime(m) * flows.hazard_Q_prime(lam) * std::exp(flows.hazard_Q(y) - flows.hazard_Q(lam));
}

namespace detail {

/// 10-point Gauss-Legendre on [a, b], split at any breakpoints inside.
template <class F>
double gauss_pieces(F&& f, double a, double b, const std::vector<double>& breaks) {
    if (!(b > a)) return 0.0;
    auto ref = [&f](double x) { return f(x); };
    double s = 0.0, left = a;
    for (auto it = std::upper_bound(breaks.begin(), breaks.end(), a); it != breaks.end() && *it < b; ++it) {
        s += boost::math::quadrature::gauss<double, 10>::integrate(ref, left, *it);
        left = *it;
    }
    return s + boost::math::quadrature::gauss<double, 10>::integrate(ref, left, b);
}

/// Points where Q' may jump.
inline std::vector<double> hazard_breaks(const ModelSpec& spec) {
    std::vector<double> b = spec.phi.breakpoints();
    for (double x : spec.g1.breakpoints()) b.push_back(x);
    b.push_back(spec.mP);
    std::sort(b.begin(), b.end());
    return b;
}

} // namespace detail

/// Discretization of P f(m) = int_0^lambda(m) q(m, y) f(y) dy on a uniform
/// grid.
///
/// f is taken piecewise linear and e^{Q(y)} f(y) is integrated exactly per
/// cell (product weights by Gauss quadrature split at the kinks of Q). The
/// cell containing lambda_i is cut at that point. The kernel has the form
/// w(m) 1[y <= lambda(m)] e^{Q(y)}, so a row is a running integral and
/// application costs O(N).
///
/// Each column j is scaled by col_scale[j] so that its trapezoid mass equals
/// 1 - E_j, where E_j = e^{Q(y_j) - Q(lambda(mMax))} is the exact probability
/// that a daughter of y_j lands beyond mMax.
class KernelMatrix {
public:
    KernelMatrix(std::shared_ptr<const FlowSolver> flows, UniformGrid grid)
        : flows_(std::move(flows)), grid_(grid), breaks_(detail::hazard_breaks(flows_->spec())) {
        const std::size_t n = grid_.size();
        const double mmax = grid_.m_max;
        Qy_.resize(n);
        for (std::size_t k = 0; k < n; ++k) Qy_[k] = flows_->hazard_Q(grid_[k]);
        A_.resize(n - 1);
        B_.resize(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const auto [a, b] = partial_weights(k, grid_[k + 1], Qy_[k + 1]);
            A_[k] = a;
            B_[k] = b;
        }
        lam_.resize(n);
        Qlam_.resize(n);
        rate_.resize(n);
        cut_.resize(n);
        PA_.resize(n);
        PB_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = grid_[i];
            lam_[i] = flows_->lambda_fn(m);
            Qlam_[i] = flows_->hazard_Q(lam_[i]);
            rate_[i] = flows_->lambda_prime(m) * flows_->hazard_Q_prime(lam_[i]);
            cut_[i] = cell_of(std::min(lam_[i], mmax));
            const auto [a, b] = partial_weights(cut_[i], std::min(lam_[i], mmax), Qlam_[i]);
            PA_[i] = a;
            PB_[i] = b;
        }
        const double Q_top = Qlam_.back();
        escape_.resize(n);
        for (std::size_t j = 0; j < n; ++j) escape_[j] = std::exp(std::min(Qy_[j] - Q_top, 0.0));

        col_scale_.assign(n, 1.0);
        std::vector<double> omega(n);
        for (std::size_t i = 0; i < n; ++i) omega[i] = grid_.weight(i);
        const std::vector<double> colsum = adjoint_unscaled(omega);
        for (std::size_t j = 0; j < n; ++j) {
            const double target = omega[j] * (1.0 - escape_[j]);
            col_scale_[j] = colsum[j] > 0.0 ? target / colsum[j] : 0.0;
        }
        if (1.0 - escape_[0] < 0.5)
            throw RangeError("build_kernel: daughters of a newborn at m=0 leave [0, mMax] with probability " +
                             std::to_string(escape_[0]) + "; increase mMax");
    }

    const FlowSolver& flows() const { return *flows_; }
    std::shared_ptr<const FlowSolver> flows_ptr() const { return flows_; }
    const UniformGrid& grid() const { return grid_; }

    double lambda_at(std::size_t i) const { return lam_[i]; }
    double escape_probability(std::size_t j) const { return escape_[j]; }
    double column_scale(std::size_t j) const { return col_scale_[j]; }
    double Q_at_node(std::size_t k) const { return Qy_[k]; }

    /// K[i][j] with quadrature weights and column scaling folded in.
    double entry(std::size_t i, std::size_t j) const {
        const std::size_t k = cut_[i];
        const double x = Qlam_[i];
        double c = 0.0;
        if (j >= 1 && j <= k) c += B_[j - 1] * std::exp(Qy_[j] - x);
        if (j + 1 <= k) c += A_[j] * std::exp(Qy_[j + 1] - x);
        if (j == k) c += PA_[i];
        if (j == k + 1) c += PB_[i];
        return rate_[i] * c * col_scale_[j];
    }

    /// Trapezoid mass (over m) of column j per unit input mass at y_j.
    double column_mass(std::size_t j) const {
        double s = 0.0;
        for (std::size_t i = 0; i < grid_.size(); ++i) s += grid_.weight(i) * entry(i, j);
        return s / grid_.weight(j);
    }

    /// Mass a point at y sends into [0, mMax], by adaptive quadrature of the
    /// analytic kernel.
    double analytic_column_mass(double y) const {
        const FlowSolver& fl = *flows_;
        const double start = y <= fl.spec().mP ? 0.0 : fl.psi(y);
        if (start >= grid_.m_max) return 0.0;
        auto q = [&](double m) { return kernel_value(fl, m, y); };
        double s = 0.0;
        const double width = grid_.m_max - start;
        const int pieces = 64;
        for (int p = 0; p < pieces; ++p) {
            const double a = start + width * p / pieces, b = start + width * (p + 1) / pieces;
            s += detail::gk_integrate(q, a, b, 1e-13);
        }
        return s;
    }

    std::vector<double> scaled(const std::vector<double>& f) const {
        std::vector<double> g(f.size());
        for (std::size_t j = 0; j < f.size(); ++j) g[j] = col_scale_[j] * f[j];
        return g;
    }

    /// prefix[k] = int_0^{y_k} e^{Q(y) - Q(y_k)} g(y) dy for piecewise linear g.
    std::vector<double> prefix(const std::vector<double>& g) const {
        std::vector<double> T(g.size(), 0.0);
        for (std::size_t k = 0; k + 1 < g.size(); ++k)
            T[k + 1] = std::exp(Qy_[k] - Qy_[k + 1]) * T[k] + A_[k] * g[k] + B_[k] * g[k + 1];
        return T;
    }

    /// int_0^x e^{Q(y) - Q(x)} g(y) dy, with g zero beyond mMax.
    double hazard_weighted(const std::vector<double>& g, const std::vector<double>& T, double x, double Qx) const {
        const double L = std::min(std::max(x, 0.0), grid_.m_max);
        const std::size_t k = cell_of(L);
        const auto [a, b] = partial_weights(k, L, Qx);
        return std::exp(Qy_[k] - Qx) * T[k] + a * g[k] + (k + 1 < g.size() ? b * g[k + 1] : 0.0);
    }

    /// (K f)_i for all i in O(N).
    std::vector<double> apply(const std::vector<double>& f) const {
        const std::vector<double> g = scaled(f);
        const std::vector<double> T = prefix(g);
        std::vector<double> out(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            const std::size_t k = cut_[i];
            const double s = std::exp(Qy_[k] - Qlam_[i]) * T[k] + PA_[i] * g[k] + (k + 1 < g.size() ? PB_[i] * g[k + 1] : 0.0);
            out[i] = rate_[i] * s;
        }
        return out;
    }

    /// (K^T v)_j for all j in O(N).
    std::vector<double> apply_adjoint(const std::vector<double>& v) const {
        std::vector<double> out = adjoint_unscaled(v);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] *= col_scale_[j];
        return out;
    }

    /// Nystrom extension: (P f)(m) at an arbitrary maturity m >= 0, given
    /// g = scaled(f) and T = prefix(g).
    double image_at(const std::vector<double>& g, const std::vector<double>& T, double m) const {
        const FlowSolver& fl = *flows_;
        const double lam = fl.lambda_fn(m);
        const double Ql = fl.hazard_Q(lam);
        return fl.lambda_prime(m) * fl.hazard_Q_prime(lam) * hazard_weighted(g, T, lam, Ql);
    }

private:
    std::shared_ptr<const FlowSolver> flows_;
    UniformGrid grid_;
    std::vector<double> breaks_;
    std::vector<double> Qy_;
    std::vector<double> A_, B_; // cell weights relative to e^{Q(y_{k+1})}
    std::vector<double> lam_, Qlam_, rate_;
    std::vector<std::size_t> cut_;
    std::vector<double> PA_, PB_; // cut-cell weights relative to e^{Q(lambda_i)}
    std::vector<double> escape_;
    std::vector<double> col_scale_;

    std::size_t cell_of(double L) const {
        std::size_t k = std::min(static_cast<std::size_t>(L / grid_.step()), grid_.n);
        if (k < grid_.n && grid_[k + 1] <= L) ++k;
        while (k > 0 && grid_[k] > L) --k;
        return k;
    }

    /// Weights of g_k and g_{k+1} in int_{y_k}^{L} e^{Q(y) - Qref} g(y) dy.
    std::pair<double, double> partial_weights(std::size_t k, double L, double Qref) const {
        const double y0 = grid_[k];
        if (!(L > y0)) return {0.0, 0.0};
        const double dm = grid_.step();
        const FlowSolver& fl = *flows_;
        const double a = detail::gauss_pieces(
            [&](double y) { return std::exp(fl.hazard_Q(y) - Qref) * (1.0 - (y - y0) / dm); }, y0, L, breaks_);
        const double b = detail::gauss_pieces(
            [&](double y) { return std::exp(fl.hazard_Q(y) - Qref) * ((y - y0) / dm); }, y0, L, breaks_);
        return {a, b};
    }

    std::vector<double> adjoint_unscaled(const std::vector<double>& v) const {
        const std::size_t n = grid_.size();
        std::vector<double> out(n, 0.0);
        // S_j = sum over rows with cut >= j of v_i rate_i e^{Q_j - Qlam_i}
        std::vector<std::vector<std::size_t>> rows_by_cut(n);
        for (std::size_t i = 0; i < n; ++i) rows_by_cut[cut_[i]].push_back(i);
        std::vector<double> S(n + 1, 0.0);
        for (std::size_t j = n; j-- > 0;) {
            S[j] = (j + 1 < n) ? std::exp(Qy_[j] - Qy_[j + 1]) * S[j + 1] : 0.0;
            for (std::size_t i : rows_by_cut[j]) S[j] += v[i] * rate_[i] * std::exp(Qy_[j] - Qlam_[i]);
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (j >= 1) out[j] += B_[j - 1] * S[j];
            if (j + 1 < n) out[j] += A_[j] * S[j + 1];
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = cut_[i];
            out[k] += v[i] * rate_[i] * PA_[i];
            if (k + 1 < n) out[k + 1] += v[i] * rate_[i] * PB_[i];
        }
        return out;
    }
};


inline KernelMatrix build_kernel(const ModelSpec& spec, std::size_t grid_n = 2048) {
    return KernelMatrix(std::make_shared<const FlowSolver>(spec), UniformGrid{spec.mMax, grid_n});
}

inline KernelMatrix build_kernel(std::shared_ptr<const FlowSolver> flows, std::size_t grid_n = 2048) {
    const double mmax = flows->spec().mMax;
    return KernelMatrix(std::move(flows), UniformGrid{mmax, grid_n});
}

/// One generation: P f, with the mass sent beyond mMax added to escaped_mass.
inline GridDensity apply_P(const KernelMatrix& K, const GridDensity& f) {
    if (!(f.grid == K.grid())) throw DomainError("apply_P: density grid does not match kernel grid");
    GridDensity out(f.grid);
    out.values = K.apply(f.values);
    for (double& v : out.values) v = std::max(v, 0.0);
    double lost = 0.0;
    for (std::size_t j = 0; j < f.values.size(); ++j)
        lost += f.grid.weight(j) * K.escape_probability(j) * f.values[j];
    out.escaped_mass = f.escaped_mass + lost;
    return out;
}

enum class IterationOutcome { Converged, Sweeping, MassLoss, MaxIterations };

inline const char* to_string(IterationOutcome o) {
    switch (o) {
    case IterationOutcome::Converged: return "Converged";
    case IterationOutcome::Sweeping: return "Sweeping";
    case IterationOutcome::MassLoss: return "MassLoss";
    case IterationOutcome::MaxIterations: return "MaxIterations";
    }
    return "?";
}

struct PowerIterationOptions {
    std::size_t n_max = 100000;
    double tol = 1e-9;
    double min_mass_for_convergence = 0.5;
    double sweeping_mass = 0.01;
    std::size_t monotone_window = 100;
    // normalized iterations applied after convergence: the L1 test does not
    // see relative errors in a tail that is 1e-20 small, and the resting
    // time divergence test reads that tail
    std::size_t polish = 200;
};

struct PowerIterationResult {
    IterationOutcome outcome = IterationOutcome::MaxIterations;
    std::optional<GridDensity> fixed_point;
    GridDensity last;
    std::size_t iterations = 0;
    std::vector<double> differences;   // ||P^{k+1} f - P^k f||_1
    std::vector<double> in_domain_mass; // mass of P^{k+1} f in [0, mMax]
    bool monotone_tail = false;
};

/// Iterates P from f0 until successive iterates agree to tol (fixed point),
/// the in-domain mass drops below sweeping_mass (numerical sweeping), or
/// n_max is reached.
inline PowerIterationResult power_iterate(const KernelMatrix& K, const GridDensity& f0,
                                          const PowerIterationOptions& opt = {}) {
    PowerIterationResult r;
    GridDensity cur = f0;
    for (std::size_t k = 0; k < opt.n_max; ++k) {
        GridDensity next = apply_P(K, cur);
        const double diff = l1_distance(next, cur);
        const double mass = next.mass();
        r.differences.push_back(diff);
        r.in_domain_mass.push_back(mass);
        r.iterations = k + 1;
        cur = std::move(next);
        if (diff < opt.tol && mass > opt.min_mass_for_convergence) {
            r.outcome = IterationOutcome::Converged;
            // the invariant density is normalized; what left the domain stays in `last`
            r.fixed_point = cur;
            r.fixed_point->normalize();
            for (std::size_t j = 0; j < opt.polish; ++j) {
                *r.fixed_point = apply_P(K, *r.fixed_point);
                r.fixed_point->normalize();
            }
            break;
        }
        if (mass < opt.sweeping_mass) {
            const auto& ms = r.in_domain_mass;
            const std::size_t w = std::min(opt.monotone_window, ms.size() - 1);
            bool mono = true;
            for (std::size_t t = ms.size() - w; t < ms.size(); ++t) mono = mono && ms[t] <= ms[t - 1];
            r.monotone_tail = mono;
            r.outcome = mono ? IterationOutcome::Sweeping : IterationOutcome::MassLoss;
            break;
        }
    }
    r.last = std::move(cur);
    return r;
}

/// alpha(m) = Q(lambda(m)) - Q(m) on the grid.
inline std::vector<double> alpha_profile(const FlowSolver& flows, const UniformGrid& grid) {
    std::vector<double> a(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double m = grid[k];
        a[k] = flows.hazard_Q(flows.lambda_fn(m)) - flows.hazard_Q(m);
    }
    return a;
}

struct DiscreteClassifyOptions {
    std::size_t grid_n = 2048;
    double margin = 0.01;
    double tail_fraction = 0.5; // tail is [tail_fraction * mMax, mMax]
};

/// Stable when a grid lower bound of alpha on the tail exceeds 1 + margin,
/// Sweeping when alpha stays below 1 - margin there; anything in between is
/// left Inconclusive.
inline DiscreteClassification classify_discrete(const FlowSolver& flows, const DiscreteClassifyOptions& opt = {}) {
    const UniformGrid grid{flows.spec().mMax, opt.grid_n};
    const std::vector<double> a = alpha_profile(flows, grid);
    DiscreteClassification c;
    c.margin = opt.margin;
    c.tail_start = opt.tail_fraction * grid.m_max;
    double tmin = INFINITY, tmax = -INFINITY, jump = 0.0, inf = INFINITY;
    bool finite = true;
    for (std::size_t k = 0; k < a.size(); ++k) {
        finite = finite && std::isfinite(a[k]);
        inf = std::min(inf, a[k]);
        if (grid[k] < c.tail_start) continue;
        tmin = std::min(tmin, a[k]);
        tmax = std::max(tmax, a[k]);
        if (k + 1 < a.size()) jump = std::max(jump, std::abs(a[k + 1] - a[k]));
    }
    c.alpha_tail_min = tmin;
    c.alpha_tail_max = tmax;
    c.alpha_inf = inf;
    // between grid points alpha can dip by at most the largest step seen
    c.alpha_liminf_bound = tmin - jump;
    c.completely_mixing = finite && std::isfinite(inf);
    if (c.alpha_liminf_bound > 1.0 + opt.margin) {
        c.verdict = Verdict::Stable;
        c.notes.push_back("liminf alpha > 1: P is asymptotically stable");
    } else if (tmax + jump <= 1.0 - opt.margin) {
        c.verdict = Verdict::Sweeping;
        c.notes.push_back("alpha <= 1 on the tail: P is sweeping from bounded intervals");
    } else {
        c.verdict = Verdict::Inconclusive;
        c.notes.push_back("alpha on the tail is within the margin of 1 or oscillates around it");
    }
    if (c.completely_mixing) c.notes.push_back("inf alpha > -infinity on the grid: P is completely mixing");
    return c;
}

struct ConjugacyResult {
    double discrepancy = 0.0; // || P U f - U Ptilde f ||_1 over [0, mMax]
    double mass_f = 0.0;
    double mass_Uf = 0.0;
    std::vector<double> PUf;
    std::vector<double> UPtf;
};

/// Kernel of the conjugate operator Ptilde, built from Qtilde = Q o psi.
inline double conjugate_kernel_value(const FlowSolver& fl, double z, double x) {
    const double lz = fl.lambda_fn(z);
    if (x > lz || x < fl.spec().mP) return 0.0;
    const double Qt_lz = fl.hazard_Q(z);  // Q(psi(lambda(z))) = Q(z)
    const double Qt_x = fl.hazard_Q(fl.psi(x));
    const double Qt_prime = fl.hazard_Q_prime(z) * fl.psi_prime(lz);
    return fl.lambda_prime(z) * Qt_prime * std::exp(Qt_x - Qt_lz);
}

/// Mass that a point x >= mP sends into [mP, upper] under Ptilde.
inline double conjugate_column_mass(const FlowSolver& fl, double x, double upper) {
    const double start = std::max(fl.spec().mP, x <= fl.lambda_fn(0.0) ? 0.0 : fl.psi(x));
    if (start >= upper) return 0.0;
    double s = 0.0;
    const int pieces = 64;
    for (int p = 0; p < pieces; ++p) {
        const double a = start + (upper - start) * p / pieces, b = start + (upper - start) * (p + 1) / pieces;
        s += detail::gk_integrate([&](double z) { return conjugate_kernel_value(fl, z, x); }, a, b, 1e-13);
    }
    return s;
}

/// Compares P(U f) with U(Ptilde f), U f(m) = lambda'(m) f(lambda(m)), both
/// sides by adaptive quadrature of the analytic kernels, evaluated on the
/// nodes of f's grid.
inline ConjugacyResult conjugate_check(const FlowSolver& fl, const GridDensity& f) {
    const UniformGrid& grid = f.grid;
    const double mP = fl.spec().mP;
    std::size_t lo = grid.size(), hi = 0;
    for (std::size_t k = 0; k < grid.size(); ++k)
        if (f.values[k] != 0.0) {
            lo = std::min(lo, k);
            hi = k;
        }
    if (lo > hi) throw DomainError("conjugate_check: f is identically zero");
    const std::size_t klo = lo > 0 ? lo - 1 : 0;
    const std::size_t khi = std::min(hi + 1, grid.n);
    const double psi_top = fl.psi(fl.spec().mMax);
    if (grid[lo] < mP - 1e-12) throw RangeError("conjugate_check: f must vanish below mP");
    if (grid[hi] > psi_top + 1e-12) throw RangeError("conjugate_check: f must vanish beyond psi(mMax)");
    // the interpolant ramps over the cells next to the support; the part of
    // a ramp outside [mP, psi(mMax)] is dropped
    const double a = std::max(grid[klo], mP), b = std::min(grid[khi], psi_top);

    std::vector<double> nodes_x;
    for (std::size_t k = klo; k <= khi; ++k) nodes_x.push_back(std::clamp(grid[k], a, b));
    std::vector<double> qbreaks;
    for (double bq : fl.spec().phi.breakpoints()) qbreaks.push_back(bq);
    for (double bq : fl.spec().g1.breakpoints()) qbreaks.push_back(bq);
    qbreaks.push_back(mP);

    // y-side pieces: kinks of U f sit at psi(x_k); kinks of Q in y.
    std::vector<double> ybreaks;
    for (double x : nodes_x) ybreaks.push_back(fl.psi(x));
    for (double q : qbreaks) ybreaks.push_back(q);
    std::sort(ybreaks.begin(), ybreaks.end());
    // x-side pieces: nodes of f and lambda of Q's kinks.
    std::vector<double> xbreaks = nodes_x;
    for (double q : qbreaks)
        if (q >= 0.0) xbreaks.push_back(fl.lambda_fn(q));
    std::sort(xbreaks.begin(), xbreaks.end());

    auto Uf = [&](double y) {
        if (y < 0.0) return 0.0;
        const double l = fl.lambda_fn(y);
        if (l < a || l > b) return 0.0;
        return fl.lambda_prime(y) * f(l);
    };

    auto integrate_pieces = [](const std::function<double(double)>& g, double from, double to,
                               const std::vector<double>& breaks) {
        double s = 0.0, left = from;
        for (double br : breaks) {
            if (br <= left) continue;
            if (br >= to) break;
            s += detail::gk_integrate(g, left, br, 1e-11);
            left = br;
        }
        return s + detail::gk_integrate(g, left, to, 1e-11);
    };

    ConjugacyResult r;
    r.mass_f = integrate_pieces([&f](double x) { return f(x); }, a, b, nodes_x);
    r.PUf.assign(grid.size(), 0.0);
    r.UPtf.assign(grid.size(), 0.0);
    const double ya = fl.psi(a), yb = fl.psi(b);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double m = grid[i];
        const double lam = fl.lambda_fn(m);
        const double Ql = fl.hazard_Q(lam);
        const double w = fl.lambda_prime(m) * fl.hazard_Q_prime(lam);
        const double top = std::min(lam, yb);
        if (top > ya && w > 0.0) {
            auto g = [&](double y) { return std::exp(fl.hazard_Q(y) - Ql) * Uf(y); };
            r.PUf[i] = w * integrate_pieces(g, std::max(ya, 0.0), top, ybreaks);
        }
        // (U Ptilde f)(m) = lambda'(m) * (Ptilde f)(lambda(m))
        const double z = lam;
        const double lz = fl.lambda_fn(z);
        const double xtop = std::min(lz, b);
        if (xtop > a) {
            const double Qt_lz = fl.hazard_Q(z);
            const double wt = fl.lambda_prime(z) * fl.hazard_Q_prime(z) * fl.psi_prime(lz);
            if (wt > 0.0) {
                auto g = [&](double x) { return std::exp(fl.hazard_Q(fl.psi(x)) - Qt_lz) * f(x); };
                r.UPtf[i] = fl.lambda_prime(m) * wt * integrate_pieces(g, std::max(a, mP), xtop, xbreaks);
            }
        }
    }
    double d = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) d += grid.weight(i) * std::abs(r.PUf[i] - r.UPtf[i]);
    r.discrepancy = d;
    r.mass_Uf = integrate_pieces(Uf, std::max(ya, 0.0), std::min(yb, grid.m_max), ybreaks);
    return r;
}

} // namespace cellcycle
