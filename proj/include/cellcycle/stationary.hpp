#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "discrete_operator.hpp"

namespace cellcycle {

/// R(x) = e^{-Q(x)} / g1(x) * int_0^x e^{Q(y)} f(y) dy for the piecewise
/// linear interpolant of f; c R is the resting-phase maturity marginal.
class RestingProfile {
public:
    RestingProfile(std::shared_ptr<const FlowSolver> flows, GridDensity f)
        : flows_(std::move(flows)), f_(std::move(f)), breaks_(detail::hazard_breaks(flows_->spec())) {
        const UniformGrid& g = f_.grid;
        C_.assign(g.size(), 0.0);
        Qn_.resize(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) Qn_[k] = flows_->hazard_Q(g[k]);
        for (std::size_t k = 0; k + 1 < g.size(); ++k)
            C_[k + 1] = std::exp(Qn_[k] - Qn_[k + 1]) * C_[k] + partial(k, g[k + 1], Qn_[k + 1]);
    }

    const GridDensity& density() const { return f_; }

    /// int_0^x e^{Q(y) - Q(x)} f(y) dy.
    double hazard_weighted(double x) const {
        if (x <= 0.0) return 0.0;
        const UniformGrid& g = f_.grid;
        const double Qx = flows_->hazard_Q(x);
        if (x >= g.m_max) return std::exp(Qn_.back() - Qx) * C_.back();
        std::size_t k = std::min(static_cast<std::size_t>(x / g.step()), g.n - 1);
        if (g[k] > x) --k;
        return std::exp(Qn_[k] - Qx) * C_[k] + partial(k, x, Qx);
    }

    double operator()(double x) const { return hazard_weighted(x) / flows_->spec().g1(x); }

    /// int_0^M R(x) dx, integrating cell by cell.
    double integral(double M) const {
        const UniformGrid& g = f_.grid;
        const double top = std::min(M, g.m_max);
        auto R = [this](double x) { return (*this)(x); };
        double s = 0.0;
        for (std::size_t k = 0; k < g.n && g[k] < top; ++k)
            s += detail::gauss_pieces(R, g[k], std::min(g[k + 1], top), breaks_);
        if (M > g.m_max) s += detail::gk_integrate(R, g.m_max, M, 1e-12);
        return s;
    }

private:
    std::shared_ptr<const FlowSolver> flows_;
    GridDensity f_;
    std::vector<double> breaks_;
    std::vector<double> C_;  // C_k = int_0^{m_k} e^{Q(y) - Q(m_k)} f(y) dy
    std::vector<double> Qn_;

    double partial(std::size_t k, double x, double Qx) const {
        auto integrand = [&](double y) { return std::exp(flows_->hazard_Q(y) - Qx) * f_(y); };
        return detail::gauss_pieces(integrand, f_.grid[k], x, breaks_);
    }
};

struct RestingTime {
    double value = 0.0;          // truncated integral over [0, mMax]
    double half_domain = 0.0;    // same over [0, mMax / 2]
    double ratio = 1.0;          // value / half_domain
    double threshold = 1.05;
    bool divergent = false;
};

inline nlohmann::json to_json(const RestingTime& t) {
    return {{"T_R", t.divergent ? nlohmann::json(nullptr) : nlohmann::json(t.value)},
            {"divergent", t.divergent},
            {"truncated_value", t.value},
            {"half_domain_value", t.half_domain},
            {"doubling_ratio", t.ratio},
            {"ratio_threshold", t.threshold}};
}

/// Mean resting time T_R = int int_{x >= y} e^{Q(y) - Q(x)} / g1(x) f(y) dx dy
/// = int R. Divergence is flagged when doubling the domain from mMax/2 to
/// mMax grows the estimate by more than `threshold`.
inline RestingTime mean_resting_time(const RestingProfile& R, double threshold = 1.05) {
    RestingTime t;
    t.threshold = threshold;
    const double M = R.density().grid.m_max;
    t.value = R.integral(M);
    t.half_domain = R.integral(0.5 * M);
    t.ratio = t.half_domain > 0.0 ? t.value / t.half_domain : INFINITY;
    t.divergent = !(t.ratio <= threshold);
    return t;
}

inline RestingTime mean_resting_time(std::shared_ptr<const FlowSolver> flows, const GridDensity& f_star,
                                     double threshold = 1.05) {
    return mean_resting_time(RestingProfile(std::move(flows), f_star), threshold);
}

/// Stationary density of the continuous-time process built from the
/// invariant density f* of the generational operator.
class StationaryProfile {
public:
    StationaryProfile(std::shared_ptr<const FlowSolver> flows, const GridDensity& f_star, double threshold = 1.05)
        : flows_(flows), R_(flows, f_star), T_R_(mean_resting_time(R_, threshold)) {
        c_ = T_R_.divergent ? 0.0 : 1.0 / (T_R_.value + flows_->spec().tau);
    }

    const FlowSolver& flows() const { return *flows_; }
    const GridDensity& f_star() const { return R_.density(); }
    const RestingProfile& resting_profile() const { return R_; }
    const RestingTime& resting_time() const { return T_R_; }
    double c() const { return c_; }

    /// f*_p(m) = psi'(m) f*(psi(m)): maturity density at entry to phase 2.
    double entry_density(double m) const {
        if (m < flows_->spec().mP) return 0.0;
        return flows_->psi_prime(m) * f_star()(flows_->psi(m));
    }

    double phase_density(double a, double m, Phase i) const {
        if (a < 0.0) return 0.0;
        const FlowSolver& fl = *flows_;
        const ModelSpec& s = fl.spec();
        double x;
        try {
            x = fl.flow(i, -a, m);
        } catch (const DomainExit&) {
            return 0.0;
        }
        if (i == Phase::Resting) {
            if (x < 0.0) return 0.0;
            return c_ * s.g1(x) / s.g1(m) * f_star()(x) * std::exp(fl.hazard_Q(x) - fl.hazard_Q(m));
        }
        // same slack as psi: a backward flow from pi_2(tau, mP) may land a rounding error short
        if (a > s.tau || x < s.mP - 1e-9) return 0.0;
        x = std::max(x, s.mP);
        return c_ * s.g2(x) / s.g2(m) * entry_density(x);
    }

    /// f-bar*(m, 1) on the grid of f*.
    GridDensity marginal_resting() const {
        GridDensity out(f_star().grid);
        for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] = c_ * R_(out.grid[k]);
        return out;
    }

private:
    std::shared_ptr<const FlowSolver> flows_;
    RestingProfile R_;
    RestingTime T_R_;
    double c_ = 0.0;
};

inline double stationary_phase_density(const StationaryProfile& p, double a, double m, Phase i) {
    return p.phase_density(a, m, i);
}

inline GridDensity marginal_resting(const StationaryProfile& p) { return p.marginal_resting(); }

/// Age integral of the resting-phase density at maturity m, by adaptive
/// quadrature over the age range reachable from maturity 0.
inline double age_integrated_resting(const StationaryProfile& p, double m) {
    if (m <= 0.0) return 0.0;
    const double a_top = p.flows().resting_travel_time(0.0, m);
    // kinks in age sit where the backward characteristic crosses a grid node
    const UniformGrid& g = p.f_star().grid;
    std::vector<double> cuts;
    for (std::size_t k = 0; k < g.size() && g[k] < m; ++k) cuts.push_back(p.flows().resting_travel_time(g[k], m));
    for (double b : detail::hazard_breaks(p.flows().spec()))
        if (b > 0.0 && b < m) cuts.push_back(p.flows().resting_travel_time(b, m));
    cuts.push_back(0.0);
    cuts.push_back(a_top);
    std::sort(cuts.begin(), cuts.end());
    auto f = [&](double a) { return p.phase_density(a, m, Phase::Resting); };
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
        if (cuts[k + 1] > cuts[k]) s += detail::gk_integrate(f, cuts[k], cuts[k + 1], 1e-12);
    return s;
}

struct ClassificationReport {
    Verdict discrete_verdict = Verdict::Inconclusive;
    Verdict continuous_verdict = Verdict::Inconclusive;
    DiscreteClassification discrete;
    std::optional<IterationOutcome> iteration;
    std::size_t iterations = 0;
    std::optional<RestingTime> resting_time;
    double c = 0.0;
    std::vector<std::string> notes;
};

inline nlohmann::json to_json(const ClassificationReport& r) {
    nlohmann::json diag = {{"alpha_tail_min", r.discrete.alpha_tail_min},
                           {"alpha_tail_max", r.discrete.alpha_tail_max},
                           {"alpha_inf", r.discrete.alpha_inf},
                           {"alpha_margin", r.discrete.margin},
                           {"tail_start", r.discrete.tail_start},
                           {"completely_mixing", r.discrete.completely_mixing},
                           {"power_iterations", r.iterations},
                           {"notes", r.notes}};
    diag["power_iteration"] = r.iteration ? nlohmann::json(to_string(*r.iteration)) : nlohmann::json(nullptr);
    nlohmann::json j = {{"discrete_verdict", to_string(r.discrete_verdict)},
                        {"continuous_verdict", to_string(r.continuous_verdict)},
                        {"alpha_liminf_bound", r.discrete.alpha_liminf_bound},
                        {"c", r.c},
                        {"diagnostics", diag}};
    if (r.resting_time) {
        j["T_R"] = r.resting_time->divergent ? nlohmann::json("inf") : nlohmann::json(r.resting_time->value);
        diag["resting_time"] = to_json(*r.resting_time);
        j["diagnostics"] = diag;
    } else {
        j["T_R"] = nullptr;
    }
    return j;
}

struct ClassifyOptions {
    DiscreteClassifyOptions discrete;
    PowerIterationOptions iteration;
    std::size_t grid_n = 2048;
    double divergence_threshold = 1.05;
};

/// Combines the alpha test, power iteration and the mean resting time.
/// Continuous verdict: with a fixed point, Stable iff T_R < inf; with a
/// sweeping P and phi declared bounded, Sweeping; with liminf alpha > 1 and
/// phi declared eventually positive, Stable; otherwise Inconclusive.
inline ClassificationReport classify(std::shared_ptr<const FlowSolver> flows, const ClassifyOptions& opt = {},
                                     std::optional<GridDensity>* fixed_point_out = nullptr) {
    ClassificationReport r;
    const ModelSpec& spec = flows->spec();
    r.discrete = classify_discrete(*flows, opt.discrete);

    std::optional<GridDensity> fstar;
    bool p_sweeping = r.discrete.verdict == Verdict::Sweeping;
    try {
        const KernelMatrix K(flows, UniformGrid{spec.mMax, opt.grid_n});
        const auto it = power_iterate(K, GridDensity::uniform(K.grid(), 0.0, spec.mMax), opt.iteration);
        r.iteration = it.outcome;
        r.iterations = it.iterations;
        if (it.fixed_point) fstar = it.fixed_point;
        if (it.outcome == IterationOutcome::Sweeping) p_sweeping = true;
    } catch (const RangeError& e) {
        r.notes.push_back(std::string("kernel not built: ") + e.what());
    }

    if (r.discrete.verdict != Verdict::Inconclusive) {
        r.discrete_verdict = r.discrete.verdict;
        if (r.discrete.verdict == Verdict::Stable && !fstar)
            r.notes.push_back("alpha test says Stable but power iteration did not converge within its budget");
    } else if (fstar) {
        r.discrete_verdict = Verdict::Stable;
        r.notes.push_back("discrete verdict from convergence of power iteration");
    } else if (p_sweeping) {
        r.discrete_verdict = Verdict::Sweeping;
        r.notes.push_back("discrete verdict from monotone mass loss under power iteration");
    }

    const bool shortcut = r.discrete.alpha_liminf_bound > 1.0 + r.discrete.margin && spec.phi_eventually_positive;
    if (fstar) {
        const StationaryProfile prof(flows, *fstar, opt.divergence_threshold);
        r.resting_time = prof.resting_time();
        r.c = prof.c();
        if (!r.resting_time->divergent) {
            r.continuous_verdict = Verdict::Stable;
        } else if (shortcut) {
            r.continuous_verdict = Verdict::Inconclusive;
            r.notes.push_back("phi declared bounded below, yet the resting-time estimate diverges; refusing to decide");
        } else {
            r.continuous_verdict = Verdict::Sweeping;
            r.notes.push_back(
                "T_R = inf taken as sweeping; this implication is a heuristic without rigorous proof, reported as "
                "evidence");
        }
        if (fixed_point_out) *fixed_point_out = fstar;
    } else if (p_sweeping && spec.phi_bounded) {
        r.continuous_verdict = Verdict::Sweeping;
        r.notes.push_back("P sweeping and phi declared bounded: the semigroup is sweeping");
    } else if (shortcut) {
        r.continuous_verdict = Verdict::Stable;
        r.notes.push_back("liminf alpha > 1 with phi declared bounded below: the semigroup is asymptotically stable");
    } else {
        r.continuous_verdict = Verdict::Inconclusive;
        r.notes.push_back("no fixed point and no declared phi bound applies");
    }
    return r;
}

inline ClassificationReport classify_continuous(const ModelSpec& spec, const ClassifyOptions& opt = {}) {
    return classify(std::make_shared<const FlowSolver>(spec), opt);
}

} // namespace cellcycle
