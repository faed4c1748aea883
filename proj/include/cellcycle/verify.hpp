#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "counterexample.hpp"
#include "master_pde.hpp"
#include "pdmp.hpp"
#include "stationary.hpp"
#include "stats.hpp"

namespace cellcycle {

enum class RowVerdict { Pass, Fail, Skipped };

inline const char* to_string(RowVerdict v) {
    switch (v) {
    case RowVerdict::Pass: return "PASS";
    case RowVerdict::Fail: return "FAIL";
    case RowVerdict::Skipped: return "SKIPPED";
    }
    return "?";
}

/// One cross-check: a statistic compared against a threshold.
struct CheckRow {
    std::string name;
    double statistic = NAN;
    std::string relation = "<"; // statistic `relation` threshold passes
    double threshold = NAN;
    RowVerdict verdict = RowVerdict::Skipped;
    std::string detail;
};

inline CheckRow make_row(std::string name, double stat, std::string relation, double threshold,
                         std::string detail = {}) {
    CheckRow r{std::move(name), stat, std::move(relation), threshold, RowVerdict::Fail, std::move(detail)};
    bool ok = false;
    if (r.relation == "<") ok = stat < threshold;
    else if (r.relation == "<=") ok = stat <= threshold;
    else if (r.relation == ">") ok = stat > threshold;
    else if (r.relation == ">=") ok = stat >= threshold;
    else throw Error("make_row: unknown relation " + r.relation);
    r.verdict = ok ? RowVerdict::Pass : RowVerdict::Fail;
    return r;
}

inline CheckRow skipped_row(std::string name, std::string why) {
    CheckRow r;
    r.name = std::move(name);
    r.detail = std::move(why);
    return r;
}

struct VerifyReport {
    std::vector<CheckRow> rows;

    /// No row failed (skipped rows do not count against).
    bool passed() const {
        for (const auto& r : rows)
            if (r.verdict == RowVerdict::Fail) return false;
        return true;
    }
    const CheckRow* find(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return &r;
        return nullptr;
    }
};

inline nlohmann::json to_json(const CheckRow& r) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"name", r.name},       {"statistic", num(r.statistic)}, {"relation", r.relation},
            {"threshold", num(r.threshold)}, {"verdict", to_string(r.verdict)}, {"detail", r.detail}};
}

inline nlohmann::json to_json(const VerifyReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) rows.push_back(to_json(r));
    return {{"rows", rows}, {"passed", rep.passed()}};
}

inline std::string format_table(const VerifyReport& rep) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "check" << std::setw(14) << "statistic" << std::setw(16) << "threshold"
       << "verdict\n";
    for (const auto& r : rep.rows) {
        std::ostringstream st, th;
        st << std::setprecision(4);
        if (std::isfinite(r.statistic)) st << r.statistic;
        else st << "-";
        if (std::isfinite(r.threshold)) th << r.relation << ' ' << std::setprecision(4) << r.threshold;
        else th << "-";
        os << std::setw(28) << r.name << std::setw(14) << st.str() << std::setw(16) << th.str() << to_string(r.verdict);
        if (!r.detail.empty()) os << "  (" << r.detail << ")";
        os << '\n';
    }
    return os.str();
}

namespace detail {

/// Probability of each bin [k w, (k + 1) w) under a density, Simpson on
/// `sub` pieces per bin.
inline std::vector<double> bin_probabilities(const std::function<double(double)>& f, double width, std::size_t bins,
                                             int sub = 8) {
    std::vector<double> p(bins, 0.0);
    const double h = width / sub;
    for (std::size_t b = 0; b < bins; ++b)
        for (int k = 0; k < sub; ++k) {
            const double x0 = width * static_cast<double>(b) + k * h;
            p[b] += h / 6.0 * (f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h));
        }
    return p;
}

inline std::string show(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

inline double l1_of_bins(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
    return s;
}

} // namespace detail

struct VerifyOptions {
    std::size_t trajectories = 10000; // continuous ensemble; 0 skips every statistical row
    std::size_t chains = 100000;      // generational chains from m0
    std::size_t generations = 50;
    double m0 = 0.0;
    double horizon = 1000.0;
    double sample_dt = 10.0;
    double burn_in = 100.0;
    double bin_width = 0.2;
    std::size_t grid_n = 8192;           // grid of f* for the stationary rows
    std::size_t conjugacy_grid_n = 2048;
    double pde_dm = 1e-2;
    double pde_t_end = 10.0;
    double ks_alpha = 0.05;
    std::uint64_t seed = 20240501;
    unsigned threads = 0;
    // Test hook: the KS oracle uses (1 + p) Q, as if the kernel were off.
    double kernel_perturbation = 0.0;
};

namespace detail {

// Histogram L1 thresholds hold at the default budget; below it the sampling
// noise grows like 1/sqrt(n), and so does the threshold.
inline double noise_scaled(double base, std::size_t n, std::size_t n_ref) {
    return base * std::sqrt(std::max(1.0, static_cast<double>(n_ref) / static_cast<double>(n)));
}

} // namespace detail

/// Bridge tests between the generational operator, the process, the
/// stationary densities and the transport equation.
inline VerifyReport verify(std::shared_ptr<const FlowSolver> flows, const VerifyOptions& opt = {}) {
    VerifyReport rep;
    const FlowSolver& fl = *flows;
    const ModelSpec& s = fl.spec();
    const bool stat = opt.trajectories > 0 && opt.chains > 0;
    const std::string no_budget = "trajectory budget is 0";

    std::optional<GridDensity> fstar;
    std::string no_fstar = "power iteration found no fixed point";
    try {
        const KernelMatrix K(flows, UniformGrid{s.mMax, opt.grid_n});
        const auto it = power_iterate(K, GridDensity::uniform(K.grid(), 0.0, s.mMax));
        fstar = it.fixed_point;
        if (!fstar) no_fstar += std::string(" (") + to_string(it.outcome) + ")";
    } catch (const RangeError& e) {
        no_fstar = e.what();
    }
    std::optional<StationaryProfile> prof;
    std::string no_prof = no_fstar;
    if (fstar) {
        prof.emplace(flows, *fstar);
        if (prof->resting_time().divergent) {
            no_prof = "T_R diverges: no stationary density";
            prof.reset();
        }
    }

    // generational chains
    if (!stat) {
        rep.rows.push_back(skipped_row("generation1_ks", no_budget));
        rep.rows.push_back(skipped_row("generation_n_l1", no_budget));
    } else {
        std::vector<GenerationChain> chains(opt.chains);
        const std::uint64_t seed = Rng::mix(opt.seed + 1);
        parallel_for(
            opt.chains,
            [&](std::size_t k) {
                Rng rng = Rng::substream(seed, k);
                chains[k] = simulate_generations(fl, opt.m0, opt.generations, rng);
            },
            opt.threads);
        std::vector<double> first;
        std::size_t escaped = 0;
        for (const auto& c : chains) {
            if (c.escaped) ++escaped;
            if (!c.newborn.empty()) first.push_back(c.newborn.front());
        }
        const double Q0 = fl.hazard_Q(opt.m0);
        const double p = opt.kernel_perturbation;
        auto cdf = [&](double m) {
            double lam;
            try {
                lam = fl.lambda_fn(m);
            } catch (const RangeError&) {
                return 1.0;
            }
            if (lam <= opt.m0) return 0.0;
            return -std::expm1((1.0 + p) * (Q0 - fl.hazard_Q(lam)));
        };
        if (first.empty()) {
            rep.rows.push_back(skipped_row("generation1_ks", "every chain escaped"));
        } else {
            const double D = ks_statistic(first, cdf);
            rep.rows.push_back(make_row("generation1_ks", D, "<", ks_critical(first.size(), opt.ks_alpha),
                                        std::to_string(first.size()) + " samples from m0"));
        }
        if (!fstar) {
            rep.rows.push_back(skipped_row("generation_n_l1", no_fstar));
        } else {
            const double w = opt.bin_width;
            const auto bins = static_cast<std::size_t>(std::ceil(std::min(s.mMax, 40.0) / w));
            std::vector<double> emp(bins, 0.0);
            for (const auto& c : chains) {
                // escaped chains are mass outside every bin
                if (c.escaped || c.newborn.size() < opt.generations) continue;
                const auto b = static_cast<std::size_t>(c.newborn.back() / w);
                if (b < bins) emp[b] += 1.0;
            }
            for (double& v : emp) v /= static_cast<double>(chains.size());
            const GridDensity& f = *fstar;
            const auto ref = detail::bin_probabilities([&f](double m) { return f(m); }, w, bins);
            rep.rows.push_back(make_row("generation_n_l1", detail::l1_of_bins(emp, ref), "<",
                                        detail::noise_scaled(0.02, opt.chains, 100000),
                                        "generation " + std::to_string(opt.generations) + ", " +
                                            std::to_string(escaped) + " escaped"));
        }
    }

    // continuous ensemble
    if (!stat || !prof) {
        const std::string why = !stat ? no_budget : no_prof;
        for (const char* n : {"phase2_occupancy", "resting_marginal_l1", "phase2_age_uniform_l1"})
            rep.rows.push_back(skipped_row(n, why));
    } else {
        EnsembleOptions eo;
        eo.trajectories = opt.trajectories;
        eo.horizon = opt.horizon;
        eo.sample_dt = opt.sample_dt;
        eo.burn_in = opt.burn_in;
        eo.threads = opt.threads;
        const EnsembleResult ens = run_ensemble(fl, {0.0, opt.m0, Phase::Resting}, Rng::mix(opt.seed + 2), eo);
        const double ct = prof->c() * s.tau;
        rep.rows.push_back(make_row("phase2_occupancy", std::abs(ens.mean_phase2_occupancy - ct), "<=", 0.01,
                                    "occupancy " + detail::show(ens.mean_phase2_occupancy) + " vs c tau " +
                                        detail::show(ct)));
        const double w = opt.bin_width / 2.0;
        const auto bins = static_cast<std::size_t>(std::ceil(std::min(s.mMax, 40.0) / w));
        std::vector<double> emp(bins, 0.0);
        const std::size_t na = 20;
        std::vector<double> ages(na, 0.0);
        std::size_t n2 = 0;
        for (const PdmpState& x : ens.stationary_samples) {
            if (x.i == Phase::Resting) {
                const auto b = static_cast<std::size_t>(x.m / w);
                if (b < bins) emp[b] += 1.0;
            } else {
                ++n2;
                ages[std::min(na - 1, static_cast<std::size_t>(x.a / s.tau * na))] += 1.0;
            }
        }
        const double n = static_cast<double>(ens.stationary_samples.size());
        for (double& v : emp) v /= n;
        const StationaryProfile& P = *prof;
        const auto ref =
            detail::bin_probabilities([&P](double m) { return P.c() * P.resting_profile()(m); }, w, bins);
        rep.rows.push_back(make_row("resting_marginal_l1", detail::l1_of_bins(emp, ref), "<",
                                        detail::noise_scaled(0.03, opt.trajectories, 10000),
                                    std::to_string(ens.stationary_samples.size()) + " samples, " +
                                        std::to_string(ens.escaped) + " escaped"));
        double l1 = 0.0;
        for (double v : ages) l1 += std::abs(v / static_cast<double>(std::max<std::size_t>(n2, 1)) - 1.0 / na);
        rep.rows.push_back(make_row("phase2_age_uniform_l1", l1, "<", detail::noise_scaled(0.02, opt.trajectories, 10000)));
    }

    // deterministic bridges
    if (!prof) {
        for (const char* n : {"pde_stationary_drift", "stationary_residual", "boundary_r", "boundary_p"})
            rep.rows.push_back(skipped_row(n, no_prof));
    } else {
        const StationaryProfile& P = *prof;
        PdeOptions po;
        po.dm = opt.pde_dm;
        const auto n = static_cast<std::size_t>(std::llround(s.mMax / po.dm));
        std::vector<double> R0(n + 1);
        for (std::size_t k = 0; k <= n; ++k) R0[k] = P.c() * P.resting_profile()(s.mMax * k / n);
        DelayField field(flows, R0, po);
        evolve(field, opt.pde_t_end);
        double drift = 0.0;
        for (std::size_t k = 1; k <= n; ++k) drift += std::abs(field.profile()[k] - R0[k]);
        drift *= field.dm();
        rep.rows.push_back(make_row("pde_stationary_drift", drift, "<", 1e-3,
                                    "L1 change of c R over t = " + detail::show(opt.pde_t_end)));

        const GridDensity cR = P.marginal_resting();
        const StationaryResidual res = stationary_residual(fl, cR);
        rep.rows.push_back(make_row("stationary_residual", res.l1, "<", 1e-4));

        const BoundaryCheck b = boundary_consistency_check(P);
        rep.rows.push_back(make_row("boundary_r", b.brzeg_r, "<", 1e-8));
        rep.rows.push_back(make_row("boundary_p", b.brzeg_p, "<", 1e-6));
    }

    // P U = U Ptilde on a uniform density inside [mP, psi(mMax)]
    try {
        const UniformGrid g{s.mMax, opt.conjugacy_grid_n};
        const double top = std::min(s.mP + 4.0, fl.psi(s.mMax));
        // the node below the support must not lie under mP
        GridDensity f = GridDensity::from_function(g, [&](double m) { return (m > s.mP + g.step() && m <= top) ? 1.0 : 0.0; });
        f.normalize();
        const ConjugacyResult cj = conjugate_check(fl, f);
        rep.rows.push_back(make_row("conjugacy", cj.discrepancy, "<", 5e-6));
    } catch (const Error& e) {
        rep.rows.push_back(skipped_row("conjugacy", e.what()));
    }
    return rep;
}

struct CounterexampleVerifyOptions {
    std::size_t trajectories = 2000; // PDMP rows; 0 skips them
    std::vector<double> horizons = {1e2, 1e3, 1e4};
    double pdmp_M = 5.0;
    double pde_M = 10.0;
    double pde_t_end = 50.0;
    double pde_dm = 1e-2;
    std::pair<double, double> pde_support = {8.0, 10.0};
    std::pair<double, double> flat_range = {3.0, 60.0};
    std::uint64_t seed = 11;
    unsigned threads = 0;
};

struct CounterexampleRun {
    ClassificationReport classification;
    VerifyReport checks;
    std::vector<std::pair<double, double>> pde_population; // (t, population on [0, M])
    std::vector<std::pair<double, double>> pdmp_fraction;  // (horizon, share with m <= M)
    std::optional<GridDensity> f_star;
};

/// The paired verdicts for the counterexample and the evidence behind them.
inline CounterexampleRun verify_counterexample(const Counterexample& ce, const CounterexampleVerifyOptions& opt = {},
                                               const SnapshotFn& pde_snapshot = {}, std::size_t snapshot_every = 0) {
    CounterexampleRun run;
    auto flows = std::make_shared<const FlowSolver>(ce.spec);
    const FlowSolver& fl = *flows;
    const ModelSpec& s = ce.spec;
    auto& rows = run.checks.rows;

    ClassifyOptions co;
    co.grid_n = ce.f_star.grid.n;
    co.iteration.polish = 1000;
    run.classification = classify(flows, co, &run.f_star);
    const ClassificationReport& cr = run.classification;

    rows.push_back(make_row("alpha_tail_deviation",
                            std::max(std::abs(cr.discrete.alpha_tail_min - 2.0), std::abs(cr.discrete.alpha_tail_max - 2.0)),
                            "<", 1e-6, "alpha on the tail should be 2"));
    rows.push_back(make_row("discrete_liminf_bound", cr.discrete.alpha_liminf_bound, ">", 1.0 + cr.discrete.margin,
                            std::string("discrete verdict ") + to_string(cr.discrete_verdict)));
    {
        CheckRow r;
        r.name = "power_iteration";
        r.detail = cr.iteration ? to_string(*cr.iteration) : "not run";
        r.verdict = run.f_star ? RowVerdict::Pass : RowVerdict::Fail;
        rows.push_back(r);
    }
    if (cr.resting_time) {
        rows.push_back(make_row("resting_time_doubling_ratio", cr.resting_time->ratio, ">", cr.resting_time->threshold,
                                std::string("continuous verdict ") + to_string(cr.continuous_verdict)));
    } else {
        rows.push_back(skipped_row("resting_time_doubling_ratio", "no fixed point"));
    }
    {
        CheckRow r;
        r.name = "verdict_pair";
        r.detail = std::string(to_string(cr.discrete_verdict)) + "/" + to_string(cr.continuous_verdict);
        r.verdict = cr.discrete_verdict == Verdict::Stable && cr.continuous_verdict == Verdict::Sweeping
                        ? RowVerdict::Pass
                        : RowVerdict::Fail;
        rows.push_back(r);
    }

    if (run.f_star) {
        const RestingProfile R(flows, *run.f_star);
        const UniformGrid& g = run.f_star->grid;
        double lo = INFINITY, hi = -INFINITY, sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (g[k] < opt.flat_range.first || g[k] > opt.flat_range.second) continue;
            const double v = R(g[k]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
            ++cnt;
        }
        rows.push_back(make_row("resting_profile_flatness", (hi - lo) / (sum / cnt), "<", 1e-4,
                                "relative range of R on the tail"));
    } else {
        rows.push_back(skipped_row("resting_profile_flatness", "no fixed point"));
    }

    {
        const UniformGrid g = ce.f_star.grid;
        const GridDensity one = GridDensity::from_function(g, [](double) { return 1.0; });
        const StationaryResidual res =
            stationary_residual(fl, one, opt.flat_range.first + 3.0 * g.step(), opt.flat_range.second);
        rows.push_back(make_row("constant_R_residual", res.l1, "<", 1e-6, "R = 1 on the tail"));
    }

    {
        PdeOptions po;
        po.dm = opt.pde_dm;
        const auto n = static_cast<std::size_t>(std::llround(s.mMax / po.dm));
        std::vector<double> R0(n + 1);
        for (std::size_t k = 0; k <= n; ++k) {
            const double m = s.mMax * k / n;
            R0[k] = (m >= opt.pde_support.first && m <= opt.pde_support.second) ? 1.0 : 0.0;
        }
        DelayField field(flows, R0, po);
        double prev = field.population_below(opt.pde_M);
        const double first = prev;
        run.pde_population.emplace_back(0.0, prev);
        std::size_t increases = 0, k = 0;
        while (field.t() < opt.pde_t_end - 0.5 * field.dt()) {
            field.step();
            ++k;
            const double cur = field.population_below(opt.pde_M);
            if (cur > prev) ++increases;
            prev = cur;
            run.pde_population.emplace_back(field.t(), cur);
            if (pde_snapshot && snapshot_every > 0 && k % snapshot_every == 0) pde_snapshot(field);
        }
        rows.push_back(make_row("pde_population_increases", static_cast<double>(increases), "<=", 0.0,
                                "steps where cells on [0, " + detail::show(opt.pde_M) + "] grew"));
        rows.push_back(make_row("pde_population_ratio", prev / first, "<", 1.0, "final over initial"));
    }

    if (opt.trajectories == 0) {
        rows.push_back(skipped_row("pdmp_fraction_declines", "trajectory budget is 0"));
    } else {
        std::size_t rises = 0;
        double last = INFINITY;
        for (double H : opt.horizons) {
            const BoundedFraction b =
                fraction_at_most(fl, {0.0, 0.0, Phase::Resting}, opt.pdmp_M, H, opt.trajectories, opt.seed, opt.threads);
            run.pdmp_fraction.emplace_back(H, b.fraction);
            if (!(b.fraction < last)) ++rises;
            last = b.fraction;
        }
        rows.push_back(make_row("pdmp_fraction_declines", static_cast<double>(rises), "<=", 0.0,
                                "horizons where the share with m <= " + detail::show(opt.pdmp_M) +
                                    " did not drop; last " + detail::show(last)));
    }
    return run;
}

} // namespace cellcycle
