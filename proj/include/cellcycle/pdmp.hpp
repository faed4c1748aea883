#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flows.hpp"
#include "parallel.hpp"

namespace cellcycle {

/// mt19937_64 seeded from (master seed, stream index) through splitmix64, so
/// trajectory k draws the same numbers whichever thread runs it.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    static Rng substream(std::uint64_t master, std::uint64_t index) {
        return Rng(mix(mix(master) ^ (index + 0x9e3779b97f4a7c15ULL)));
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1p-53; }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
};

struct PdmpState {
    double a = 0.0;
    double m = 0.0;
    Phase i = Phase::Resting;
    bool operator==(const PdmpState&) const = default;
};

/// Membership in the state space: a resting cell has m >= pi_1(a, 0); a
/// proliferating cell has a in [0, tau] and m >= pi_2(a, mP).
inline bool in_state_space(const FlowSolver& fl, const PdmpState& s, double tol = 1e-9) {
    if (!(s.a >= 0.0) || !(s.m >= 0.0)) return false;
    if (s.i == Phase::Resting) return s.m >= fl.flow(Phase::Resting, s.a, 0.0) - tol;
    if (s.a > fl.spec().tau + tol) return false;
    return s.m >= fl.flow(Phase::Proliferating, s.a, fl.spec().mP) - tol;
}

struct RestingSample {
    double duration = 0.0;
    double m_entry = 0.0; // maturity when the cell enters phase 2
};

/// Resting time from maturity m0 by hazard inversion: E = -ln(1-u),
/// m* = Q^{-1}(Q(m0) + E), t = travel time from m0 to m*.
inline RestingSample sample_resting_time(const FlowSolver& fl, double m0, double u) {
    if (!(m0 >= 0.0)) throw DomainError("sample_resting_time: m0 must be nonnegative");
    if (!(u >= 0.0 && u < 1.0)) throw DomainError("sample_resting_time: u must lie in [0, 1)");
    const double E = -std::log1p(-u);
    const double target = fl.hazard_Q(m0) + E;
    const double m_star = std::max(fl.hazard_Q_inverse(target), m0);
    return {fl.resting_travel_time(m0, m_star), m_star};
}

enum class EventKind { EnterProliferation, Division };

inline const char* to_string(EventKind k) {
    return k == EventKind::EnterProliferation ? "EnterProliferation" : "Division";
}

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::EnterProliferation;
    double m_before = 0.0;
    double m_after = 0.0;
};

struct StepResult {
    double dt = 0.0;
    PdmpState next;
    Event event; // time is the offset dt
};

/// Advances a state to its next jump. Mid-phase states (a > 0) are allowed:
/// the resting exit depends only on the current maturity, and a
/// proliferating cell divides after the remaining tau - a.
inline StepResult step(const FlowSolver& fl, const PdmpState& s, Rng& rng) {
    StepResult r;
    if (s.i == Phase::Resting) {
        const RestingSample rs = sample_resting_time(fl, s.m, rng.uniform());
        r.dt = rs.duration;
        r.next = {0.0, rs.m_entry, Phase::Proliferating};
        r.event = {r.dt, EventKind::EnterProliferation, rs.m_entry, rs.m_entry};
    } else {
        const double tau = fl.spec().tau;
        r.dt = std::max(tau - s.a, 0.0);
        const double before = fl.flow(Phase::Proliferating, r.dt, s.m);
        const double after = fl.spec().h(before);
        if (after < 0.0) throw DomainError("step: h maps outside [0, inf)");
        r.next = {0.0, after, Phase::Resting};
        r.event = {r.dt, EventKind::Division, before, after};
    }
    return r;
}

struct GenerationChain {
    std::vector<double> newborn; // m_1, ..., m_k
    bool escaped = false;
};

/// Newborn maturities along one line of descent: m_{k+1} = psi(m* of m_k).
inline GenerationChain simulate_generations(const FlowSolver& fl, double m0, std::size_t n_gen, Rng& rng) {
    GenerationChain c;
    c.newborn.reserve(n_gen);
    double m = m0;
    for (std::size_t k = 0; k < n_gen; ++k) {
        try {
            const RestingSample rs = sample_resting_time(fl, m, rng.uniform());
            m = fl.psi(rs.m_entry);
        } catch (const RangeError&) {
            c.escaped = true;
            break;
        }
        c.newborn.push_back(m);
    }
    return c;
}

struct Trajectory {
    std::uint64_t seed = 0;
    std::vector<Event> events;
    std::vector<std::pair<double, PdmpState>> samples;
    bool escaped = false;
    double end_time = 0.0; // horizon, or the time of the last jump before escape
};

/// State at time `elapsed` after a jump into `s` (no jump in between).
inline PdmpState drift(const FlowSolver& fl, const PdmpState& s, double elapsed) {
    return {s.a + elapsed, fl.flow(s.i, elapsed, s.m), s.i};
}

/// Runs the process from x0 up to `horizon`, recording states at
/// sample_offset + k * sample_dt (none when sample_dt <= 0).
inline Trajectory simulate_continuous(const FlowSolver& fl, const PdmpState& x0, double horizon, double sample_dt,
                                      Rng& rng, std::uint64_t seed_label = 0, double sample_offset = 0.0) {
    if (!in_state_space(fl, x0)) throw DomainError("simulate_continuous: initial state outside the state space");
    Trajectory tr;
    tr.seed = seed_label;
    double t = 0.0;
    PdmpState cur = x0;
    std::size_t next_sample = 0;
    auto record_until = [&](double t_limit, const PdmpState& from, double t_from) {
        if (sample_dt <= 0.0) return;
        for (;;) {
            const double ts = sample_offset + static_cast<double>(next_sample) * sample_dt;
            if (ts > horizon || ts >= t_limit) break;
            tr.samples.emplace_back(ts, drift(fl, from, ts - t_from));
            ++next_sample;
        }
    };
    while (t < horizon) {
        StepResult st;
        try {
            st = step(fl, cur, rng);
        } catch (const RangeError&) {
            tr.escaped = true;
            break;
        }
        const double t_next = t + st.dt;
        record_until(std::min(t_next, horizon + sample_dt), cur, t);
        if (t_next > horizon) break;
        st.event.time = t_next;
        tr.events.push_back(st.event);
        t = t_next;
        cur = st.next;
    }
    if (!tr.escaped) {
        record_until(horizon + 0.5 * sample_dt, cur, t);
        tr.end_time = horizon;
    } else {
        tr.end_time = t;
    }
    return tr;
}

/// Fraction of [0, end_time] spent in phase 2, from the event log.
inline double phase2_occupancy(const Trajectory& tr, Phase initial) {
    if (!(tr.end_time > 0.0)) return 0.0;
    double t_prev = 0.0, in2 = 0.0;
    Phase ph = initial;
    for (const Event& e : tr.events) {
        if (ph == Phase::Proliferating) in2 += e.time - t_prev;
        ph = e.kind == EventKind::EnterProliferation ? Phase::Proliferating : Phase::Resting;
        t_prev = e.time;
    }
    if (ph == Phase::Proliferating) in2 += tr.end_time - t_prev;
    return in2 / tr.end_time;
}

inline void write_events_csv(const Trajectory& tr, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "time,kind,m_before,m_after\n" << std::setprecision(17);
    for (const Event& e : tr.events)
        out << e.time << ',' << to_string(e.kind) << ',' << e.m_before << ',' << e.m_after << '\n';
}

/// Piecewise-constant density on a rectangle of (age, maturity) bins.
struct Histogram2D {
    double a_max = 1.0, m_max = 1.0;
    std::size_t na = 1, nm = 1;
    std::vector<double> values; // density per bin, row-major in age

    double da() const { return a_max / static_cast<double>(na); }
    double dm() const { return m_max / static_cast<double>(nm); }
    double& at(std::size_t ia, std::size_t im) { return values[ia * nm + im]; }
    double at(std::size_t ia, std::size_t im) const { return values[ia * nm + im]; }

    double mass() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * da() * dm();
    }

    /// Density of m after integrating out age, one value per maturity bin.
    std::vector<double> maturity_marginal() const {
        std::vector<double> out(nm, 0.0);
        for (std::size_t ia = 0; ia < na; ++ia)
            for (std::size_t im = 0; im < nm; ++im) out[im] += at(ia, im) * da();
        return out;
    }

    std::vector<double> age_marginal() const {
        std::vector<double> out(na, 0.0);
        for (std::size_t ia = 0; ia < na; ++ia)
            for (std::size_t im = 0; im < nm; ++im) out[ia] += at(ia, im) * dm();
        return out;
    }
};

struct HistogramLayout {
    double a_max = 10.0;
    std::size_t na = 100;
    double m_max = 10.0;
    std::size_t nm = 100;
};

/// Per-phase histograms; each is scaled by its share of the sample, so the
/// two masses plus the out-of-range share sum to 1.
struct PhaseHistograms {
    Histogram2D resting, proliferating;
    std::size_t count = 0;
    double out_of_range = 0.0;
};

inline PhaseHistograms ensemble_histogram(const std::vector<PdmpState>& states, const HistogramLayout& lay) {
    if (states.empty()) throw EmptySample("ensemble_histogram: no states");
    if (lay.na == 0 || lay.nm == 0 || !(lay.a_max > 0.0) || !(lay.m_max > 0.0))
        throw DomainError("ensemble_histogram: empty bin layout");
    PhaseHistograms h;
    for (Histogram2D* g : {&h.resting, &h.proliferating}) {
        g->a_max = lay.a_max;
        g->m_max = lay.m_max;
        g->na = lay.na;
        g->nm = lay.nm;
        g->values.assign(lay.na * lay.nm, 0.0);
    }
    const double w = 1.0 / (static_cast<double>(states.size()) * h.resting.da() * h.resting.dm());
    std::size_t outside = 0;
    for (const PdmpState& s : states) {
        const auto ia = static_cast<std::size_t>(s.a / h.resting.da());
        const auto im = static_cast<std::size_t>(s.m / h.resting.dm());
        if (s.a < 0.0 || s.m < 0.0 || ia >= lay.na || im >= lay.nm) {
            ++outside;
            continue;
        }
        (s.i == Phase::Resting ? h.resting : h.proliferating).at(ia, im) += w;
    }
    h.count = states.size();
    h.out_of_range = static_cast<double>(outside) / static_cast<double>(states.size());
    return h;
}

/// L1 distance between bin densities on [0, width * n] and a function,
/// integrating the function over each bin with Simpson's rule.
inline double binned_l1(const std::vector<double>& bins, double width, const std::function<double(double)>& f,
                        int sub = 8) {
    double s = 0.0;
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const double lo = width * static_cast<double>(b);
        const double h = width / sub;
        double acc = 0.0;
        for (int k = 0; k < sub; ++k) {
            const double x0 = lo + k * h;
            acc += h / 6.0 * (std::abs(bins[b] - f(x0)) + 4.0 * std::abs(bins[b] - f(x0 + 0.5 * h)) +
                              std::abs(bins[b] - f(x0 + h)));
        }
        s += acc;
    }
    return s;
}

struct EnsembleOptions {
    std::size_t trajectories = 10000;
    double horizon = 100.0;
    double sample_dt = 0.0;
    double burn_in = 0.0; // samples before this time are dropped
    // Shift each trajectory's sampling grid by U(0, sample_dt). Snapshots at
    // common times need not converge when growth is synchronous; time
    // averages do.
    bool random_sample_phase = true;
    unsigned threads = 0;
};

struct EnsembleResult {
    std::vector<Trajectory> trajectories;
    std::size_t escaped = 0;
    double mean_phase2_occupancy = 0.0;
    std::vector<PdmpState> stationary_samples; // samples after burn-in, in trajectory order
};

/// Independent trajectories from x0 with substream k of the master seed.
inline EnsembleResult run_ensemble(const FlowSolver& fl, const PdmpState& x0, std::uint64_t master_seed,
                                   const EnsembleOptions& opt, bool keep_trajectories = false) {
    std::vector<Trajectory> trs(opt.trajectories);
    parallel_for(
        opt.trajectories,
        [&](std::size_t k) {
            Rng rng = Rng::substream(master_seed, k);
            const double offset = opt.random_sample_phase ? rng.uniform() * opt.sample_dt : 0.0;
            trs[k] = simulate_continuous(fl, x0, opt.horizon, opt.sample_dt, rng, k, offset);
        },
        opt.threads);
    EnsembleResult r;
    double occ = 0.0;
    std::size_t counted = 0;
    for (auto& tr : trs) {
        if (tr.escaped) {
            ++r.escaped;
        } else {
            occ += phase2_occupancy(tr, x0.i);
            ++counted;
        }
        for (const auto& [t, s] : tr.samples)
            if (t >= opt.burn_in) r.stationary_samples.push_back(s);
    }
    r.mean_phase2_occupancy = counted ? occ / static_cast<double>(counted) : 0.0;
    if (keep_trajectories) r.trajectories = std::move(trs);
    return r;
}


struct BoundedFraction {
    double fraction = 0.0; // share of trajectories with m(horizon) <= M
    std::size_t escaped = 0;
    std::size_t trajectories = 0;
};

/// Share of n trajectories from x0 whose maturity at `horizon` is at most M.
/// Escaped trajectories left the domain, so they count as above M.
inline BoundedFraction fraction_at_most(const FlowSolver& fl, const PdmpState& x0, double M, double horizon,
                                        std::size_t n, std::uint64_t master_seed, unsigned threads = 0) {
    if (n == 0) throw EmptySample("fraction_at_most: no trajectories");
    std::vector<char> below(n, 0), esc(n, 0);
    parallel_for(
        n,
        [&](std::size_t k) {
            Rng rng = Rng::substream(master_seed, k);
            const Trajectory tr = simulate_continuous(fl, x0, horizon, horizon, rng, k, horizon);
            esc[k] = tr.escaped;
            below[k] = !tr.escaped && !tr.samples.empty() && tr.samples.back().second.m <= M;
        },
        threads);
    BoundedFraction r;
    r.trajectories = n;
    std::size_t count = 0;
    for (std::size_t k = 0; k < n; ++k) {
        count += below[k];
        r.escaped += esc[k];
    }
    r.fraction = static_cast<double>(count) / static_cast<double>(n);
    return r;
}

} // namespace cellcycle
