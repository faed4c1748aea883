#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace cellcycle;

namespace {

const FlowSolver& unit_flows() {
    static const FlowSolver fl(fixture::unit_model());
    return fl;
}

} // namespace

TEST(Resting, InversionAtKnownQuantile) {
    const RestingSample s = sample_resting_time(unit_flows(), 0.0, -std::expm1(-1.0));
    EXPECT_NEAR(s.duration, 3.0, 1e-12);
    EXPECT_NEAR(s.m_entry, 3.0, 1e-12);
    EXPECT_THROW(sample_resting_time(unit_flows(), 0.0, 1.0), DomainError);
    EXPECT_THROW(sample_resting_time(unit_flows(), -1.0, 0.5), DomainError);
}

TEST(Resting, MeanFromNewbornIsThree) {
    // t = 2 + E with E ~ Exp(1)
    Rng rng(99);
    const std::size_t n = 1000000;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += sample_resting_time(unit_flows(), 0.0, rng.uniform()).duration;
    EXPECT_NEAR(s / n, 3.0, 0.01);
}

TEST(Resting, HazardIsMemoryless) {
    // from m0 = 5 the entry maturity exceeds m0 by an Exp(1) amount
    Rng rng(5);
    std::vector<double> excess;
    for (int k = 0; k < 20000; ++k) excess.push_back(sample_resting_time(unit_flows(), 5.0, rng.uniform()).m_entry - 5.0);
    EXPECT_LT(ks_statistic(excess, oracle::exp_cdf), ks_critical(excess.size(), 0.01));
}

TEST(Step, RestingThenProliferating) {
    const FlowSolver& fl = unit_flows();
    Rng a(1), b(1);
    const StepResult r1 = step(fl, {0.0, 0.0, Phase::Resting}, a);
    const RestingSample ref = sample_resting_time(fl, 0.0, b.uniform());
    EXPECT_EQ(r1.event.kind, EventKind::EnterProliferation);
    EXPECT_DOUBLE_EQ(r1.dt, ref.duration);
    EXPECT_EQ(r1.next, (PdmpState{0.0, ref.m_entry, Phase::Proliferating}));

    const StepResult r2 = step(fl, {0.3, 4.3, Phase::Proliferating}, a);
    EXPECT_EQ(r2.event.kind, EventKind::Division);
    EXPECT_NEAR(r2.dt, 0.7, 1e-15);
    EXPECT_NEAR(r2.event.m_before, 5.0, 1e-12);
    EXPECT_NEAR(r2.next.m, 2.0, 1e-12);
    EXPECT_EQ(r2.next.i, Phase::Resting);
    EXPECT_EQ(r2.next.a, 0.0);
}

TEST(Generations, ZeroGenerationsIsEmpty) {
    Rng rng(3);
    const GenerationChain c = simulate_generations(unit_flows(), 0.0, 0, rng);
    EXPECT_TRUE(c.newborn.empty());
    EXPECT_FALSE(c.escaped);
}

TEST(Generations, FirstDaughterIsExponential) {
    // m_1 = psi(2 + E) = E
    std::vector<double> m1;
    for (std::uint64_t k = 0; k < 100000; ++k) {
        Rng rng = Rng::substream(17, k);
        m1.push_back(simulate_generations(unit_flows(), 0.0, 1, rng).newborn.at(0));
    }
    EXPECT_LT(ks_statistic(m1, oracle::exp_cdf), ks_critical(m1.size()));
}

TEST(Generations, FiftiethGenerationMatchesFixedPoint) {
    const std::size_t chains = 100000;
    std::vector<double> last;
    last.reserve(chains);
    for (std::uint64_t k = 0; k < chains; ++k) {
        Rng rng = Rng::substream(23, k);
        const GenerationChain c = simulate_generations(unit_flows(), 0.0, 50, rng);
        ASSERT_FALSE(c.escaped);
        last.push_back(c.newborn.back());
    }
    EXPECT_LT(oracle::histogram_l1(last, chains, oracle::fixed_point, 0.2, 150), 0.02);
}

TEST(Generations, SmallDomainEscapes) {
    const FlowSolver fl(fixture::unit_model(10.0));
    bool any = false;
    for (std::uint64_t k = 0; k < 50 && !any; ++k) {
        Rng rng = Rng::substream(4, k);
        const GenerationChain c = simulate_generations(fl, 0.0, 200, rng);
        any = c.escaped;
        if (c.escaped) EXPECT_LT(c.newborn.size(), 200u);
    }
    EXPECT_TRUE(any);
}

TEST(Continuous, EventsObeyTheDynamics) {
    const FlowSolver& fl = unit_flows();
    Rng rng(8);
    const Trajectory tr = simulate_continuous(fl, {0.0, 0.0, Phase::Resting}, 200.0, 0.5, rng);
    ASSERT_FALSE(tr.escaped);
    ASSERT_GT(tr.events.size(), 20u);
    for (std::size_t k = 0; k < tr.events.size(); ++k) {
        const Event& e = tr.events[k];
        EXPECT_EQ(e.kind, k % 2 ? EventKind::Division : EventKind::EnterProliferation);
        if (e.kind == EventKind::Division) {
            EXPECT_NEAR(e.m_after, e.m_before - 3.0, 1e-12);
            EXPECT_NEAR(e.time - tr.events[k - 1].time, 1.0, 1e-9);
            EXPECT_NEAR(e.m_before, tr.events[k - 1].m_after + 1.0, 1e-9);
        } else {
            EXPECT_GT(e.m_after, 2.0);
        }
        if (k) EXPECT_GE(e.time, tr.events[k - 1].time);
    }
    for (const auto& [t, s] : tr.samples) EXPECT_TRUE(in_state_space(fl, s)) << t;
    EXPECT_EQ(tr.samples.size(), 401u);
}

TEST(Continuous, StateSpaceMembership) {
    const FlowSolver& fl = unit_flows();
    EXPECT_TRUE(in_state_space(fl, {1.0, 1.0, Phase::Resting}));
    EXPECT_FALSE(in_state_space(fl, {1.5, 1.0, Phase::Resting}));
    EXPECT_TRUE(in_state_space(fl, {0.5, 2.5, Phase::Proliferating}));
    EXPECT_FALSE(in_state_space(fl, {0.5, 2.4, Phase::Proliferating}));
    EXPECT_FALSE(in_state_space(fl, {1.5, 9.0, Phase::Proliferating}));
    Rng rng(1);
    EXPECT_THROW(simulate_continuous(fl, {2.0, 1.0, Phase::Resting}, 10.0, 1.0, rng), DomainError);
}

TEST(Ensemble, DeterministicAndThreadInvariant) {
    const FlowSolver& fl = unit_flows();
    EnsembleOptions opt{.trajectories = 64, .horizon = 50.0, .sample_dt = 1.0, .burn_in = 10.0, .threads = 1};
    const auto a = run_ensemble(fl, {}, 42, opt, true);
    opt.threads = 4;
    const auto b = run_ensemble(fl, {}, 42, opt, true);
    ASSERT_EQ(a.stationary_samples.size(), b.stationary_samples.size());
    EXPECT_EQ(a.stationary_samples, b.stationary_samples);
    for (std::size_t k = 0; k < a.trajectories.size(); ++k) {
        ASSERT_EQ(a.trajectories[k].events.size(), b.trajectories[k].events.size());
        for (std::size_t e = 0; e < a.trajectories[k].events.size(); ++e)
            EXPECT_EQ(a.trajectories[k].events[e].time, b.trajectories[k].events[e].time);
    }
    const auto c = run_ensemble(fl, {}, 43, opt);
    EXPECT_NE(a.stationary_samples, c.stationary_samples);
}

TEST(Ensemble, OccupancyAndAge) {
    // cycle = resting time (mean 2) + tau = 1, so a third of the time is spent proliferating
    const FlowSolver& fl = unit_flows();
    const auto r = run_ensemble(fl, {}, 7, {.trajectories = 1000, .horizon = 500.0, .sample_dt = 5.0, .burn_in = 50.0});
    EXPECT_EQ(r.escaped, 0u);
    EXPECT_NEAR(r.mean_phase2_occupancy, 1.0 / 3.0, 0.01);

    std::vector<double> ages;
    for (const auto& s : r.stationary_samples)
        if (s.i == Phase::Proliferating) ages.push_back(s.a);
    const double share = static_cast<double>(ages.size()) / static_cast<double>(r.stationary_samples.size());
    EXPECT_NEAR(share, 1.0 / 3.0, 0.02);
    EXPECT_LT(ks_statistic(ages, [](double a) { return std::clamp(a, 0.0, 1.0); }), ks_critical(ages.size(), 0.01));
}

TEST(Ensemble, HistogramOfSingleState) {
    const HistogramLayout lay{.a_max = 2.0, .na = 4, .m_max = 10.0, .nm = 5};
    const auto h = ensemble_histogram({{0.6, 3.0, Phase::Proliferating}}, lay);
    EXPECT_NEAR(h.proliferating.mass(), 1.0, 1e-12);
    EXPECT_EQ(h.resting.mass(), 0.0);
    EXPECT_DOUBLE_EQ(h.proliferating.at(1, 1), 1.0 / (0.5 * 2.0));
    const auto out = ensemble_histogram({{0.6, 30.0, Phase::Resting}, {0.1, 1.0, Phase::Resting}}, lay);
    EXPECT_DOUBLE_EQ(out.out_of_range, 0.5);
    EXPECT_NEAR(out.resting.mass(), 0.5, 1e-12);
    EXPECT_THROW(ensemble_histogram({}, lay), EmptySample);
}

TEST(Ensemble, SweepingModelDrifts) {
    const FlowSolver fl(fixture::sweeping_model());
    double prev = 1.1;
    // net drift is about +2 per cycle of mean length 5
    for (double horizon : {4.0, 8.0, 16.0, 100.0}) {
        const auto f = fraction_at_most(fl, {}, 5.0, horizon, 500, 3);
        EXPECT_TRUE(f.fraction < prev || f.fraction == 0.0) << horizon;
        prev = f.fraction;
    }
    EXPECT_EQ(prev, 0.0);
    EXPECT_THROW(fraction_at_most(fl, {}, 5.0, 10.0, 0, 3), EmptySample);
}

TEST(Ensemble, EventsCsvHeader) {
    Rng rng(2);
    const Trajectory tr = simulate_continuous(unit_flows(), {}, 20.0, 0.0, rng);
    const auto path = (fixture::temp_dir("events") / "e.csv").string();
    write_events_csv(tr, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "time,kind,m_before,m_after");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, tr.events.size());
}
