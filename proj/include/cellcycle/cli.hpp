#pragma once

// Command layer behind the cellcycle executable. Needs CLI11 on the include
// path; the library headers do not.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "../cellcycle.hpp"

namespace cellcycle::cli {

inline constexpr const char* tool_version = "0.3.0";

enum ExitCode { Ok = 0, Internal = 1, InvalidModel = 2 };

// thrown for a model that cannot be used; maps to exit code 2
class InvalidModelError : public Error {
public:
    using Error::Error;
};

struct Globals {
    std::string model;
    std::uint64_t seed = 20240501;
    std::string out = "out";
    std::size_t grid_n = 2048;
    double m_max = 0.0; // 0: keep the model's mMax
    bool json = false;
    unsigned threads = 0;
};

/// Everything needed to rerun a command: the argument vector plus the
/// resolved parameters, for reading.
class Manifest {
public:
    Manifest(std::string command, const Globals& g, std::vector<std::string> argv)
        : command_(std::move(command)), g_(g), argv_(std::move(argv)) {}

    nlohmann::json& parameters() { return params_; }
    void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }

    std::filesystem::path write() const {
        const std::filesystem::path p = std::filesystem::path(g_.out) / ("manifest_" + command_ + ".json");
        nlohmann::json j = {{"command", command_},   {"model", g_.model},
                            {"argv", argv_},         {"seed", g_.seed},
                            {"tool_version", tool_version}, {"parameters", params_},
                            {"outputs", outputs_}};
        std::ofstream os(p);
        if (!os) throw Error("cannot write " + p.string());
        os << j.dump(2) << '\n';
        return p;
    }

private:
    std::string command_;
    Globals g_;
    std::vector<std::string> argv_;
    nlohmann::json params_ = nlohmann::json::object();
    std::vector<std::string> outputs_;
};

namespace detail {

inline ModelSpec load_model(const Globals& g) {
    if (g.model.empty()) throw InvalidModelError("--model is required for this command");
    ModelSpec s;
    try {
        s = load_spec(g.model);
    } catch (const ParseError& e) {
        throw InvalidModelError(e.what());
    }
    if (g.m_max > 0.0) s.mMax = g.m_max;
    return s;
}

inline ValidationReport checked(const ModelSpec& s) {
    try {
        return validate(s);
    } catch (const DomainError& e) {
        throw InvalidModelError(e.what());
    }
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j, Manifest& man) {
    std::ofstream os(p);
    if (!os) throw Error("cannot write " + p.string());
    os << j.dump(2) << '\n';
    man.add_output(p);
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(8) << v;
    return os.str();
}

inline void print_validation(std::ostream& out, const ValidationReport& r) {
    for (const auto& c : r.checks) {
        out << std::left << std::setw(12) << c.name << (c.passed ? "pass" : (c.required ? "FAIL" : "warn"));
        if (!c.passed && c.witness) out << "  at " << fmt(*c.witness);
        if (!c.passed && !c.detail.empty()) out << "  " << c.detail;
        out << '\n';
    }
    out << (r.accepted() ? "model accepted\n" : "model rejected\n");
}

/// Histogram of maturities on the nodes of a grid (nearest node), as a
/// density: count / (n * trapezoid weight).
inline GridDensity node_histogram(const UniformGrid& g, const std::vector<double>& ms, std::size_t n_total) {
    GridDensity d(g);
    std::size_t outside = 0;
    for (double m : ms) {
        const auto k = static_cast<std::size_t>(std::llround(m / g.step()));
        if (m < 0.0 || k > g.n) {
            ++outside;
            continue;
        }
        d.values[k] += 1.0;
    }
    const double n = static_cast<double>(n_total);
    for (std::size_t k = 0; k < g.size(); ++k) d.values[k] /= n * g.weight(k);
    d.escaped_mass = static_cast<double>(outside + (n_total - ms.size())) / n;
    return d;
}

} // namespace detail

/// Parses and runs one command line; returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Two-phase cell cycle: generational operator, PDMP, stationary densities, delay PDE"};
    app.require_subcommand(0, 1); // none only with --replay
    app.fallthrough();
    Globals g;
    std::string replay;
    app.add_option("--model", g.model, "model JSON file");
    app.add_option("--seed", g.seed, "master seed")->capture_default_str();
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    auto* grid_opt = app.add_option("--grid-n", g.grid_n, "maturity grid intervals")->capture_default_str();
    app.add_option("--m-max", g.m_max, "override the model's mMax");
    app.add_flag("--json", g.json, "print JSON instead of text");
    app.add_option("--threads", g.threads, "worker threads (0: all cores); outputs do not depend on it");
    app.add_option("--replay", replay, "rerun the command recorded in a manifest");

    auto* c_validate = app.add_subcommand("validate", "check the model assumptions");
    auto* c_classify = app.add_subcommand("classify", "discrete and continuous stability verdicts");

    auto* c_iterate = app.add_subcommand("iterate", "power iteration of the generational operator");
    std::size_t n_max = 100000;
    double tol = 1e-9, f0_lo = 0.0, f0_hi = 10.0;
    c_iterate->add_option("--n-max", n_max)->capture_default_str();
    c_iterate->add_option("--tol", tol)->capture_default_str();
    c_iterate->add_option("--f0-lo", f0_lo, "initial density is uniform on [f0-lo, f0-hi]")->capture_default_str();
    c_iterate->add_option("--f0-hi", f0_hi)->capture_default_str();

    auto* c_simulate = app.add_subcommand("simulate", "PDMP trajectories or generational chains");
    std::size_t trajectories = 1000, generations = 0;
    double horizon = 100.0, sample_dt = 1.0, burn_in = 0.0, m0 = 0.0;
    int phase = 1;
    c_simulate->add_option("--trajectories", trajectories)->capture_default_str();
    c_simulate->add_option("--horizon", horizon)->capture_default_str();
    c_simulate->add_option("--sample-dt", sample_dt)->capture_default_str();
    c_simulate->add_option("--burn-in", burn_in)->capture_default_str();
    c_simulate->add_option("--m0", m0, "initial maturity")->capture_default_str();
    c_simulate->add_option("--phase", phase, "initial phase (1 or 2)")->check(CLI::Range(1, 2))->capture_default_str();
    c_simulate->add_option("--generations", generations, "> 0: simulate generational chains instead")
        ->capture_default_str();

    auto* c_stationary = app.add_subcommand("stationary", "stationary densities, T_R and c");
    bool phase_table = false;
    c_stationary->add_flag("--phase-table", phase_table, "also tabulate f~*(a, m, i)");

    auto* c_pde = app.add_subcommand("pde", "evolve the delayed transport equation for R(t, m)");
    PdeOptions po;
    double t_end = 10.0, frame_every = 1.0, init_lo = 0.0, init_hi = 0.0;
    std::string history, init = "stationary";
    c_pde->add_option("--dm", po.dm)->capture_default_str();
    c_pde->add_option("--dt", po.dt, "0: largest CFL-safe step dividing tau")->capture_default_str();
    c_pde->add_option("--t-end", t_end)->capture_default_str();
    c_pde->add_option("--history", history, "CSV frames (t, m, R) on [-tau, 0]");
    c_pde->add_option("--init", init, "stationary | indicator")->check(CLI::IsMember({"stationary", "indicator"}))
        ->capture_default_str();
    c_pde->add_option("--init-lo", init_lo, "indicator support");
    c_pde->add_option("--init-hi", init_hi);
    c_pde->add_option("--frame-every", frame_every, "time between written frames (0: none)")->capture_default_str();

    auto* c_verify = app.add_subcommand("verify", "cross-checks between the modules");
    std::size_t v_traj = 10000, v_chains = 0;
    double perturb = 0.0;
    c_verify->add_option("--trajectories", v_traj, "0 skips the statistical rows")->capture_default_str();
    c_verify->add_option("--chains", v_chains, "generational chains (default 10 x trajectories)");
    c_verify->add_option("--perturb-kernel", perturb, "test hook: scale Q in the KS oracle by 1 + p");
    c_verify->add_option("--t-end", t_end, "PDE drift horizon")->capture_default_str();

    auto* c_counter = app.add_subcommand("counterexample", "stable operator with a sweeping semigroup");
    std::size_t ce_traj = 2000;
    c_counter->add_option("--trajectories", ce_traj, "PDMP trajectories per horizon (0 skips)")
        ->capture_default_str();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return Ok;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return Internal;
    }

    if (!replay.empty()) {
        std::ifstream in(replay);
        if (!in) {
            err << "cannot read manifest " << replay << '\n';
            return Internal;
        }
        nlohmann::json j;
        try {
            in >> j;
            return run(j.at("argv").get<std::vector<std::string>>(), out, err);
        } catch (const nlohmann::json::exception& e) {
            err << replay << ": " << e.what() << '\n';
            return Internal;
        }
    }

    if (app.get_subcommands().empty()) {
        err << "A subcommand is required\n";
        return Internal;
    }
    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    std::vector<std::string> argv = args;
    // a replayed command must not replay again
    for (std::size_t k = 0; k < argv.size(); ++k)
        if (argv[k] == "--replay" && k + 1 < argv.size()) argv.erase(argv.begin() + k, argv.begin() + k + 2);

    try {
        std::filesystem::create_directories(g.out);
        Manifest man(command, g, argv);
        const std::filesystem::path dir(g.out);
        nlohmann::json& P = man.parameters();
        P["grid_n"] = g.grid_n;
        P["threads_do_not_affect_output"] = true;
        int code = Ok;

        if (sub == c_validate) {
            const ModelSpec s = detail::load_model(g);
            const ValidationReport r = detail::checked(s);
            P["mMax"] = s.mMax;
            detail::write_json(dir / "validation.json", to_json(r), man);
            if (g.json) out << to_json(r).dump(2) << '\n';
            else detail::print_validation(out, r);
            code = r.accepted() ? Ok : InvalidModel;

        } else if (sub == c_classify) {
            const ModelSpec s = detail::load_model(g);
            const ValidationReport v = detail::checked(s);
            nlohmann::json j = {{"validation", to_json(v)}};
            P["mMax"] = s.mMax;
            if (!v.accepted()) {
                code = InvalidModel;
            } else {
                ClassifyOptions co;
                co.grid_n = g.grid_n;
                P["alpha_margin"] = co.discrete.margin;
                P["divergence_threshold"] = co.divergence_threshold;
                P["power_tol"] = co.iteration.tol;
                const ClassificationReport r = classify_continuous(s, co);
                j["classification"] = to_json(r);
            }
            detail::write_json(dir / "classification.json", j, man);
            if (g.json) {
                out << j.dump(2) << '\n';
            } else {
                detail::print_validation(out, v);
                if (j.contains("classification")) {
                    const auto& c = j["classification"];
                    out << "discrete: " << c["discrete_verdict"].get<std::string>()
                        << "  continuous: " << c["continuous_verdict"].get<std::string>() << "  T_R: " << c["T_R"].dump()
                        << "  alpha liminf bound: " << c["alpha_liminf_bound"].dump() << '\n';
                    for (const auto& n : c["diagnostics"]["notes"]) out << "  note: " << n.get<std::string>() << '\n';
                }
            }

        } else if (sub == c_iterate) {
            const ModelSpec s = detail::load_model(g);
            if (!detail::checked(s).accepted()) throw InvalidModelError("model rejected; run validate for details");
            const KernelMatrix K(std::make_shared<const FlowSolver>(s), UniformGrid{s.mMax, g.grid_n});
            PowerIterationOptions io;
            io.n_max = n_max;
            io.tol = tol;
            const double hi = std::min(f0_hi, s.mMax);
            const auto it = power_iterate(K, GridDensity::uniform(K.grid(), f0_lo, hi), io);
            P["n_max"] = n_max;
            P["tol"] = tol;
            P["f0"] = {f0_lo, hi};
            P["polish"] = io.polish;
            P["sweeping_mass"] = io.sweeping_mass;
            write_density(it.fixed_point ? *it.fixed_point : it.last, (dir / "density.csv").string());
            man.add_output(dir / "density.csv");
            {
                std::ofstream h(dir / "iteration_history.csv");
                h << "k,l1_difference,in_domain_mass\n" << std::setprecision(17);
                for (std::size_t k = 0; k < it.differences.size(); ++k)
                    h << k + 1 << ',' << it.differences[k] << ',' << it.in_domain_mass[k] << '\n';
                man.add_output(dir / "iteration_history.csv");
            }
            nlohmann::json j = {{"outcome", to_string(it.outcome)},
                                {"iterations", it.iterations},
                                {"fixed_point", it.fixed_point.has_value()},
                                {"last_difference", it.differences.empty() ? 0.0 : it.differences.back()},
                                {"in_domain_mass", it.last.mass()},
                                {"escaped_mass", it.last.escaped_mass},
                                {"monotone_tail", it.monotone_tail}};
            detail::write_json(dir / "iterate.json", j, man);
            if (g.json) out << j.dump(2) << '\n';
            else
                out << "outcome " << to_string(it.outcome) << " after " << it.iterations << " iterations, last L1 step "
                    << detail::fmt(j["last_difference"].get<double>()) << ", in-domain mass "
                    << detail::fmt(it.last.mass()) << '\n';

        } else if (sub == c_simulate) {
            const ModelSpec s = detail::load_model(g);
            if (!detail::checked(s).accepted()) throw InvalidModelError("model rejected; run validate for details");
            const FlowSolver fl(s);
            const UniformGrid grid{s.mMax, g.grid_n};
            P["trajectories"] = trajectories;
            P["m0"] = m0;
            nlohmann::json j;
            if (generations > 0) {
                P["generations"] = generations;
                std::vector<GenerationChain> chains(trajectories);
                parallel_for(
                    trajectories,
                    [&](std::size_t k) {
                        Rng rng = Rng::substream(g.seed, k);
                        chains[k] = simulate_generations(fl, m0, generations, rng);
                    },
                    g.threads);
                std::vector<double> last;
                std::size_t escaped = 0;
                double mean = 0.0;
                for (const auto& c : chains) {
                    if (c.escaped) ++escaped;
                    else {
                        last.push_back(c.newborn.back());
                        mean += c.newborn.back();
                    }
                }
                const GridDensity d = detail::node_histogram(grid, last, trajectories);
                const auto name = "generation_" + std::to_string(generations) + ".csv";
                write_density(d, (dir / name).string());
                man.add_output(dir / name);
                j = {{"mode", "generations"},
                     {"chains", trajectories},
                     {"escaped", escaped},
                     {"mean_final_maturity", last.empty() ? 0.0 : mean / static_cast<double>(last.size())}};
            } else {
                P["horizon"] = horizon;
                P["sample_dt"] = sample_dt;
                P["burn_in"] = burn_in;
                P["phase"] = phase;
                EnsembleOptions eo;
                eo.trajectories = trajectories;
                eo.horizon = horizon;
                eo.sample_dt = sample_dt;
                eo.burn_in = burn_in;
                eo.threads = g.threads;
                P["random_sample_phase"] = eo.random_sample_phase;
                const PdmpState x0{0.0, m0, phase == 1 ? Phase::Resting : Phase::Proliferating};
                const EnsembleResult ens = run_ensemble(fl, x0, g.seed, eo, true);
                if (!ens.trajectories.empty()) {
                    write_events_csv(ens.trajectories.front(), (dir / "events_0.csv").string());
                    man.add_output(dir / "events_0.csv");
                }
                std::vector<double> m1, m2;
                for (const auto& x : ens.stationary_samples) (x.i == Phase::Resting ? m1 : m2).push_back(x.m);
                const std::size_t n = ens.stationary_samples.size();
                if (n > 0) {
                    write_density(detail::node_histogram(grid, m1, n), (dir / "resting_maturity.csv").string());
                    write_density(detail::node_histogram(grid, m2, n), (dir / "proliferating_maturity.csv").string());
                    man.add_output(dir / "resting_maturity.csv");
                    man.add_output(dir / "proliferating_maturity.csv");
                }
                j = {{"mode", "continuous"},
                     {"trajectories", trajectories},
                     {"escaped", ens.escaped},
                     {"samples", n},
                     {"phase2_occupancy", ens.mean_phase2_occupancy}};
            }
            detail::write_json(dir / "simulate.json", j, man);
            out << (g.json ? j.dump(2) : j.dump()) << '\n';

        } else if (sub == c_stationary) {
            const ModelSpec s = detail::load_model(g);
            if (!detail::checked(s).accepted()) throw InvalidModelError("model rejected; run validate for details");
            auto flows = std::make_shared<const FlowSolver>(s);
            const KernelMatrix K(flows, UniformGrid{s.mMax, g.grid_n});
            const auto it = power_iterate(K, GridDensity::uniform(K.grid(), 0.0, s.mMax));
            nlohmann::json j = {{"power_iteration", to_string(it.outcome)}};
            if (!it.fixed_point) {
                j["note"] = "no invariant density of the generational operator";
            } else {
                const StationaryProfile prof(flows, *it.fixed_point);
                write_density(*it.fixed_point, (dir / "f_star.csv").string());
                man.add_output(dir / "f_star.csv");
                j["resting_time"] = to_json(prof.resting_time());
                j["T_R"] = prof.resting_time().divergent ? nlohmann::json("inf") : nlohmann::json(prof.resting_time().value);
                j["c"] = prof.c();
                if (prof.resting_time().divergent) {
                    // no normalization exists; write R itself
                    GridDensity R(it.fixed_point->grid);
                    for (std::size_t k = 0; k < R.values.size(); ++k) R.values[k] = prof.resting_profile()(R.grid[k]);
                    write_density(R, (dir / "resting_profile.csv").string());
                    man.add_output(dir / "resting_profile.csv");
                } else {
                    const GridDensity cR = prof.marginal_resting();
                    write_density(cR, (dir / "resting_marginal.csv").string());
                    man.add_output(dir / "resting_marginal.csv");
                    j["phase2_mass"] = prof.c() * s.tau;
                    j["resting_mass"] = prof.c() * prof.resting_time().value;
                    const BoundaryCheck b = boundary_consistency_check(prof);
                    j["boundary"] = {{"brzeg_r", b.brzeg_r}, {"brzeg_p", b.brzeg_p}};
                    j["stationary_residual_l1"] = stationary_residual(*flows, cR).l1;
                    if (phase_table) {
                        std::ofstream t(dir / "phase_density.csv");
                        t << "a,m,i,value\n" << std::setprecision(12);
                        const double a_max = std::min(4.0 * (prof.resting_time().value + s.tau), s.mMax);
                        for (int i = 1; i <= 2; ++i)
                            for (int ia = 0; ia <= 50; ++ia)
                                for (int im = 0; im <= 200; ++im) {
                                    const double a = (i == 1 ? a_max : s.tau) * ia / 50.0, m = s.mMax * im / 200.0;
                                    t << a << ',' << m << ',' << i << ','
                                      << prof.phase_density(a, m, static_cast<Phase>(i)) << '\n';
                                }
                        man.add_output(dir / "phase_density.csv");
                    }
                }
            }
            detail::write_json(dir / "stationary.json", j, man);
            out << (g.json ? j.dump(2) : j.dump()) << '\n';

        } else if (sub == c_pde) {
            const ModelSpec s = detail::load_model(g);
            if (!detail::checked(s).accepted()) throw InvalidModelError("model rejected; run validate for details");
            auto flows = std::make_shared<const FlowSolver>(s);
            const auto n = static_cast<std::size_t>(std::llround(s.mMax / po.dm));
            std::vector<double> R0(n + 1, 0.0);
            if (init == "stationary") {
                const KernelMatrix K(flows, UniformGrid{s.mMax, g.grid_n});
                const auto it = power_iterate(K, GridDensity::uniform(K.grid(), 0.0, s.mMax));
                if (!it.fixed_point) throw Error("pde: no invariant density for a stationary start; use --init indicator");
                const StationaryProfile prof(flows, *it.fixed_point);
                // without a normalizing constant, start from R itself
                const double c = prof.resting_time().divergent ? 1.0 : prof.c();
                for (std::size_t k = 0; k <= n; ++k) R0[k] = c * prof.resting_profile()(s.mMax * k / n);
            } else {
                if (!(init_hi > init_lo)) throw Error("pde: --init indicator needs --init-lo < --init-hi");
                for (std::size_t k = 0; k <= n; ++k) {
                    const double m = s.mMax * k / n;
                    R0[k] = (m >= init_lo && m <= init_hi) ? 1.0 : 0.0;
                }
            }
            DelayField::History hist;
            if (!history.empty()) hist = read_history(history);
            DelayField field(flows, R0, po, hist);
            P["dm"] = field.dm();
            P["dt"] = field.dt();
            P["cfl"] = field.cfl();
            P["t_end"] = t_end;
            P["init"] = init;
            P["history"] = field.history_kind();
            P["frame_every"] = frame_every;
            if (init == "indicator") P["init_support"] = {init_lo, init_hi};
            const double mass0 = field.mass();
            FrameWriter frames((dir / "frames.csv").string());
            man.add_output(dir / "frames.csv");
            frames(field);
            const auto every =
                frame_every > 0.0 ? static_cast<std::size_t>(std::max(1.0, std::round(frame_every / field.dt()))) : 0;
            evolve(field, t_end, [&frames](const DelayField& f) { frames(f); }, every);
            double drift = 0.0;
            for (std::size_t k = 1; k <= n; ++k) drift += std::abs(field.profile()[k] - R0[k]);
            const auto bal = field.balance();
            nlohmann::json j = {{"t", field.t()},
                                {"mass_initial", mass0},
                                {"mass", field.mass()},
                                {"in_transit", field.in_transit()},
                                {"escaped_mass", field.escaped_mass()},
                                {"l1_change", drift * field.dm()},
                                {"history", field.history_kind()},
                                {"balance", {{"source", bal.source}, {"sink", bal.sink}, {"outflow", bal.outflow}}}};
            detail::write_json(dir / "pde.json", j, man);
            out << (g.json ? j.dump(2) : j.dump()) << '\n';

        } else if (sub == c_verify) {
            const ModelSpec s = detail::load_model(g);
            if (!detail::checked(s).accepted()) throw InvalidModelError("model rejected; run validate for details");
            VerifyOptions vo;
            vo.trajectories = v_traj;
            vo.chains = v_chains > 0 ? v_chains : 10 * v_traj;
            vo.kernel_perturbation = perturb;
            vo.pde_t_end = t_end;
            vo.seed = g.seed;
            vo.threads = g.threads;
            if (grid_opt->count() > 0) vo.grid_n = g.grid_n;
            P["trajectories"] = vo.trajectories;
            P["chains"] = vo.chains;
            P["generations"] = vo.generations;
            P["horizon"] = vo.horizon;
            P["sample_dt"] = vo.sample_dt;
            P["burn_in"] = vo.burn_in;
            P["grid_n"] = vo.grid_n;
            P["conjugacy_grid_n"] = vo.conjugacy_grid_n;
            P["pde_dm"] = vo.pde_dm;
            P["pde_t_end"] = vo.pde_t_end;
            P["ks_alpha"] = vo.ks_alpha;
            P["kernel_perturbation"] = vo.kernel_perturbation;
            const VerifyReport rep = verify(std::make_shared<const FlowSolver>(s), vo);
            detail::write_json(dir / "verify.json", to_json(rep), man);
            if (g.json) out << to_json(rep).dump(2) << '\n';
            else out << format_table(rep);

        } else if (sub == c_counter) {
            CounterexampleOptions co;
            if (grid_opt->count() > 0) co.grid_n = g.grid_n;
            if (g.m_max > 0.0) co.m_max = g.m_max;
            P["grid_n"] = co.grid_n;
            P["mMax"] = co.m_max;
            P["polish"] = co.iteration.polish;
            const Counterexample ce = build_counterexample(co);
            save_spec(ce.spec, (dir / "counterexample_model.json").string());
            man.add_output(dir / "counterexample_model.json");
            const ValidationReport v = validate(ce.spec);

            CounterexampleVerifyOptions cv;
            cv.trajectories = ce_traj;
            cv.seed = g.seed;
            cv.threads = g.threads;
            P["pdmp_trajectories"] = cv.trajectories;
            P["pdmp_horizons"] = cv.horizons;
            P["pdmp_M"] = cv.pdmp_M;
            P["pde_M"] = cv.pde_M;
            P["pde_t_end"] = cv.pde_t_end;
            P["pde_dm"] = cv.pde_dm;
            P["pde_support"] = {cv.pde_support.first, cv.pde_support.second};
            P["flat_range"] = {cv.flat_range.first, cv.flat_range.second};
            FrameWriter frames((dir / "pde_frames.csv").string());
            man.add_output(dir / "pde_frames.csv");
            const CounterexampleRun run =
                verify_counterexample(ce, cv, [&frames](const DelayField& f) { frames(f); }, 100);

            write_density(ce.f_star, (dir / "f_star.csv").string());
            man.add_output(dir / "f_star.csv");
            {
                const auto flows = std::make_shared<const FlowSolver>(ce.spec);
                const RestingProfile R(flows, run.f_star ? *run.f_star : ce.f_star);
                GridDensity Rg(ce.f_star.grid);
                for (std::size_t k = 0; k < Rg.values.size(); ++k) Rg.values[k] = R(Rg.grid[k]);
                write_density(Rg, (dir / "resting_profile.csv").string());
                man.add_output(dir / "resting_profile.csv");
                std::ofstream a(dir / "alpha_profile.csv");
                a << "m,alpha\n" << std::setprecision(17);
                const UniformGrid ag{ce.spec.mMax, 512};
                const auto al = alpha_profile(*flows, ag);
                for (std::size_t k = 0; k < al.size(); ++k) a << ag[k] << ',' << al[k] << '\n';
                man.add_output(dir / "alpha_profile.csv");
            }
            {
                std::ofstream p(dir / "pde_population.csv");
                p << "t,population\n" << std::setprecision(17);
                for (const auto& [t, v] : run.pde_population) p << t << ',' << v << '\n';
                man.add_output(dir / "pde_population.csv");
                std::ofstream q(dir / "pdmp_fraction.csv");
                q << "horizon,fraction\n" << std::setprecision(17);
                for (const auto& [t, v] : run.pdmp_fraction) q << t << ',' << v << '\n';
                man.add_output(dir / "pdmp_fraction.csv");
            }

            // the generic cross-checks; stationary rows skip since T_R diverges
            VerifyOptions vo;
            vo.trajectories = ce_traj;
            vo.chains = 10 * ce_traj;
            vo.grid_n = co.grid_n;
            vo.seed = g.seed;
            vo.threads = g.threads;
            P["verify_chains"] = vo.chains;
            const VerifyReport rep = verify(std::make_shared<const FlowSolver>(ce.spec), vo);

            nlohmann::json j = {{"validation", to_json(v)},
                                {"classification", to_json(run.classification)},
                                {"checks", to_json(run.checks)},
                                {"verify", to_json(rep)}};
            detail::write_json(dir / "counterexample.json", j, man);
            if (g.json) {
                out << j.dump(2) << '\n';
            } else {
                out << "discrete: " << to_string(run.classification.discrete_verdict)
                    << "  continuous: " << to_string(run.classification.continuous_verdict) << '\n'
                    << format_table(run.checks) << format_table(rep);
            }
        }
        man.write();
        return code;
    } catch (const InvalidModelError& e) {
        err << "invalid model: " << e.what() << '\n';
        return InvalidModel;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return Internal;
    }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
    return run(args, out, err);
}

} // namespace cellcycle::cli
