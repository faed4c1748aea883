#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <cellcycle/cli.hpp>

#include "support.hpp"

using namespace cellcycle;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string model(const std::string& name) { return std::string(MODELS_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

} // namespace

TEST(Cli, ValidateExitCodes) {
    const auto dir = fixture::temp_dir("cli_validate").string();
    const Result ok = run({"--model", model("test_model.json"), "--out", dir, "validate"});
    EXPECT_EQ(ok.code, 0) << ok.err;
    EXPECT_NE(ok.out.find("model accepted"), std::string::npos);
    EXPECT_TRUE(fs::exists(fs::path(dir) / "validation.json"));
    EXPECT_TRUE(fs::exists(fs::path(dir) / "manifest_validate.json"));

    const Result bad = run({"--model", model("invalid_decreasing_h.json"), "--out", dir, "validate"});
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.out.find("M2"), std::string::npos);
    EXPECT_NE(bad.out.find("FAIL"), std::string::npos);

    const Result missing = run({"--model", model("invalid_missing_tau.json"), "--out", dir, "validate"});
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.err.find("tau"), std::string::npos);

    EXPECT_EQ(run({"--out", dir, "validate"}).code, 2);
    EXPECT_EQ(run({"--model", model("nope.json"), "--out", dir, "validate"}).code, 2);
    EXPECT_EQ(run({"bogus"}).code, 1);
    EXPECT_EQ(run({"--model", model("test_model.json"), "simulate", "--phase", "3"}).code, 1);
}

TEST(Cli, ClassifyTestModel) {
    const auto dir = fixture::temp_dir("cli_classify");
    const Result r = run({"--model", model("test_model.json"), "--out", dir.string(), "--json", "classify"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["classification"]["discrete_verdict"], "Stable");
    EXPECT_EQ(j["classification"]["continuous_verdict"], "Stable");
    EXPECT_NEAR(j["classification"]["T_R"].get<double>(), 2.0, 1e-4);
    EXPECT_EQ(read_json(dir / "classification.json"), j);
}

TEST(Cli, ClassifyRejectsInvalidModel) {
    const auto dir = fixture::temp_dir("cli_classify_bad");
    const Result r = run({"--model", model("invalid_decreasing_h.json"), "--out", dir.string(), "--json", "classify"});
    EXPECT_EQ(r.code, 2);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_FALSE(j["validation"]["accepted"].get<bool>());
    EXPECT_FALSE(j.contains("classification"));
    bool named = false;
    for (const auto& c : j["validation"]["checks"]) named |= c["name"] == "M2" && !c["passed"].get<bool>();
    EXPECT_TRUE(named);
}

TEST(Cli, VerifyWithoutBudgetSkipsStatistics) {
    const auto dir = fixture::temp_dir("cli_verify0");
    const Result r =
        run({"--model", model("test_model.json"), "--out", dir.string(), "--json", "verify", "--trajectories", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    std::map<std::string, std::string> v;
    for (const auto& row : j["rows"]) v[row["name"]] = row["verdict"];
    for (const char* n : {"generation1_ks", "generation_n_l1", "phase2_occupancy", "resting_marginal_l1"})
        EXPECT_EQ(v[n], "SKIPPED") << n;
    for (const char* n : {"pde_stationary_drift", "boundary_r", "stationary_residual", "conjugacy"})
        EXPECT_EQ(v[n], "PASS") << n;
    EXPECT_TRUE(j["passed"].get<bool>());
}

TEST(Cli, PerturbedKernelFailsKs) {
    const auto dir = fixture::temp_dir("cli_perturb");
    const Result r = run({"--model", model("test_model.json"), "--out", dir.string(), "--json", "verify",
                          "--trajectories", "1000", "--perturb-kernel", "0.1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    std::map<std::string, nlohmann::json> rows;
    for (const auto& row : j["rows"]) rows[row["name"]] = row;
    EXPECT_EQ(rows["generation1_ks"]["verdict"], "FAIL");
    EXPECT_FALSE(j["passed"].get<bool>());
    // thresholds are printed with the statistic
    EXPECT_TRUE(rows["generation1_ks"]["threshold"].is_number());
    EXPECT_EQ(rows["phase2_occupancy"]["verdict"], "PASS");
}

TEST(Cli, ReplayReproducesOutputs) {
    const auto dir = fixture::temp_dir("cli_replay");
    const std::vector<std::string> args = {"--model",  model("test_model.json"), "--out", dir.string(), "--seed", "9",
                                           "simulate", "--trajectories",         "50",    "--horizon",   "40"};
    ASSERT_EQ(run(args).code, 0);
    const auto man = read_json(dir / "manifest_simulate.json");
    EXPECT_EQ(man["seed"], 9);
    EXPECT_EQ(man["command"], "simulate");
    EXPECT_EQ(man["parameters"]["horizon"], 40.0);
    ASSERT_FALSE(man["outputs"].empty());
    std::map<std::string, std::string> before;
    for (const auto& p : man["outputs"]) before[p] = slurp(p.get<std::string>());

    const auto copy = fixture::temp_dir("cli_replay_manifest") / "m.json";
    fs::copy_file(dir / "manifest_simulate.json", copy);
    for (const auto& [p, _] : before) fs::remove(p);
    const Result again = run({"--replay", copy.string()});
    ASSERT_EQ(again.code, 0) << again.err;
    for (const auto& [p, text] : before) EXPECT_EQ(slurp(p), text) << p;
    EXPECT_EQ(slurp(dir / "manifest_simulate.json"), slurp(copy));

    EXPECT_EQ(run({"--replay", (dir / "none.json").string()}).code, 1);
}

TEST(Cli, ThreadCountDoesNotChangeOutputs) {
    std::string text[2];
    for (int k = 0; k < 2; ++k) {
        const auto dir = fixture::temp_dir("cli_threads" + std::to_string(k));
        const Result r = run({"--model", model("test_model.json"), "--out", dir.string(), "--threads", k ? "3" : "1",
                              "simulate", "--trajectories", "40", "--generations", "20"});
        ASSERT_EQ(r.code, 0) << r.err;
        text[k] = r.out + slurp(dir / "generation_20.csv");
    }
    EXPECT_EQ(text[0], text[1]);
}

TEST(Cli, IterateWritesDensityAndHistory) {
    const auto dir = fixture::temp_dir("cli_iterate");
    const Result r =
        run({"--model", model("test_model.json"), "--out", dir.string(), "--grid-n", "1024", "--json", "iterate"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["outcome"], "Converged");
    EXPECT_NEAR(j["in_domain_mass"].get<double>(), 1.0, 1e-9);

    std::ifstream in(dir / "density.csv");
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    double l1 = 0.0;
    while (std::getline(in, line)) {
        double m, v;
        char comma;
        std::istringstream(line) >> m >> comma >> v;
        l1 += std::abs(v - oracle::fixed_point(m)) * 52.0 / 1024.0;
        ++rows;
    }
    EXPECT_EQ(rows, 1025u);
    EXPECT_LT(l1, 3e-3);
    EXPECT_TRUE(fs::exists(dir / "iteration_history.csv"));
}

TEST(Cli, StationaryReportsRestingTime) {
    const auto dir = fixture::temp_dir("cli_stationary");
    const Result r = run({"--model", model("test_model.json"), "--out", dir.string(), "--json", "stationary"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j["T_R"].get<double>(), 2.0, 1e-4);
    EXPECT_NEAR(j["c"].get<double>(), 1.0 / 3.0, 1e-4);
    EXPECT_NEAR(j["phase2_mass"].get<double>() + j["resting_mass"].get<double>(), 1.0, 1e-9);
    EXPECT_TRUE(fs::exists(dir / "resting_marginal.csv"));
}

TEST(Cli, PdeIndicatorStart) {
    const auto dir = fixture::temp_dir("cli_pde");
    const Result r = run({"--model", model("test_model.json"), "--out", dir.string(), "--json", "pde", "--dm", "0.05",
                          "--t-end", "2", "--init", "indicator", "--init-lo", "3", "--init-hi", "6"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j["t"].get<double>(), 2.0, 1e-9);
    EXPECT_NEAR(j["mass_initial"].get<double>(), 3.0, 0.06);
    EXPECT_EQ(j["history"], "frozen initial profile");
    EXPECT_EQ(run({"--model", model("test_model.json"), "--out", dir.string(), "pde", "--init", "indicator"}).code, 1);
}

TEST(Cli, CounterexampleSplitsVerdicts) {
    const auto dir = fixture::temp_dir("cli_counterexample");
    const Result r = run({"--out", dir.string(), "--grid-n", "2048", "--json", "counterexample", "--trajectories", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["classification"]["discrete_verdict"], "Stable");
    EXPECT_EQ(j["classification"]["continuous_verdict"], "Sweeping");
    EXPECT_TRUE(j["validation"]["accepted"].get<bool>());
    for (const char* f : {"counterexample_model.json", "alpha_profile.csv", "pde_population.csv", "f_star.csv"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    // the saved spec loads back and classifies the same way through the model path
    EXPECT_EQ(load_spec((dir / "counterexample_model.json").string()).mP, 2.0);
}

TEST(Cli, BinaryRuns) {
    const auto dir = fixture::temp_dir("cli_binary");
    const std::string cmd = std::string(CELLCYCLE_BIN) + " --model " + model("invalid_decreasing_h.json") + " --out " +
                            dir.string() + " validate > " + (dir / "o.txt").string();
    const int status = std::system(cmd.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 2);
    EXPECT_NE(slurp(dir / "o.txt").find("model rejected"), std::string::npos);
}
