#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "roughmkv/experiments.hpp"
#include "roughmkv/scenario.hpp"

using namespace roughmkv;

namespace {

std::string error_of(std::string_view text) {
    try {
        parse_scenario(text);
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("roughmkv_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Scenario, MinimalFileGetsDefaults) {
    const auto s = parse_scenario("[scenario]\nname = tiny\n");
    Scenario expect;
    expect.name = "tiny";
    EXPECT_EQ(s, expect);
    EXPECT_EQ(s.particles, std::vector<std::size_t>{1000});
}

TEST(Scenario, CommentsAndLists) {
    const auto s = parse_scenario(
        "# header\n[particles]\nn = 10, 20 ,40 ; trailing\nscheme = davie_no_lift\n[driver]\nseed = 9\n");
    EXPECT_EQ(s.particles, (std::vector<std::size_t>{10, 20, 40}));
    EXPECT_EQ(s.scheme, "davie_no_lift");
    ASSERT_TRUE(s.driver_seed.has_value());
    EXPECT_EQ(*s.driver_seed, 9u);
}

TEST(Scenario, MisspelledKeyNamesNearestAndLine) {
    const auto msg = error_of("[scenario]\nname = x\n[particles]\nsheme = davie_full\n");
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'scheme'"), std::string::npos) << msg;
    const auto sec = error_of("[partcles]\n");
    EXPECT_NE(sec.find("[particles]"), std::string::npos) << sec;
}

TEST(Scenario, ValueErrors) {
    EXPECT_NE(error_of("[grid]\ncells = -3\n"), "");
    EXPECT_NE(error_of("[grid]\nhorizon = abc\n"), "");
    EXPECT_NE(error_of("[driver]\nalpha = 0.3\n"), "");
    EXPECT_NE(error_of("[driver]\nalpha = 0.6\n"), "");
    EXPECT_NE(error_of("[rough]\nfamily = moment_cosine\n"), "");
    EXPECT_NE(error_of("name = x\n"), "");
    EXPECT_NE(error_of("[scenario\n"), "");
    EXPECT_NE(error_of("[report]\ndump_flow = yes\n"), "");
    EXPECT_NE(error_of("[scenario]\nexperiment = residual_scan\n[grid]\nlevels = 2\n"), "");
    EXPECT_NE(error_of("[scenario]\nexperiment = chaos_scan\n[particles]\nn = 100\n"), "");
    EXPECT_NE(error_of("[scenario]\nexperiment = duality\n[rough]\nfamily = moment_sine\n"), "");
    EXPECT_NE(error_of("[scenario]\nexperiment = duality\n[drift]\nfamily = linear_mean_field\nc = 0.5\n"), "");
}

TEST(Scenario, CanonicalRoundTrip) {
    Scenario s;
    s.name = "rt";
    s.experiment = "residual_scan";
    s.seed = 123456789012345ull;
    s.d = 2;
    s.n = 3;
    s.horizon = 0.1 + 0.2;
    s.driver_seed = 77;
    s.alpha = 0.41;
    s.rough = "gaussian_convolution";
    s.rough_amplitude = 1.0 / 3.0;
    s.particles = {5, 50, 500};
    s.initial = "uniform";
    s.initial_lo = -1.5;
    s.initial_hi = 2.25;
    s.dump_flow = true;
    const auto text = emit_canonical(s);
    const auto back = parse_scenario(text);
    EXPECT_EQ(back, s);
    EXPECT_EQ(emit_canonical(back), text);
    EXPECT_EQ(scenario_checksum(back), scenario_checksum(s));
    Scenario other = s;
    other.seed += 1;
    EXPECT_NE(scenario_checksum(other), scenario_checksum(s));
}

TEST(Run, LiftChecksOnLinearDriver) {
    const auto s = parse_scenario(
        "[scenario]\nname = lin\nexperiment = lift_checks\n[grid]\ncells = 16\n[driver]\nkind = linear\nalpha = 0.45\n");
    RunOptions opt;
    opt.out_dir = scratch("lift");
    opt.timestamp = false;
    const auto r = run(s, opt);
    EXPECT_EQ(r.exit_code, kExitOk) << r.summary.dump(2);
    EXPECT_EQ(r.summary["status"], "ok");
    EXPECT_NEAR(r.summary["results"]["holder_first"].get<double>(), 1.0, 1e-12);
    EXPECT_TRUE(std::filesystem::exists(opt.out_dir / "lift_checks.csv"));
    const auto summary = slurp(opt.out_dir / "summary.json");
    EXPECT_EQ(summary.find("generated_at"), std::string::npos);
}

TEST(Run, DiagnosticsIsByteDeterministic) {
    const auto s = parse_scenario(
        "[scenario]\nname = diag\nexperiment = diagnostics\n[grid]\ncells = 8\n[rough]\nfamily = moment_sine\n"
        "a = 0.5\nc = 0.3\n[particles]\nn = 40\ninitial = gaussian\n[report]\ndump_flow = true\n");
    RunOptions a, b;
    a.out_dir = scratch("diag_a");
    b.out_dir = scratch("diag_b");
    a.timestamp = b.timestamp = false;
    b.threads = 3;
    EXPECT_EQ(run(s, a).exit_code, kExitOk);
    EXPECT_EQ(run(s, b).exit_code, kExitOk);
    for (const char* f : {"summary.json", "steps.csv", "flow.csv"})
        EXPECT_EQ(slurp(a.out_dir / f), slurp(b.out_dir / f)) << f;
}

TEST(Run, SeedOverrideChangesChecksum) {
    const auto s = parse_scenario("[scenario]\nexperiment = diagnostics\n[grid]\ncells = 4\n[particles]\nn = 5\n");
    RunOptions a, b;
    a.out_dir = scratch("seed_a");
    b.out_dir = scratch("seed_b");
    a.timestamp = b.timestamp = false;
    b.seed_override = 99;
    const auto ra = run(s, a), rb = run(s, b);
    EXPECT_NE(ra.summary["scenario_checksum"], rb.summary["scenario_checksum"]);
}
