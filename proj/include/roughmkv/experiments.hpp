#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "duality.hpp"
#include "families.hpp"
#include "measure_flow.hpp"
#include "rough_path.hpp"
#include "scenario.hpp"
#include "simulator.hpp"
#include "test_functions.hpp"
#include "weak_checker.hpp"

namespace roughmkv {

// ----------------------------------------------------------------------------- logging

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// Reads ROUGHMKV_LOG (error | warn | info | debug); default warn.
inline LogLevel log_level_from_env() {
    const char* v = std::getenv("ROUGHMKV_LOG");
    if (!v) return LogLevel::warn;
    const std::string s(v);
    if (s == "error") return LogLevel::error;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::warn;
}

struct Logger {
    LogLevel level = LogLevel::warn;
    void log(LogLevel l, const std::string& msg) const {
        static const char* names[] = {"error", "warn", "info", "debug"};
        if (l <= level) std::cerr << "[roughmkv " << names[static_cast<int>(l)] << "] " << msg << '\n';
    }
    void info(const std::string& m) const { log(LogLevel::info, m); }
    void debug(const std::string& m) const { log(LogLevel::debug, m); }
    void warn(const std::string& m) const { log(LogLevel::warn, m); }
    void error(const std::string& m) const { log(LogLevel::error, m); }
};

// ----------------------------------------------------------------------------- scenario -> objects

inline CoefficientSet make_coefficients(const Scenario& s) {
    const Dimensions dm{s.d, s.m, s.n};
    DriftField drift = families::zero_drift();
    if (s.drift == "linear_mean_field") drift = families::linear_mean_field_drift(dm, s.drift_a, s.drift_c);
    else if (s.drift == "sine_mean_field") drift = families::sine_mean_field_drift(dm, s.drift_a, s.drift_c);
    DiffusionField diff = families::zero_diffusion();
    if (s.diffusion == "constant") diff = families::constant_diffusion(dm, s.diffusion_s0);
    else if (s.diffusion == "affine") diff = families::affine_diffusion(dm, s.diffusion_s0, s.diffusion_s1);
    RoughFamily rough = families::zero_rough(dm);
    if (s.rough == "constant") rough = families::constant_rough(dm, s.rough_value);
    else if (s.rough == "affine") rough = families::affine_rough(dm, s.rough_slope, s.rough_offset);
    else if (s.rough == "sine") rough = families::sine_rough(dm, s.rough_amplitude, s.rough_frequency);
    else if (s.rough == "moment_sine") rough = families::moment_sine(dm, s.rough_a, s.rough_c);
    else if (s.rough == "moment_linear") rough = families::moment_linear(dm, s.rough_a, s.rough_c, s.rough_offset);
    else if (s.rough == "gaussian_convolution")
        rough = families::gaussian_convolution(dm, s.rough_amplitude, s.rough_width);
    else if (s.rough == "sine_convolution") rough = families::sine_convolution(dm, s.rough_amplitude);
    return CoefficientSet(dm, std::move(drift), std::move(diff), std::move(rough));
}

inline std::uint64_t driver_seed(const Scenario& s) { return s.driver_seed.value_or(s.seed); }

inline GridRoughPath make_rough_path(const Scenario& s, std::size_t cells) {
    const auto grid = TimeGrid::uniform(s.horizon, cells);
    const auto conv = s.convention == "ito" ? Convention::ito : Convention::stratonovich;
    if (s.driver == "brownian") return brownian_lift(driver_seed(s), s.n, grid, s.refinement, conv, s.alpha);
    std::vector<double> samples(grid.size() * s.n);
    for (std::size_t k = 0; k < grid.size(); ++k)
        for (std::size_t c = 0; c < s.n; ++c)
            samples[k * s.n + c] =
                s.driver == "linear"
                    ? s.driver_slope * grid[k]
                    : s.driver_amplitude *
                          (std::sin(2.0 * std::numbers::pi * s.driver_frequency * grid[k] + 0.5 * static_cast<double>(c)) -
                           std::sin(0.5 * static_cast<double>(c)));
    return with_convention(lift_piecewise_linear(grid, s.n, samples, s.alpha), conv);
}

inline InitialLaw make_initial(const Scenario& s) {
    if (s.initial == "gaussian") return initial_laws::Gaussian{std::vector<double>(s.d, s.initial_x0), s.initial_sd};
    if (s.initial == "uniform") return initial_laws::Uniform{s.initial_lo, s.initial_hi};
    return initial_laws::PointMass{std::vector<double>(s.d, s.initial_x0)};
}

inline Scheme make_scheme(const Scenario& s) { return s.scheme == "davie_no_lift" ? Scheme::DavieNoLift : Scheme::DavieFull; }

inline TestFunction make_terminal(const Scenario& s) {
    std::vector<double> e1(s.d, 0.0);
    e1[0] = 1.0;
    if (s.terminal == "sin") return test_functions::sine_wave(e1, 0.0);
    if (s.terminal == "cos") return test_functions::sine_wave(e1, std::numbers::pi / 2);
    if (s.terminal == "linear") return test_functions::linear(e1);
    if (s.terminal == "half_square") return test_functions::half_square(s.d);
    if (s.terminal == "const") return test_functions::constant(s.d);
    return test_functions::gaussian(std::vector<double>(s.d, 0.0), 1.0);
}

/// Deterministic seed derivation for independent replicate runs.
inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    Fnv1a h;
    h.add(seed);
    h.add(a);
    h.add(b);
    return h.value();
}

// ----------------------------------------------------------------------------- reports

struct RunOptions {
    std::filesystem::path out_dir = "out";
    bool timestamp = true;
    unsigned threads = 1;
    std::optional<std::uint64_t> seed_override;
    Logger logger{};
};

struct RunResult {
    int exit_code = 0;
    nlohmann::ordered_json summary;
};

enum ExitCode { kExitOk = 0, kExitParse = 1, kExitInvariant = 2, kExitNumerical = 3 };

inline std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class ReportWriter {
public:
    ReportWriter(const RunOptions& opt, std::uint64_t scenario_checksum)
        : opt_(opt), scenario_checksum_(scenario_checksum), stamp_(opt.timestamp ? utc_timestamp() : "") {
        std::filesystem::create_directories(opt_.out_dir);
    }

    void set_rough_path_checksum(std::uint64_t c) { rp_checksum_ = c; }
    std::uint64_t rough_path_checksum() const { return rp_checksum_; }
    const std::string& stamp() const { return stamp_; }

    /// Writes a CSV preceded by the comment preamble; `body` writes the header and rows.
    void csv(const std::string& name, const std::function<void(std::ostream&)>& body) const {
        std::ofstream os(opt_.out_dir / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (opt_.out_dir / name).string());
        if (opt_.timestamp) os << "# generated_at=" << stamp_ << '\n';
        os << "# scenario_checksum=" << hex64(scenario_checksum_) << " rough_path_checksum=" << hex64(rp_checksum_)
           << '\n';
        body(os);
    }

private:
    const RunOptions& opt_;
    std::uint64_t scenario_checksum_;
    std::uint64_t rp_checksum_ = 0;
    std::string stamp_;
};

struct InvariantLog {
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    bool all_pass = true;

    void add(const std::string& name, bool pass, double value, double tolerance, const std::string& note = "") {
        nlohmann::ordered_json j;
        j["name"] = name;
        j["pass"] = pass;
        j["value"] = value;
        j["tolerance"] = tolerance;
        if (!note.empty()) j["note"] = note;
        items.push_back(std::move(j));
        all_pass = all_pass && pass;
    }
};

/// <mu_t, 1> == 1 exactly for every snapshot.
inline bool mass_conserved(const MeasureFlow& flow) {
    const auto one = [](std::span<const double>) { return 1.0; };
    for (const auto& mu : flow.snapshots)
        if (pairing(mu, one) != 1.0) return false;
    return true;
}

// ----------------------------------------------------------------------------- experiments

namespace experiments {

inline void lift_checks(const Scenario& s, const RunOptions& opt, ReportWriter& rw, InvariantLog& inv,
                        nlohmann::ordered_json& res) {
    const auto rp = make_rough_path(s, s.cells);
    rw.set_rough_path_checksum(rp.checksum());
    const std::size_t P = rp.grid().size();
    double chen = 0.0;
    std::size_t triples = 0;
    if (P <= 65) {
        for (std::size_t a = 0; a < P; ++a)
            for (std::size_t b = a; b < P; ++b)
                for (std::size_t c = b; c < P; ++c) {
                    chen = std::max(chen, chen_residual_indices(rp, a, b, c));
                    ++triples;
                }
    } else {
        const RandomStream draws(s.seed, StreamTag::test_draws, 0);
        for (std::uint64_t r = 0; r < 4000; ++r) {
            std::size_t idx[3];
            for (int q = 0; q < 3; ++q)
                idx[q] = static_cast<std::size_t>(draws.uniform(3 * r + q) * static_cast<double>(P)) % P;
            std::sort(idx, idx + 3);
            chen = std::max(chen, chen_residual_indices(rp, idx[0], idx[1], idx[2]));
            ++triples;
        }
    }
    const double sym = sym_defect(to_stratonovich(rp)).max_sym_defect;
    const auto other = rp.convention() == Convention::ito ? Convention::stratonovich : Convention::ito;
    const auto back = with_convention(with_convention(rp, other), rp.convention());
    double round_trip = 0.0;
    for (std::size_t e = 0; e < rp.cell_areas().size(); ++e)
        round_trip = std::max(round_trip, std::abs(back.cell_areas()[e] - rp.cell_areas()[e]));
    const auto hn = holder_norms(rp);
    opt.logger.info("lift_checks: chen=" + num(chen) + " sym=" + num(sym));

    inv.add("chen_residual_max", chen <= 1e-12, chen, 1e-12);
    inv.add("sym_defect_max", sym <= 1e-12, sym, 1e-12);
    inv.add("ito_stratonovich_round_trip", round_trip <= 1e-13, round_trip, 1e-13);
    res["triples_checked"] = triples;
    res["holder_first"] = hn.first;
    res["holder_second"] = hn.second;
    rw.csv("lift_checks.csv", [&](std::ostream& os) {
        os << "check,value,tolerance\n";
        os << "chen_residual_max," << num(chen) << ",1e-12\n";
        os << "sym_defect_max," << num(sym) << ",1e-12\n";
        os << "ito_stratonovich_round_trip," << num(round_trip) << ",1e-13\n";
        os << "holder_first," << num(hn.first) << ",\n";
        os << "holder_second," << num(hn.second) << ",\n";
    });
}

inline void residual_scan(const Scenario& s, const RunOptions& opt, ReportWriter& rw, InvariantLog& inv,
                          nlohmann::ordered_json& res) {
    const auto c = make_coefficients(s);
    const std::size_t top = s.levels - 1;
    const auto fine = make_rough_path(s, s.cells << top);
    rw.set_rough_path_checksum(fine.checksum());
    std::vector<GridRoughPath> rps;
    std::vector<MeasureFlow> flows;
    SimulationConfig cfg{s.particles.front(), s.seed, make_scheme(s), make_initial(s), opt.threads};
    bool mass = true;
    for (std::size_t l = 0; l <= top; ++l) {
        rps.push_back(l == top ? fine : coarsen(fine, std::size_t{1} << (top - l)));
        flows.push_back(simulate(cfg, c, rps.back()).flow);
        mass = mass && mass_conserved(flows.back());
        opt.logger.info("residual_scan: simulated level " + std::to_string(l));
    }
    std::vector<ScanLevel> levels;
    for (std::size_t l = 0; l <= top; ++l) levels.push_back({&flows[l], &rps[l]});
    const auto scan = residual_order_scan(levels, test_functions::default_bank(s.d), c);
    const double target = 3.0 * s.alpha * 0.8;
    inv.add("mass_conservation", mass, mass ? 1.0 : 0.0, 0.0);
    // Order target only where no sampling enters: sigma = 0 and a deterministic driver.
    if (c.diffusion_is_zero() && s.driver != "brownian") {
        const double v = scan.all_exact ? std::numeric_limits<double>::infinity() : scan.min_slope;
        inv.add("residual_slope_min", scan.all_exact || scan.min_slope >= target, scan.all_exact ? 0.0 : v, target,
                scan.all_exact ? "exact" : "");
    }
    res["min_slope"] = scan.all_exact ? nlohmann::ordered_json("exact") : nlohmann::ordered_json(scan.min_slope);
    rw.csv("residuals.csv", [&](std::ostream& os) { write_residual_csv(os, scan.rows); });
    rw.csv("slopes.csv", [&](std::ostream& os) {
        os << "phi_id,slope,exact";
        for (std::size_t l = 0; l <= top; ++l) os << ",max_residual_L" << l << ",noise_floor_L" << l;
        os << '\n';
        for (const auto& p : scan.per_phi) {
            os << p.phi_id << ',' << (p.exact ? "" : num(p.slope)) << ',' << (p.exact ? "true" : "false");
            for (std::size_t l = 0; l <= top; ++l) os << ',' << num(p.max_residuals[l]) << ',' << num(p.noise_floors[l]);
            os << '\n';
        }
    });
}

inline void chaos_scan(const Scenario& s, const RunOptions& opt, ReportWriter& rw, InvariantLog& inv,
                       nlohmann::ordered_json& res) {
    const auto c = make_coefficients(s);
    const auto rp = make_rough_path(s, s.cells);
    rw.set_rough_path_checksum(rp.checksum());
    std::vector<double> w2;
    bool mass = true;
    for (std::size_t N : s.particles) {
        if (s.d > 1 && N > 512) throw std::invalid_argument("chaos_scan: d > 1 supports N <= 512 only");
        std::vector<EmpiricalMeasure> term;
        for (std::uint64_t rep = 0; rep < 2; ++rep) {
            SimulationConfig cfg{N, derived_seed(s.seed, N, rep), make_scheme(s), make_initial(s), opt.threads};
            const auto flow = simulate(cfg, c, rp).flow;
            mass = mass && mass_conserved(flow);
            term.push_back(flow.terminal());
        }
        w2.push_back(wasserstein2(term[0], term[1]));
        opt.logger.info("chaos_scan: N=" + std::to_string(N) + " W2=" + num(w2.back()));
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < w2.size(); ++i) decreasing = decreasing && w2[i] < w2[i - 1];
    inv.add("mass_conservation", mass, mass ? 1.0 : 0.0, 0.0);
    inv.add("w2_strictly_decreasing", decreasing, w2.back(), 0.0);
    res["w2"] = w2;
    rw.csv("chaos.csv", [&](std::ostream& os) {
        os << "N,w2_independent_pair\n";
        for (std::size_t i = 0; i < w2.size(); ++i) os << s.particles[i] << ',' << num(w2[i]) << '\n';
    });
}

inline void duality(const Scenario& s, const RunOptions& opt, ReportWriter& rw, InvariantLog& inv,
                    nlohmann::ordered_json& res) {
    const auto c = make_coefficients(s);
    const auto rp = make_rough_path(s, s.cells);
    rw.set_rough_path_checksum(rp.checksum());
    if (s.backward_times - 1 > s.cells) throw std::invalid_argument("duality: more backward times than grid cells");
    SimulationConfig cfg{s.particles.front(), s.seed, make_scheme(s), make_initial(s), opt.threads};
    const auto flow = simulate(cfg, c, rp).flow;
    std::vector<double> times;
    for (std::size_t j = 0; j < s.backward_times; ++j)
        times.push_back(rp.grid()[j * s.cells / (s.backward_times - 1)]);
    const auto lattice = lattice_for_flow(flow, s.lattice);
    const auto g = make_terminal(s);
    opt.logger.info("duality: backward solve on " + std::to_string(lattice.size()) + " lattice points");
    const auto u = solve_backward_fk(c, rp, g.value, lattice, times, s.samples,
                                     derived_seed(s.seed, 0xBAC4u, 0), opt.threads);
    const auto rep = duality_drift(flow, u);
    inv.add("mass_conservation", mass_conserved(flow), 1.0, 0.0);
    inv.add("rough_path_checksum_match", flow.rough_path_checksum == u.rough_path_checksum, 0.0, 0.0);
    inv.add("duality_drift_within_budget", rep.within_budget, rep.drift, rep.budget);
    res["drift"] = rep.drift;
    res["budget"] = rep.budget;
    res["forward_stderr"] = rep.forward_stderr;
    res["backward_stderr"] = rep.backward_stderr;
    res["interpolation_bound"] = rep.interpolation_bound;
    rw.csv("duality.csv", [&](std::ostream& os) {
        os << "t,pairing\n";
        for (std::size_t i = 0; i < times.size(); ++i) os << num(times[i]) << ',' << num(rep.pairings[i]) << '\n';
    });
    rw.csv("backward.csv", [&](std::ostream& os) { write_backward_csv(os, u); });
}

inline void diagnostics(const Scenario& s, const RunOptions& opt, ReportWriter& rw, InvariantLog& inv,
                        nlohmann::ordered_json& res) {
    const auto c = make_coefficients(s);
    const auto rp = make_rough_path(s, s.cells);
    rw.set_rough_path_checksum(rp.checksum());
    SimulationConfig cfg{s.particles.front(), s.seed, make_scheme(s), make_initial(s), opt.threads};
    const auto sim = simulate(cfg, c, rp);
    const auto& flow = sim.flow;
    const auto d2 = controlled_diagnostics(flow, rp, c, 2);
    const auto d4 = controlled_diagnostics(flow, rp, c, 4);
    const auto fh = flow_holder_diagnostic(flow, 1.0, s.alpha);
    inv.add("mass_conservation", mass_conserved(flow), 1.0, 0.0);
    res["holder_quotient_p2"] = d2.holder_quotient;
    res["holder_quotient_p4"] = d4.holder_quotient;
    res["remainder_quotient"] = d2.remainder_quotient;
    res["flow_holder_lower_bound"] = fh.sup;
    res["flow_holder_worst_phi"] = fh.worst_phi;
    if (s.d == 1 || flow.particles() <= 512) res["w2_holder_quotient"] = wasserstein_holder_quotient(flow, s.alpha);
    rw.csv("steps.csv", [&](std::ostream& os) {
        os << "t,max_increment,drift,brownian,first_level,second_level\n";
        for (std::size_t k = 0; k < sim.steps.size(); ++k) {
            const auto& r = sim.steps[k];
            os << num(flow.grid[k + 1]) << ',' << num(r.max_increment) << ',' << num(r.drift) << ','
               << num(r.brownian) << ',' << num(r.first_level) << ',' << num(r.second_level) << '\n';
        }
    });
    if (s.dump_flow) rw.csv("flow.csv", [&](std::ostream& os) { write_flow_csv(os, flow); });
}

}  // namespace experiments

/// Runs the scenario's experiment, writes CSV reports and summary.json into opt.out_dir.
/// Exit code: 0 success, 2 a reported invariant failed, 3 numerical abort.
inline RunResult run(Scenario s, const RunOptions& opt) {
    if (opt.seed_override) s.seed = *opt.seed_override;
    const std::uint64_t sc = scenario_checksum(s);
    ReportWriter rw(opt, sc);
    InvariantLog inv;
    nlohmann::ordered_json res = nlohmann::ordered_json::object();
    RunResult out;
    std::string status = "ok";
    try {
        if (s.experiment == "lift_checks") experiments::lift_checks(s, opt, rw, inv, res);
        else if (s.experiment == "residual_scan") experiments::residual_scan(s, opt, rw, inv, res);
        else if (s.experiment == "chaos_scan") experiments::chaos_scan(s, opt, rw, inv, res);
        else if (s.experiment == "duality") experiments::duality(s, opt, rw, inv, res);
        else experiments::diagnostics(s, opt, rw, inv, res);
        out.exit_code = inv.all_pass ? kExitOk : kExitInvariant;
        if (!inv.all_pass) status = "invariant_violation";
    } catch (const NumericalAbort& e) {
        opt.logger.error(e.what());
        out.exit_code = kExitNumerical;
        status = "numerical_abort";
        res["abort_time"] = e.time;
        res["abort_particle"] = e.particle;
    }
    auto& j = out.summary;
    if (opt.timestamp) j["generated_at"] = rw.stamp();
    j["scenario"] = s.name;
    j["experiment"] = s.experiment;
    j["scenario_checksum"] = hex64(sc);
    j["rough_path_checksum"] = hex64(rw.rough_path_checksum());
    j["status"] = status;
    j["exit_code"] = out.exit_code;
    j["invariants"] = inv.items;
    j["results"] = res;
    std::ofstream os(opt.out_dir / "summary.json", std::ios::binary);
    os << j.dump(2) << '\n';
    return out;
}

}  // namespace roughmkv
