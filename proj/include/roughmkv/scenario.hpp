#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "checksum.hpp"

namespace roughmkv {

/// Parse failure with the 1-based line number (0 when the problem is not tied to a line).
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
    std::size_t line;
};

struct Scenario {
    // [scenario]
    std::string name = "unnamed";
    std::string experiment = "diagnostics";
    std::uint64_t seed = 1;
    // [dims]
    std::size_t d = 1, m = 1, n = 1;
    // [grid]
    double horizon = 1.0;
    std::size_t cells = 64;
    std::size_t levels = 4;  // dyadic resolutions for residual_scan: cells, 2 cells, ...
    // [driver]
    std::string driver = "brownian";  // brownian | linear | sine
    std::optional<std::uint64_t> driver_seed;
    std::size_t refinement = 64;
    double alpha = 0.4;
    std::string convention = "stratonovich";
    double driver_slope = 1.0;      // linear: W^k(t) = slope t
    double driver_amplitude = 1.0;  // sine: W^k(t) = amplitude sin(2 pi frequency t + k/2)
    double driver_frequency = 1.0;
    // [drift]
    std::string drift = "zero";  // zero | linear_mean_field | sine_mean_field
    double drift_a = 0.0, drift_c = 0.0;
    // [diffusion]
    std::string diffusion = "zero";  // zero | constant | affine
    double diffusion_s0 = 0.0, diffusion_s1 = 0.0;
    // [rough]
    std::string rough = "zero";  // zero | constant | affine | sine | moment_sine | moment_linear | gaussian_convolution | sine_convolution
    double rough_value = 0.0, rough_slope = 0.0, rough_offset = 0.0, rough_amplitude = 0.0, rough_frequency = 1.0;
    double rough_a = 0.0, rough_c = 0.0, rough_width = 1.0;
    // [particles]
    std::vector<std::size_t> particles = {1000};
    std::string initial = "point";  // point | gaussian | uniform
    double initial_x0 = 0.0, initial_sd = 1.0, initial_lo = 0.0, initial_hi = 1.0;
    std::string scheme = "davie_full";  // davie_full | davie_no_lift
    // [backward]
    std::size_t samples = 4096;
    std::size_t backward_times = 5;
    std::size_t lattice = 33;
    std::string terminal = "bump";  // bump | sin | cos | linear | half_square | const
    // [report]
    bool dump_flow = false;

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string nearest(std::string_view key, const std::vector<std::string>& valid) {
    std::string best;
    std::size_t score = static_cast<std::size_t>(-1);
    for (const auto& v : valid) {
        const auto s = levenshtein(key, v);
        if (s < score) {
            score = s;
            best = v;
        }
    }
    return best;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline const std::map<std::string, std::vector<std::string>>& scenario_schema() {
    static const std::map<std::string, std::vector<std::string>> schema = {
        {"scenario", {"name", "experiment", "seed"}},
        {"dims", {"d", "m", "n"}},
        {"grid", {"horizon", "cells", "levels"}},
        {"driver", {"kind", "seed", "refinement", "alpha", "convention", "slope", "amplitude", "frequency"}},
        {"drift", {"family", "a", "c"}},
        {"diffusion", {"family", "s0", "s1"}},
        {"rough", {"family", "value", "slope", "offset", "amplitude", "frequency", "a", "c", "width"}},
        {"particles", {"n", "initial", "x0", "sd", "lo", "hi", "scheme"}},
        {"backward", {"samples", "times", "lattice", "terminal"}},
        {"report", {"dump_flow"}},
    };
    return schema;
}

/// Checks cross-field consistency; throws ScenarioError (line 0).
inline void validate(const Scenario& s) {
    auto fail = [](const std::string& w) { throw ScenarioError(0, w); };
    auto one_of = [&](const std::string& field, const std::string& v, std::initializer_list<const char*> ok) {
        for (const char* o : ok)
            if (v == o) return;
        std::string list;
        for (const char* o : ok) list += std::string(list.empty() ? "" : ", ") + o;
        fail(field + ": '" + v + "' is not one of " + list);
    };
    one_of("scenario.experiment", s.experiment, {"lift_checks", "residual_scan", "chaos_scan", "duality", "diagnostics"});
    one_of("driver.kind", s.driver, {"brownian", "linear", "sine"});
    one_of("driver.convention", s.convention, {"stratonovich", "ito"});
    one_of("drift.family", s.drift, {"zero", "linear_mean_field", "sine_mean_field"});
    one_of("diffusion.family", s.diffusion, {"zero", "constant", "affine"});
    one_of("rough.family", s.rough,
           {"zero", "constant", "affine", "sine", "moment_sine", "moment_linear", "gaussian_convolution",
            "sine_convolution"});
    one_of("particles.initial", s.initial, {"point", "gaussian", "uniform"});
    one_of("particles.scheme", s.scheme, {"davie_full", "davie_no_lift"});
    one_of("backward.terminal", s.terminal, {"bump", "sin", "cos", "linear", "half_square", "const"});
    if (s.d < 1 || s.m < 1 || s.n < 1) fail("dims: d, m, n must be >= 1");
    if (!(s.horizon > 0.0) || !std::isfinite(s.horizon)) fail("grid.horizon must be positive");
    if (s.cells < 1) fail("grid.cells must be >= 1");
    if (s.refinement < 1) fail("driver.refinement must be >= 1");
    if (!(s.alpha > 1.0 / 3.0 && s.alpha <= 0.5)) fail("driver.alpha must lie in (1/3, 1/2]");
    if (s.particles.empty()) fail("particles.n must list at least one count");
    for (auto N : s.particles)
        if (N < 1) fail("particles.n entries must be >= 1");
    if (s.rough_width <= 0.0) fail("rough.width must be positive");
    if (s.initial == "uniform" && !(s.initial_hi > s.initial_lo)) fail("particles: need lo < hi");
    if (s.experiment == "residual_scan" && s.levels < 3) fail("grid.levels must be >= 3 for residual_scan");
    if (s.experiment == "chaos_scan" && s.particles.size() < 2) fail("particles.n needs >= 2 counts for chaos_scan");
    if (s.experiment == "duality") {
        if (s.d > 2) fail("duality needs d = 1 or 2");
        if (s.drift != "zero" && s.drift_c != 0.0) fail("duality needs measure-free drift (drift.c = 0)");
        if (s.rough.rfind("moment", 0) == 0 || s.rough.find("convolution") != std::string::npos)
            fail("duality needs a measure-free rough family");
        if (s.samples < 2) fail("backward.samples must be >= 2");
        if (s.backward_times < 2) fail("backward.times must be >= 2");
        if (s.lattice < 5) fail("backward.lattice must be >= 5");
    }
}

inline Scenario parse_scenario(std::string_view text) {
    Scenario s;
    const auto& schema = scenario_schema();
    std::vector<std::string> sections;
    for (const auto& [k, v] : schema) sections.push_back(k);
    std::string section;
    std::size_t lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find_first_of("#;");
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ScenarioError(lineno, "malformed section header '" + line + "'");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (!schema.count(section))
                throw ScenarioError(lineno, "unknown section [" + section + "]; did you mean [" +
                                                detail::nearest(section, sections) + "]?");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ScenarioError(lineno, "expected 'key = value'");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string val = detail::trim(std::string_view(line).substr(eq + 1));
        if (section.empty()) throw ScenarioError(lineno, "key '" + key + "' appears before any section");
        const auto& keys = schema.at(section);
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ScenarioError(lineno, "unknown key '" + key + "' in [" + section + "]; did you mean '" +
                                            detail::nearest(key, keys) + "'?");
        const std::string field = section + "." + key;
        auto as_double = [&]() {
            char* end = nullptr;
            const double v = std::strtod(val.c_str(), &end);
            if (val.empty() || *end != '\0' || !std::isfinite(v))
                throw ScenarioError(lineno, field + ": expected a finite number, got '" + val + "'");
            return v;
        };
        auto as_u64 = [&](std::string_view v) {
            std::uint64_t out = 0;
            const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
            if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
                throw ScenarioError(lineno, field + ": expected a non-negative integer, got '" + std::string(v) + "'");
            return out;
        };
        auto as_size = [&]() { return static_cast<std::size_t>(as_u64(val)); };
        auto as_word = [&]() {
            if (val.empty()) throw ScenarioError(lineno, field + ": empty value");
            return val;
        };

        if (field == "scenario.name") s.name = as_word();
        else if (field == "scenario.experiment") s.experiment = as_word();
        else if (field == "scenario.seed") s.seed = as_u64(val);
        else if (field == "dims.d") s.d = as_size();
        else if (field == "dims.m") s.m = as_size();
        else if (field == "dims.n") s.n = as_size();
        else if (field == "grid.horizon") s.horizon = as_double();
        else if (field == "grid.cells") s.cells = as_size();
        else if (field == "grid.levels") s.levels = as_size();
        else if (field == "driver.kind") s.driver = as_word();
        else if (field == "driver.seed") s.driver_seed = as_u64(val);
        else if (field == "driver.refinement") s.refinement = as_size();
        else if (field == "driver.alpha") s.alpha = as_double();
        else if (field == "driver.convention") s.convention = as_word();
        else if (field == "driver.slope") s.driver_slope = as_double();
        else if (field == "driver.amplitude") s.driver_amplitude = as_double();
        else if (field == "driver.frequency") s.driver_frequency = as_double();
        else if (field == "drift.family") s.drift = as_word();
        else if (field == "drift.a") s.drift_a = as_double();
        else if (field == "drift.c") s.drift_c = as_double();
        else if (field == "diffusion.family") s.diffusion = as_word();
        else if (field == "diffusion.s0") s.diffusion_s0 = as_double();
        else if (field == "diffusion.s1") s.diffusion_s1 = as_double();
        else if (field == "rough.family") s.rough = as_word();
        else if (field == "rough.value") s.rough_value = as_double();
        else if (field == "rough.slope") s.rough_slope = as_double();
        else if (field == "rough.offset") s.rough_offset = as_double();
        else if (field == "rough.amplitude") s.rough_amplitude = as_double();
        else if (field == "rough.frequency") s.rough_frequency = as_double();
        else if (field == "rough.a") s.rough_a = as_double();
        else if (field == "rough.c") s.rough_c = as_double();
        else if (field == "rough.width") s.rough_width = as_double();
        else if (field == "particles.n") {
            s.particles.clear();
            std::string_view rest = val;
            while (true) {
                const auto comma = rest.find(',');
                s.particles.push_back(static_cast<std::size_t>(as_u64(detail::trim(rest.substr(0, comma)))));
                if (comma == std::string_view::npos) break;
                rest = rest.substr(comma + 1);
            }
        } else if (field == "particles.initial") s.initial = as_word();
        else if (field == "particles.x0") s.initial_x0 = as_double();
        else if (field == "particles.sd") s.initial_sd = as_double();
        else if (field == "particles.lo") s.initial_lo = as_double();
        else if (field == "particles.hi") s.initial_hi = as_double();
        else if (field == "particles.scheme") s.scheme = as_word();
        else if (field == "backward.samples") s.samples = as_size();
        else if (field == "backward.times") s.backward_times = as_size();
        else if (field == "backward.lattice") s.lattice = as_size();
        else if (field == "backward.terminal") s.terminal = as_word();
        else if (field == "report.dump_flow") {
            if (val == "true") s.dump_flow = true;
            else if (val == "false") s.dump_flow = false;
            else throw ScenarioError(lineno, field + ": expected true or false");
        }
    }
    validate(s);
    return s;
}

/// Canonical text: every key, fixed order, %.17g numbers. Parsing it gives back the same Scenario.
inline std::string emit_canonical(const Scenario& s) {
    using detail::fmt_double;
    std::ostringstream o;
    o << "[scenario]\nname = " << s.name << "\nexperiment = " << s.experiment << "\nseed = " << s.seed << "\n\n";
    o << "[dims]\nd = " << s.d << "\nm = " << s.m << "\nn = " << s.n << "\n\n";
    o << "[grid]\nhorizon = " << fmt_double(s.horizon) << "\ncells = " << s.cells << "\nlevels = " << s.levels
      << "\n\n";
    o << "[driver]\nkind = " << s.driver << '\n';
    if (s.driver_seed) o << "seed = " << *s.driver_seed << '\n';
    o << "refinement = " << s.refinement << "\nalpha = " << fmt_double(s.alpha) << "\nconvention = " << s.convention
      << "\nslope = " << fmt_double(s.driver_slope) << "\namplitude = " << fmt_double(s.driver_amplitude)
      << "\nfrequency = " << fmt_double(s.driver_frequency) << "\n\n";
    o << "[drift]\nfamily = " << s.drift << "\na = " << fmt_double(s.drift_a) << "\nc = " << fmt_double(s.drift_c)
      << "\n\n";
    o << "[diffusion]\nfamily = " << s.diffusion << "\ns0 = " << fmt_double(s.diffusion_s0)
      << "\ns1 = " << fmt_double(s.diffusion_s1) << "\n\n";
    o << "[rough]\nfamily = " << s.rough << "\nvalue = " << fmt_double(s.rough_value)
      << "\nslope = " << fmt_double(s.rough_slope) << "\noffset = " << fmt_double(s.rough_offset)
      << "\namplitude = " << fmt_double(s.rough_amplitude) << "\nfrequency = " << fmt_double(s.rough_frequency)
      << "\na = " << fmt_double(s.rough_a) << "\nc = " << fmt_double(s.rough_c)
      << "\nwidth = " << fmt_double(s.rough_width) << "\n\n";
    o << "[particles]\nn = ";
    for (std::size_t i = 0; i < s.particles.size(); ++i) o << (i ? ", " : "") << s.particles[i];
    o << "\ninitial = " << s.initial << "\nx0 = " << fmt_double(s.initial_x0) << "\nsd = " << fmt_double(s.initial_sd)
      << "\nlo = " << fmt_double(s.initial_lo) << "\nhi = " << fmt_double(s.initial_hi) << "\nscheme = " << s.scheme
      << "\n\n";
    o << "[backward]\nsamples = " << s.samples << "\ntimes = " << s.backward_times << "\nlattice = " << s.lattice
      << "\nterminal = " << s.terminal << "\n\n";
    o << "[report]\ndump_flow = " << (s.dump_flow ? "true" : "false") << '\n';
    return o.str();
}

inline std::uint64_t scenario_checksum(const Scenario& s) { return fnv1a(emit_canonical(s)); }

}  // namespace roughmkv
