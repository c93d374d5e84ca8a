#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "brownian.hpp"
#include "coefficients.hpp"
#include "measure_flow.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "rough_path.hpp"

namespace roughmkv {

/// Raised when a state becomes NaN or infinite.
class NumericalAbort : public std::runtime_error {
public:
    NumericalAbort(double t, std::size_t particle)
        : std::runtime_error("numerical abort: non-finite state at t=" + std::to_string(t) + " particle " +
                             std::to_string(particle)),
          time(t),
          particle(particle) {}
    double time;
    std::size_t particle;
};

enum class Scheme { DavieFull, DavieNoLift };

inline const char* to_string(Scheme s) { return s == Scheme::DavieFull ? "davie_full" : "davie_no_lift"; }

namespace initial_laws {
struct PointMass {
    std::vector<double> x0;
};
struct Gaussian {
    std::vector<double> mean;
    double sd = 1.0;
};
struct Uniform {
    double lo = 0.0, hi = 1.0;  // every coordinate
};
/// N x d points; N must match the configured particle count.
struct Explicit {
    std::vector<double> points;
};
}  // namespace initial_laws

using InitialLaw =
    std::variant<initial_laws::PointMass, initial_laws::Gaussian, initial_laws::Uniform, initial_laws::Explicit>;

struct SimulationConfig {
    std::size_t particles = 1;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::DavieFull;
    InitialLaw initial = initial_laws::PointMass{{0.0}};
    unsigned threads = 1;
};

/// N x d states plus the stream index each particle draws its Brownian motion from.
struct ParticleEnsemble {
    std::size_t dim = 1;
    std::vector<double> states;
    std::vector<std::uint64_t> stream_ids;

    std::size_t size() const { return stream_ids.size(); }
    std::span<const double> particle(std::size_t i) const { return {states.data() + i * dim, dim}; }
};

inline ParticleEnsemble sample_initial(const InitialLaw& law, std::size_t N, std::size_t d, std::uint64_t seed) {
    if (N < 1) throw std::invalid_argument("sample_initial: N must be >= 1");
    ParticleEnsemble e;
    e.dim = d;
    e.states.assign(N * d, 0.0);
    e.stream_ids.resize(N);
    for (std::size_t i = 0; i < N; ++i) e.stream_ids[i] = i;
    std::visit(
        [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, initial_laws::PointMass>) {
                if (l.x0.size() != d) throw std::invalid_argument("sample_initial: point mass has wrong dimension");
                for (std::size_t i = 0; i < N; ++i) std::copy(l.x0.begin(), l.x0.end(), e.states.begin() + i * d);
            } else if constexpr (std::is_same_v<T, initial_laws::Gaussian>) {
                if (l.mean.size() != d) throw std::invalid_argument("sample_initial: gaussian mean has wrong dimension");
                for (std::size_t i = 0; i < N; ++i) {
                    const RandomStream s(seed, StreamTag::initial_law, i);
                    for (std::size_t j = 0; j < d; ++j) e.states[i * d + j] = l.mean[j] + l.sd * s.normal(j);
                }
            } else if constexpr (std::is_same_v<T, initial_laws::Uniform>) {
                if (!(l.hi > l.lo)) throw std::invalid_argument("sample_initial: uniform needs lo < hi");
                for (std::size_t i = 0; i < N; ++i) {
                    const RandomStream s(seed, StreamTag::initial_law, i);
                    for (std::size_t j = 0; j < d; ++j) e.states[i * d + j] = l.lo + (l.hi - l.lo) * s.uniform(j);
                }
            } else {
                if (l.points.size() != N * d) throw std::invalid_argument("sample_initial: explicit law must be N x d");
                e.states = l.points;
            }
        },
        law);
    return e;
}

struct StepReport {
    double max_increment = 0.0;
    // max over particles of the sup-norm of each contribution
    double drift = 0.0, brownian = 0.0, first_level = 0.0, second_level = 0.0;
};

/// Per-particle contributions of one step, N x d each.
struct StepTerms {
    std::vector<double> drift, brownian, first_level, second_level;
};

namespace detail {
inline std::size_t cell_index(const GridRoughPath& rp, double s, double t) {
    const auto i = rp.grid().find(s), j = rp.grid().find(t);
    if (!i || !j || *j != *i + 1) throw std::invalid_argument("step_davie: [s, t] is not a grid cell of the rough path");
    return *i;
}
}  // namespace detail

/// One Davie step over the grid cell [s, t] of rp:
///   X <- X + b h + sigma dB + f_k dW^k + Phi_{kl} WW^{kl}
/// with every coefficient evaluated at (s, X, mu) for the pre-step empirical measure mu.
/// dB is N x m. DavieNoLift drops the WW term.
inline ParticleEnsemble step_davie(const ParticleEnsemble& ens, const CoefficientSet& c, const GridRoughPath& rp,
                                   double s, double t, std::span<const double> dB, Scheme scheme = Scheme::DavieFull,
                                   unsigned threads = 1, StepReport* report = nullptr, StepTerms* terms = nullptr) {
    const auto& dm = c.dims();
    const std::size_t N = ens.size(), d = dm.d, m = dm.m, n = dm.n;
    if (ens.dim != d) throw std::invalid_argument("step_davie: ensemble dimension does not match coefficients");
    if (rp.dim() != n) throw std::invalid_argument("step_davie: rough path dimension does not match coefficients");
    if (dB.size() != N * m) throw std::invalid_argument("step_davie: dB must be N x m");
    const std::size_t k = detail::cell_index(rp, s, t);
    const double h = t - s;
    const auto dW = rp.increment(k, k + 1);
    const auto WW = rp.cell_area(k);

    const EmpiricalMeasure mu(d, ens.states);
    const bool rough = !c.rough_is_zero();
    const bool lift = rough && scheme == Scheme::DavieFull;
    std::optional<GammaPrimeEvaluator> gamma;
    if (rough) gamma.emplace(c, s, mu);

    ParticleEnsemble out = ens;
    if (terms) {
        terms->drift.assign(N * d, 0.0);
        terms->brownian.assign(N * d, 0.0);
        terms->first_level.assign(N * d, 0.0);
        terms->second_level.assign(N * d, 0.0);
    }
    std::vector<double> mags(N * 5, 0.0);
    parallel_for(N, threads, [&](std::size_t i) {
        const auto x = ens.particle(i);
        std::vector<double> b(d, 0.0), sig(d * m, 0.0), phi(d * n * n, 0.0);
        std::vector<double> tb(d, 0.0), tB(d, 0.0), t1(d, 0.0), t2(d, 0.0);
        if (!c.drift_is_zero()) {
            c.b(s, x, mu, b);
            for (std::size_t a = 0; a < d; ++a) tb[a] = b[a] * h;
        }
        if (!c.diffusion_is_zero()) {
            c.sigma(s, x, mu, sig);
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t l = 0; l < m; ++l) tB[a] += sig[a * m + l] * dB[i * m + l];
        }
        if (rough) {
            const auto fx = gamma->f_at(i);
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t q = 0; q < n; ++q) t1[a] += fx[a * n + q] * dW[q];
            if (lift) {
                (*gamma)(x, fx, phi);
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t p = 0; p < n; ++p)
                        for (std::size_t q = 0; q < n; ++q) t2[a] += phi[(a * n + p) * n + q] * WW[p * n + q];
            }
        }
        double inc = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            const double delta = tb[a] + tB[a] + t1[a] + t2[a];
            out.states[i * d + a] = x[a] + delta;
            inc = std::max(inc, std::abs(delta));
            mags[i * 5 + 1] = std::max(mags[i * 5 + 1], std::abs(tb[a]));
            mags[i * 5 + 2] = std::max(mags[i * 5 + 2], std::abs(tB[a]));
            mags[i * 5 + 3] = std::max(mags[i * 5 + 3], std::abs(t1[a]));
            mags[i * 5 + 4] = std::max(mags[i * 5 + 4], std::abs(t2[a]));
        }
        mags[i * 5] = inc;
        if (terms) {
            std::copy(tb.begin(), tb.end(), terms->drift.begin() + i * d);
            std::copy(tB.begin(), tB.end(), terms->brownian.begin() + i * d);
            std::copy(t1.begin(), t1.end(), terms->first_level.begin() + i * d);
            std::copy(t2.begin(), t2.end(), terms->second_level.begin() + i * d);
        }
    });
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t a = 0; a < d; ++a)
            if (!std::isfinite(out.states[i * d + a])) throw NumericalAbort(t, i);
    if (report) {
        *report = StepReport{};
        for (std::size_t i = 0; i < N; ++i) {
            report->max_increment = std::max(report->max_increment, mags[i * 5]);
            report->drift = std::max(report->drift, mags[i * 5 + 1]);
            report->brownian = std::max(report->brownian, mags[i * 5 + 2]);
            report->first_level = std::max(report->first_level, mags[i * 5 + 3]);
            report->second_level = std::max(report->second_level, mags[i * 5 + 4]);
        }
    }
    return out;
}

struct SimulationResult {
    MeasureFlow flow;
    std::vector<StepReport> steps;
};

/// Brownian increments of every particle on the rough-path grid, laid out [cell][particle][component].
inline std::vector<double> particle_noise(const ParticleEnsemble& ens, std::size_t m, const TimeGrid& grid,
                                          std::uint64_t seed, unsigned threads = 1) {
    const std::size_t N = ens.size(), K = grid.cells();
    std::vector<double> noise(K * N * m);
    parallel_for(N, threads, [&](std::size_t i) {
        const auto inc = brownian_increments(RandomStream(seed, StreamTag::particle_noise, ens.stream_ids[i]), m,
                                             grid.points());
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < m; ++l) noise[(k * N + i) * m + l] = inc[k * m + l];
    });
    return noise;
}

/// Runs step_davie over every cell of rp's grid starting from a given ensemble.
inline SimulationResult simulate(const ParticleEnsemble& initial, const CoefficientSet& c, const GridRoughPath& rp,
                                 std::uint64_t seed, Scheme scheme = Scheme::DavieFull, unsigned threads = 1) {
    const auto& grid = rp.grid();
    const std::size_t N = initial.size(), m = c.dims().m, K = grid.cells();
    for (std::size_t i = 0; i < initial.states.size(); ++i)
        if (!std::isfinite(initial.states[i])) throw NumericalAbort(0.0, i / std::max<std::size_t>(initial.dim, 1));
    std::vector<double> noise;
    if (!c.diffusion_is_zero()) noise = particle_noise(initial, m, grid, seed, threads);
    else noise.assign(K * N * m, 0.0);

    std::vector<EmpiricalMeasure> snaps;
    snaps.reserve(K + 1);
    snaps.emplace_back(initial.dim, initial.states);
    std::vector<StepReport> reports(K);
    ParticleEnsemble cur = initial;
    for (std::size_t k = 0; k < K; ++k) {
        cur = step_davie(cur, c, rp, grid[k], grid[k + 1], std::span<const double>(noise).subspan(k * N * m, N * m),
                         scheme, threads, &reports[k]);
        snaps.emplace_back(cur.dim, cur.states);
    }
    return {MeasureFlow(grid, std::move(snaps), rp.checksum()), std::move(reports)};
}

/// The time grid is the grid of rp.
inline SimulationResult simulate(const SimulationConfig& cfg, const CoefficientSet& c, const GridRoughPath& rp) {
    if (cfg.particles < 1) throw std::invalid_argument("simulate: N must be >= 1");
    const auto init = sample_initial(cfg.initial, cfg.particles, c.dims().d, cfg.seed);
    return simulate(init, c, rp, cfg.seed, cfg.scheme, cfg.threads);
}

// ---------------------------------------------------------------------------

struct ControlledDiagnostics {
    double holder_quotient = 0.0;     // sup (E|dX_{s,t}|^p)^{1/p} / |t-s|^alpha
    double remainder_quotient = 0.0;  // sup |E R^X_{s,t}| / |t-s|^{2 alpha}
};

/// Empirical controlled-path norms of a simulated flow. R^X_{s,t} = dX_{s,t} - f(s, X_s, mu_s) dW_{s,t};
/// the expectation is the cross-particle average under the one fixed rough path, so it is
/// an estimate that is exact only as N grows.
inline ControlledDiagnostics controlled_diagnostics(const MeasureFlow& flow, const GridRoughPath& rp,
                                                    const CoefficientSet& c, int p) {
    if (p != 2 && p != 4) throw std::invalid_argument("controlled_diagnostics: p must be 2 or 4");
    if (!(flow.grid == rp.grid())) throw std::invalid_argument("controlled_diagnostics: flow and rough path grids differ");
    const std::size_t K = flow.grid.size(), N = flow.particles(), d = flow.dim(), n = c.dims().n;
    const double alpha = rp.alpha();
    // f at every particle and snapshot
    std::vector<double> ftab;
    const bool rough = !c.rough_is_zero();
    if (rough) {
        ftab.resize(K * N * d * n);
        for (std::size_t k = 0; k < K; ++k) {
            const GammaPrimeEvaluator ev(c, flow.grid[k], flow.at(k));
            for (std::size_t i = 0; i < N; ++i) {
                const auto fx = ev.f_at(i);
                std::copy(fx.begin(), fx.end(), ftab.begin() + (k * N + i) * d * n);
            }
        }
    }
    ControlledDiagnostics out;
    std::vector<double> mom(N), rem(N * d);
    for (std::size_t s = 0; s < K; ++s)
        for (std::size_t t = s + 1; t < K; ++t) {
            const auto dW = rp.increment(s, t);
            const double dt = flow.grid[t] - flow.grid[s];
            for (std::size_t i = 0; i < N; ++i) {
                const auto xs = flow.at(s).particle(i), xt = flow.at(t).particle(i);
                double sq = 0.0;
                for (std::size_t a = 0; a < d; ++a) {
                    const double dx = xt[a] - xs[a];
                    sq += dx * dx;
                    double r = dx;
                    if (rough)
                        for (std::size_t q = 0; q < n; ++q) r -= ftab[((s * N + i) * d + a) * n + q] * dW[q];
                    rem[i * d + a] = r;
                }
                mom[i] = p == 2 ? sq : sq * sq;
            }
            const double lp = std::pow(order_invariant_mean(mom), 1.0 / p);
            out.holder_quotient = std::max(out.holder_quotient, lp / std::pow(dt, alpha));
            const auto mean = order_invariant_column_means(rem, N, d);
            double norm = 0.0;
            for (double v : mean) norm += v * v;
            out.remainder_quotient = std::max(out.remainder_quotient, std::sqrt(norm) / std::pow(dt, 2.0 * alpha));
        }
    return out;
}

}  // namespace roughmkv
