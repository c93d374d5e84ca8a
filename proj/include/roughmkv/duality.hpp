#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "brownian.hpp"
#include "coefficients.hpp"
#include "measure_flow.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "rough_path.hpp"
#include "summation.hpp"

namespace roughmkv {

/// Tensor-product lattice of uniform axes, d = 1 or 2. Point index is row-major over axes.
class SpatialLattice {
public:
    SpatialLattice(std::vector<double> lo, std::vector<double> hi, std::vector<std::size_t> points)
        : lo_(std::move(lo)), hi_(std::move(hi)), n_(std::move(points)) {
        if (lo_.empty() || lo_.size() > 2 || hi_.size() != lo_.size() || n_.size() != lo_.size())
            throw std::invalid_argument("SpatialLattice: d must be 1 or 2");
        for (std::size_t a = 0; a < lo_.size(); ++a) {
            if (!(hi_[a] > lo_[a])) throw std::invalid_argument("SpatialLattice: need lo < hi");
            if (n_[a] < 4) throw std::invalid_argument("SpatialLattice: need >= 4 points per axis");
        }
    }

    std::size_t dim() const { return lo_.size(); }
    std::size_t axis_points(std::size_t a) const { return n_[a]; }
    double spacing(std::size_t a) const { return (hi_[a] - lo_[a]) / static_cast<double>(n_[a] - 1); }
    double node(std::size_t a, std::size_t i) const { return lo_[a] + spacing(a) * static_cast<double>(i); }
    std::size_t size() const {
        std::size_t s = 1;
        for (auto v : n_) s *= v;
        return s;
    }
    std::vector<double> point(std::size_t p) const {
        std::vector<double> x(dim());
        if (dim() == 1) {
            x[0] = node(0, p);
        } else {
            x[0] = node(0, p / n_[1]);
            x[1] = node(1, p % n_[1]);
        }
        return x;
    }
    std::size_t index(std::size_t i, std::size_t j = 0) const { return dim() == 1 ? i : i * n_[1] + j; }

private:
    std::vector<double> lo_, hi_;
    std::vector<std::size_t> n_;
};

/// u_t(x) on lattice x times; u and stderr laid out [time][lattice point].
struct BackwardSolution {
    SpatialLattice lattice;
    std::vector<double> times;
    std::vector<double> u, stderr_;
    std::size_t samples = 0;
    std::uint64_t rough_path_checksum = 0;

    double value(std::size_t ti, std::size_t p) const { return u[ti * lattice.size() + p]; }
    double standard_error(std::size_t ti, std::size_t p) const { return stderr_[ti * lattice.size() + p]; }
};

using ScalarFn = std::function<double(std::span<const double>)>;

/// u_s(x) = E g(Y^{s,x}_tau), tau = times.back(), by Monte Carlo over M paths of the
/// measure-free rough SDE driven by the same rough path and advanced with the Davie step.
/// Path j uses the Brownian motion keyed by (seed, j) for every (s, x), so the estimate is
/// smooth in x (common random numbers).
inline BackwardSolution solve_backward_fk(const CoefficientSet& c, const GridRoughPath& rp, const ScalarFn& g,
                                          const SpatialLattice& lattice, std::vector<double> times, std::size_t M,
                                          std::uint64_t seed, unsigned threads = 1) {
    if (!c.measure_free()) throw std::invalid_argument("solve_backward_fk: coefficients must be measure-free");
    if (M < 2) throw std::invalid_argument("solve_backward_fk: need M >= 2");
    const auto& dm = c.dims();
    if (dm.d != lattice.dim()) throw std::invalid_argument("solve_backward_fk: lattice dimension mismatch");
    if (rp.dim() != dm.n) throw std::invalid_argument("solve_backward_fk: rough path dimension mismatch");
    if (times.empty()) throw std::invalid_argument("solve_backward_fk: need at least one time");
    const auto& grid = rp.grid();
    std::vector<std::size_t> tidx;
    for (double t : times) tidx.push_back(grid.index_of(t));
    if (!std::is_sorted(tidx.begin(), tidx.end())) throw std::invalid_argument("solve_backward_fk: times must increase");
    const std::size_t d = dm.d, m = dm.m, n = dm.n, K = grid.cells(), P = lattice.size(), T = times.size();
    const std::size_t tau = tidx.back();

    std::vector<double> noise;
    if (!c.diffusion_is_zero()) {
        noise.resize(M * K * m);
        parallel_for(M, threads, [&](std::size_t j) {
            const auto inc = brownian_increments(RandomStream(seed, StreamTag::backward_paths, j), m, grid.points());
            std::copy(inc.begin(), inc.end(), noise.begin() + j * K * m);
        });
    }

    // Per-cell rough data and a placeholder measure (the coefficients ignore it).
    const EmpiricalMeasure dummy(d, std::vector<double>(d, 0.0));
    BackwardSolution sol{lattice, times, std::vector<double>(T * P), std::vector<double>(T * P), M, rp.checksum()};
    const bool rough = !c.rough_is_zero();
    parallel_for(T * P, threads, [&](std::size_t job) {
        const std::size_t ti = job / P, p = job % P;
        const auto x0 = lattice.point(p);
        std::vector<double> y(d), b(d), sig(d * m), f(d * n), Phi(d * n * n), dxf(d * d * n), fpr(d * n * n), vals(M);
        for (std::size_t j = 0; j < M; ++j) {
            y = x0;
            for (std::size_t k = tidx[ti]; k < tau; ++k) {
                const double s = grid[k], h = grid.step(k);
                std::vector<double> delta(d, 0.0);
                if (!c.drift_is_zero()) {
                    c.b(s, y, dummy, b);
                    for (std::size_t a = 0; a < d; ++a) delta[a] += b[a] * h;
                }
                if (!c.diffusion_is_zero()) {
                    c.sigma(s, y, dummy, sig);
                    const double* dB = noise.data() + (j * K + k) * m;
                    for (std::size_t a = 0; a < d; ++a)
                        for (std::size_t l = 0; l < m; ++l) delta[a] += sig[a * m + l] * dB[l];
                }
                if (rough) {
                    const auto dW = rp.increment(k, k + 1);
                    const auto WW = rp.cell_area(k);
                    c.f(s, y, dummy, f);
                    c.dx_f(s, y, dummy, dxf);
                    c.f_prime(s, y, dummy, fpr);
                    // measure-free: Phi^a_{pq} = d_{x^r} f^a_q f^r_p + (f'_{qp})^a
                    for (std::size_t a = 0; a < d; ++a)
                        for (std::size_t pp = 0; pp < n; ++pp)
                            for (std::size_t q = 0; q < n; ++q) {
                                double acc = fpr[(a * n + q) * n + pp];
                                for (std::size_t r = 0; r < d; ++r) acc += dxf[(a * d + r) * n + q] * f[r * n + pp];
                                Phi[(a * n + pp) * n + q] = acc;
                            }
                    for (std::size_t a = 0; a < d; ++a) {
                        for (std::size_t q = 0; q < n; ++q) delta[a] += f[a * n + q] * dW[q];
                        for (std::size_t q = 0; q < n * n; ++q) delta[a] += Phi[a * n * n + q] * WW[q];
                    }
                }
                for (std::size_t a = 0; a < d; ++a) y[a] += delta[a];
            }
            vals[j] = g(y);
        }
        const bool constant = std::all_of(vals.begin(), vals.end(), [&](double v) { return v == vals[0]; });
        std::vector<double> tmp(vals);
        const double mean = constant ? vals[0] : order_invariant_mean(tmp);
        double se = 0.0;
        if (!constant) {
            for (std::size_t j = 0; j < M; ++j) tmp[j] = (vals[j] - mean) * (vals[j] - mean);
            se = std::sqrt(order_invariant_sum(tmp) / static_cast<double>(M - 1) / static_cast<double>(M));
        }
        sol.u[ti * P + p] = mean;
        sol.stderr_[ti * P + p] = se;
    });
    for (double v : sol.u)
        if (!std::isfinite(v)) throw std::runtime_error("solve_backward_fk: non-finite value");
    return sol;
}

/// Lattice spanning the 1e-4 quantile envelope of every snapshot, padded by 4 standard deviations.
inline SpatialLattice lattice_for_flow(const MeasureFlow& flow, std::size_t points_per_axis) {
    const std::size_t d = flow.dim();
    if (d < 1 || d > 2) throw std::invalid_argument("lattice_for_flow: d must be 1 or 2");
    std::vector<double> lo(d, std::numeric_limits<double>::infinity()), hi(d, -lo[0]);
    for (const auto& mu : flow.snapshots) {
        const std::size_t N = mu.size();
        for (std::size_t a = 0; a < d; ++a) {
            std::vector<double> col(N);
            for (std::size_t i = 0; i < N; ++i) col[i] = mu.particle(i)[a];
            std::sort(col.begin(), col.end());
            const auto q = static_cast<std::size_t>(std::floor(1e-4 * static_cast<double>(N - 1)));
            double mean = 0.0, var = 0.0;
            for (double v : col) mean += v / static_cast<double>(N);
            for (double v : col) var += (v - mean) * (v - mean) / static_cast<double>(N);
            const double pad = 4.0 * std::sqrt(var);
            lo[a] = std::min(lo[a], col[q] - pad);
            hi[a] = std::max(hi[a], col[N - 1 - q] + pad);
        }
    }
    for (std::size_t a = 0; a < d; ++a)
        if (!(hi[a] > lo[a])) {
            lo[a] -= 1.0;
            hi[a] += 1.0;
        }
    return SpatialLattice(lo, hi, std::vector<std::size_t>(d, points_per_axis));
}

namespace detail {
/// Cubic Lagrange weights on the 4-node stencil starting at `first`, nodes x0 + h i.
inline std::size_t cubic_stencil(double x, double x0, double h, std::size_t count, std::array<double, 4>& w) {
    const double s = (x - x0) / h;
    long first = static_cast<long>(std::floor(s)) - 1;
    first = std::clamp(first, 0L, static_cast<long>(count) - 4);
    const double r = s - static_cast<double>(first);  // position relative to node `first`
    for (int a = 0; a < 4; ++a) {
        double v = 1.0;
        for (int b = 0; b < 4; ++b)
            if (b != a) v *= (r - b) / static_cast<double>(a - b);
        w[a] = v;
    }
    return static_cast<std::size_t>(first);
}
}  // namespace detail

/// Cubic Lagrange interpolation of u_{times[ti]} at x (tensor product in 2-D).
inline double interpolate(const BackwardSolution& u, std::size_t ti, std::span<const double> x) {
    const auto& L = u.lattice;
    std::array<double, 4> w0{}, w1{};
    const std::size_t i0 = detail::cubic_stencil(x[0], L.node(0, 0), L.spacing(0), L.axis_points(0), w0);
    if (L.dim() == 1) {
        double s = 0.0;
        for (int a = 0; a < 4; ++a) s += w0[a] * u.value(ti, i0 + a);
        return s;
    }
    const std::size_t i1 = detail::cubic_stencil(x[1], L.node(1, 0), L.spacing(1), L.axis_points(1), w1);
    double s = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) s += w0[a] * w1[b] * u.value(ti, L.index(i0 + a, i1 + b));
    return s;
}

/// max over times and axes of |fourth differences| of u on the lattice; times 1/24 it bounds the
/// cubic interpolation error for h^4 |u''''| ~ |Delta^4 u|.
inline double interpolation_error_bound(const BackwardSolution& u) {
    const auto& L = u.lattice;
    double worst = 0.0;
    auto d4 = [](double a, double b, double c, double d, double e) { return std::abs(a - 4 * b + 6 * c - 4 * d + e); };
    for (std::size_t ti = 0; ti < u.times.size(); ++ti) {
        if (L.dim() == 1) {
            for (std::size_t i = 0; i + 4 < L.axis_points(0); ++i)
                worst = std::max(worst, d4(u.value(ti, i), u.value(ti, i + 1), u.value(ti, i + 2), u.value(ti, i + 3),
                                           u.value(ti, i + 4)));
            continue;
        }
        for (std::size_t j = 0; j < L.axis_points(1); ++j)
            for (std::size_t i = 0; i + 4 < L.axis_points(0); ++i)
                worst = std::max(worst, d4(u.value(ti, L.index(i, j)), u.value(ti, L.index(i + 1, j)),
                                           u.value(ti, L.index(i + 2, j)), u.value(ti, L.index(i + 3, j)),
                                           u.value(ti, L.index(i + 4, j))));
        for (std::size_t i = 0; i < L.axis_points(0); ++i)
            for (std::size_t j = 0; j + 4 < L.axis_points(1); ++j)
                worst = std::max(worst, d4(u.value(ti, L.index(i, j)), u.value(ti, L.index(i, j + 1)),
                                           u.value(ti, L.index(i, j + 2)), u.value(ti, L.index(i, j + 3)),
                                           u.value(ti, L.index(i, j + 4))));
    }
    return worst / 24.0 * static_cast<double>(L.dim());
}

struct DualityReport {
    double drift = 0.0;                  // max_t |<mu_t, u_t> - <mu_0, u_0>|
    std::vector<double> pairings;        // <mu_t, u_t> per backward time
    double forward_stderr = 0.0;         // max_t sd_i(u_t(X_t^i) - u_0(X_0^i)) / sqrt(N)
    double backward_stderr = 0.0;        // max_t (max_x se_t + max_x se_0)
    double interpolation_bound = 0.0;
    double budget = 0.0;                 // 3 (se_fwd + se_bwd) + 2 interp + 1e-12
    bool within_budget = false;
};

/// Pairs the forward flow with the interpolated backward solution at each backward time.
/// Both must carry the checksum of the same rough path.
inline DualityReport duality_drift(const MeasureFlow& flow, const BackwardSolution& u) {
    if (flow.rough_path_checksum != u.rough_path_checksum)
        throw std::invalid_argument("duality_drift: flow and backward solution use different rough paths");
    if (flow.dim() != u.lattice.dim()) throw std::invalid_argument("duality_drift: dimension mismatch");
    std::vector<std::size_t> fidx;
    for (double t : u.times) {
        const auto k = flow.grid.find(t);
        if (!k) throw std::invalid_argument("duality_drift: backward time is not on the flow grid");
        fidx.push_back(*k);
    }
    const std::size_t N = flow.particles(), T = u.times.size(), P = u.lattice.size();
    DualityReport rep;
    std::vector<std::vector<double>> vals(T, std::vector<double>(N));
    for (std::size_t ti = 0; ti < T; ++ti) {
        for (std::size_t i = 0; i < N; ++i) vals[ti][i] = interpolate(u, ti, flow.at(fidx[ti]).particle(i));
        std::vector<double> tmp(vals[ti]);
        rep.pairings.push_back(order_invariant_mean(tmp));
    }
    auto max_se = [&](std::size_t ti) {
        double m = 0.0;
        for (std::size_t p = 0; p < P; ++p) m = std::max(m, u.standard_error(ti, p));
        return m;
    };
    for (std::size_t ti = 1; ti < T; ++ti) {
        rep.drift = std::max(rep.drift, std::abs(rep.pairings[ti] - rep.pairings[0]));
        if (N > 1) {
            std::vector<double> diff(N);
            for (std::size_t i = 0; i < N; ++i) diff[i] = vals[ti][i] - vals[0][i];
            std::vector<double> tmp(diff);
            const double mean = order_invariant_mean(tmp);
            for (auto& v : diff) v = (v - mean) * (v - mean);
            const double se = std::sqrt(order_invariant_sum(diff) / static_cast<double>(N - 1) / static_cast<double>(N));
            rep.forward_stderr = std::max(rep.forward_stderr, se);
        }
        rep.backward_stderr = std::max(rep.backward_stderr, max_se(ti) + max_se(0));
    }
    rep.interpolation_bound = interpolation_error_bound(u);
    rep.budget = 3.0 * (rep.forward_stderr + rep.backward_stderr) + 2.0 * rep.interpolation_bound + 1e-12;
    rep.within_budget = rep.drift <= rep.budget;
    return rep;
}

/// CSV dump: t,x1..xd,u,stderr.
inline void write_backward_csv(std::ostream& os, const BackwardSolution& u) {
    os << "t";
    for (std::size_t a = 0; a < u.lattice.dim(); ++a) os << ",x" << a + 1;
    os << ",u,stderr\n";
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (std::size_t ti = 0; ti < u.times.size(); ++ti)
        for (std::size_t p = 0; p < u.lattice.size(); ++p) {
            put(u.times[ti]);
            for (double v : u.lattice.point(p)) {
                os << ',';
                put(v);
            }
            os << ',';
            put(u.value(ti, p));
            os << ',';
            put(u.standard_error(ti, p));
            os << '\n';
        }
}

}  // namespace roughmkv
