#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "measure_flow.hpp"
#include "rough_path.hpp"
#include "summation.hpp"
#include "test_functions.hpp"

namespace roughmkv {

/// Per-particle integrands of the Fokker-Planck operators at one snapshot:
///   phi      phi(X_i)
///   L        1/2 a^{ij} d_ij phi + b^i d_i phi
///   gamma    d_i phi f^i_k                                  (N x n)
///   second   d_i phi Phi^i_{kl} + f_k^T Hess(phi) f_l        (N x n x n)
/// where Phi_{kl} is the Davie second-level integrand, so second(k, l) integrates to
/// (Gamma_k Gamma_l + Gamma'_{lk}) phi.
struct SnapshotIntegrands {
    std::size_t N = 0, n = 0;
    std::vector<double> phi, L, gamma, second;
};

inline SnapshotIntegrands snapshot_integrands(const EmpiricalMeasure& mu, double t, const TestFunction& phi,
                                              const CoefficientSet& c, bool with_rough = true) {
    const auto& dm = c.dims();
    const std::size_t N = mu.size(), d = dm.d, m = dm.m, n = dm.n;
    if (mu.dim() != d || phi.dim != d) throw std::invalid_argument("snapshot_integrands: dimension mismatch");
    SnapshotIntegrands out;
    out.N = N;
    out.n = n;
    out.phi.resize(N);
    out.L.assign(N, 0.0);
    out.gamma.assign(N * n, 0.0);
    out.second.assign(N * n * n, 0.0);
    const bool rough = with_rough && !c.rough_is_zero();
    if (rough && (!phi.grad || !phi.hess)) throw std::invalid_argument("test function lacks derivatives");
    std::optional<GammaPrimeEvaluator> ev;
    if (rough) ev.emplace(c, t, mu);
    std::vector<double> g(d), H(d * d), b(d), sig(d * m), a(d * d), Phi(d * n * n);
    for (std::size_t i = 0; i < N; ++i) {
        const auto x = mu.particle(i);
        out.phi[i] = phi(x);
        const bool need_grad = rough || !c.drift_is_zero();
        const bool need_hess = rough || !c.diffusion_is_zero();
        if (!need_grad && !need_hess) continue;
        if (!phi.grad || !phi.hess) throw std::invalid_argument("test function lacks derivatives");
        phi.grad(x, g);
        phi.hess(x, H);
        double l = 0.0;
        if (!c.diffusion_is_zero()) {
            c.a(t, x, mu, a);
            for (std::size_t p = 0; p < d * d; ++p) l += 0.5 * a[p] * H[p];
        }
        if (!c.drift_is_zero()) {
            c.b(t, x, mu, b);
            for (std::size_t p = 0; p < d; ++p) l += b[p] * g[p];
        }
        out.L[i] = l;
        if (!rough) continue;
        const auto fx = ev->f_at(i);
        (*ev)(x, fx, Phi);
        for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (std::size_t p = 0; p < d; ++p) s += g[p] * fx[p * n + k];
            out.gamma[i * n + k] = s;
        }
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t q = 0; q < n; ++q) {
                double s = 0.0;
                for (std::size_t p = 0; p < d; ++p) s += g[p] * Phi[(p * n + k) * n + q];
                for (std::size_t p = 0; p < d; ++p)
                    for (std::size_t r = 0; r < d; ++r) s += fx[p * n + k] * H[p * d + r] * fx[r * n + q];
                out.second[(i * n + k) * n + q] = s;
            }
    }
    return out;
}

/// Particle averages of the integrands.
struct OperatorValues {
    double phi = 0.0, L = 0.0;
    std::vector<double> gamma;   // n
    std::vector<double> second;  // n x n
};

inline OperatorValues operator_values(const SnapshotIntegrands& s) {
    OperatorValues o;
    std::vector<double> tmp(s.phi);
    o.phi = order_invariant_mean(tmp);
    tmp = s.L;
    o.L = order_invariant_mean(tmp);
    o.gamma = order_invariant_column_means(s.gamma, s.N, s.n);
    o.second = order_invariant_column_means(s.second, s.N, s.n * s.n);
    return o;
}

/// <mu, 1/2 a^{ij} d_ij phi + b^i d_i phi>.
inline double op_L(const EmpiricalMeasure& mu, double t, const TestFunction& phi, const CoefficientSet& c) {
    return operator_values(snapshot_integrands(mu, t, phi, c, false)).L;
}

/// <mu, d_i phi f^i_k>.
inline double op_Gamma(const EmpiricalMeasure& mu, double t, const TestFunction& phi, std::size_t kappa,
                       const CoefficientSet& c) {
    if (kappa >= c.dims().n) throw std::out_of_range("op_Gamma: kappa out of range");
    if (c.rough_is_zero()) return 0.0;
    return operator_values(snapshot_integrands(mu, t, phi, c)).gamma[kappa];
}

/// <mu, (Gamma_k Gamma_l + Gamma'_{lk}) phi>.
inline double op_second(const EmpiricalMeasure& mu, double t, const TestFunction& phi, std::size_t kappa,
                        std::size_t lambda, const CoefficientSet& c) {
    const std::size_t n = c.dims().n;
    if (kappa >= n || lambda >= n) throw std::out_of_range("op_second: index out of range");
    if (c.rough_is_zero()) return 0.0;
    return operator_values(snapshot_integrands(mu, t, phi, c)).second[kappa * n + lambda];
}

// ---------------------------------------------------------------------------
// Weak-form residual

struct WeakResidual {
    double value = 0.0;
    double noise_floor = 0.0;  // sd of the per-particle residuals / sqrt(N)
};

namespace detail {

inline void require_same_grid(const MeasureFlow& flow, const GridRoughPath& rp) {
    if (!(flow.grid == rp.grid())) throw std::invalid_argument("weak residual: flow and rough path grids differ");
}

/// Residual over grid indices [i, j] from precomputed integrands at every snapshot.
inline WeakResidual residual_from_table(const MeasureFlow& flow, const GridRoughPath& rp,
                                        const std::vector<SnapshotIntegrands>& tab,
                                        const std::vector<OperatorValues>& ops, std::size_t i, std::size_t j) {
    if (i == j) return {};
    const std::size_t N = flow.particles(), n = rp.dim();
    const auto dW = rp.increment(i, j);
    const auto WW = chen_extend_indices(rp, i, j);
    // mean-level residual
    double r = ops[j].phi - ops[i].phi;
    for (std::size_t k = i; k < j; ++k) r -= 0.5 * flow.grid.step(k) * (ops[k].L + ops[k + 1].L);
    for (std::size_t p = 0; p < n; ++p) r -= ops[i].gamma[p] * dW[p];
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < n; ++q) r -= ops[i].second[p * n + q] * WW(p, q);
    // per-particle residuals for the noise floor
    std::vector<double> rho(N);
    for (std::size_t z = 0; z < N; ++z) {
        double v = tab[j].phi[z] - tab[i].phi[z];
        for (std::size_t k = i; k < j; ++k) v -= 0.5 * flow.grid.step(k) * (tab[k].L[z] + tab[k + 1].L[z]);
        for (std::size_t p = 0; p < n; ++p) v -= tab[i].gamma[z * n + p] * dW[p];
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q) v -= tab[i].second[(z * n + p) * n + q] * WW(p, q);
        rho[z] = v;
    }
    double floor = 0.0;
    if (N > 1) {
        std::vector<double> tmp(rho);
        const double mean = order_invariant_mean(tmp);
        for (auto& v : rho) v = (v - mean) * (v - mean);
        floor = std::sqrt(order_invariant_sum(rho) / static_cast<double>(N - 1) / static_cast<double>(N));
    }
    return {r, floor};
}

}  // namespace detail

/// Integrands and operator values at every snapshot of the flow.
struct FlowOperatorTable {
    std::vector<SnapshotIntegrands> integrands;
    std::vector<OperatorValues> values;
};

inline FlowOperatorTable flow_operator_table(const MeasureFlow& flow, const TestFunction& phi,
                                             const CoefficientSet& c, std::size_t first = 0,
                                             std::size_t last = std::numeric_limits<std::size_t>::max()) {
    FlowOperatorTable t;
    const std::size_t K = flow.grid.size();
    last = std::min(last, K - 1);
    t.integrands.resize(K);
    t.values.resize(K);
    for (std::size_t k = first; k <= last; ++k) {
        t.integrands[k] = snapshot_integrands(flow.at(k), flow.grid[k], phi, c);
        t.values[k] = operator_values(t.integrands[k]);
    }
    return t;
}

/// mu^{natural, phi}_{s,t} = <mu_t - mu_s, phi> - int_s^t <mu_r, L phi> dr
///                          - <mu_s, Gamma_k phi> dW^k_{s,t} - <mu_s, (Gamma_k Gamma_l + Gamma'_{lk}) phi> WW^{kl}_{s,t},
/// with the time integral by the composite trapezoid rule on the grid.
inline WeakResidual weak_residual(const MeasureFlow& flow, const GridRoughPath& rp, const TestFunction& phi,
                                  const CoefficientSet& c, double s, double t) {
    detail::require_same_grid(flow, rp);
    if (t < s) throw std::invalid_argument("weak_residual: need s <= t");
    const auto i = flow.grid.find(s), j = flow.grid.find(t);
    if (!i || !j) throw std::invalid_argument("weak_residual: s and t must be grid points");
    if (*i == *j) return {};
    const auto tab = flow_operator_table(flow, phi, c, *i, *j);
    return detail::residual_from_table(flow, rp, tab.integrands, tab.values, *i, *j);
}

// ---------------------------------------------------------------------------

struct ScanLevel {
    const MeasureFlow* flow;
    const GridRoughPath* rp;
};

struct ResidualRow {
    std::string phi_id;
    double s = 0.0, t = 0.0, residual = 0.0, noise_floor = 0.0;
};

struct PhiScan {
    std::string phi_id;
    std::vector<double> deltas, max_residuals, noise_floors;
    double slope = std::numeric_limits<double>::quiet_NaN();
    bool exact = false;  // every residual at machine zero
};

struct ResidualScan {
    std::vector<PhiScan> per_phi;
    std::vector<ResidualRow> rows;
    double min_slope = std::numeric_limits<double>::infinity();
    bool all_exact = true;
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

inline constexpr double kMachineZeroResidual = 1e-13;

/// For each phi and level, max over grid cells [s, s + Delta] of |weak_residual|; then a
/// log-log fit of that max against the cell width Delta. Residuals at machine zero on every
/// level are reported as exact.
inline ResidualScan residual_order_scan(const std::vector<ScanLevel>& levels, const std::vector<TestFunction>& bank,
                                        const CoefficientSet& c) {
    if (levels.size() < 3) throw std::invalid_argument("residual_order_scan: need at least 3 resolutions");
    ResidualScan scan;
    for (const auto& phi : bank) {
        PhiScan ps;
        ps.phi_id = phi.id;
        bool exact = true;
        for (const auto& lv : levels) {
            detail::require_same_grid(*lv.flow, *lv.rp);
            const auto tab = flow_operator_table(*lv.flow, phi, c);
            double worst = 0.0, floor = 0.0;
            for (std::size_t k = 0; k + 1 < lv.flow->grid.size(); ++k) {
                const auto r = detail::residual_from_table(*lv.flow, *lv.rp, tab.integrands, tab.values, k, k + 1);
                scan.rows.push_back({phi.id, lv.flow->grid[k], lv.flow->grid[k + 1], r.value, r.noise_floor});
                if (std::abs(r.value) >= worst) {
                    worst = std::abs(r.value);
                    floor = r.noise_floor;
                }
            }
            if (worst > kMachineZeroResidual) exact = false;
            ps.deltas.push_back(lv.flow->grid.max_step());
            ps.max_residuals.push_back(worst);
            ps.noise_floors.push_back(floor);
        }
        ps.exact = exact;
        if (!exact) {
            std::vector<double> y(ps.max_residuals);
            for (auto& v : y) v = std::max(v, std::numeric_limits<double>::min());
            ps.slope = loglog_slope(ps.deltas, y);
            scan.min_slope = std::min(scan.min_slope, ps.slope);
            scan.all_exact = false;
        }
        scan.per_phi.push_back(std::move(ps));
    }
    return scan;
}

inline void write_residual_csv(std::ostream& os, const std::vector<ResidualRow>& rows) {
    os << "phi_id,s,t,residual,noise_floor\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", r.s, r.t, r.residual, r.noise_floor);
        os << r.phi_id << ',' << buf << '\n';
    }
}

// ---------------------------------------------------------------------------

struct ControlledPairing {
    double alpha_quotient = 0.0;      // sup |S_{kl}(t) - S_{kl}(s)| / |t-s|^alpha
    double two_alpha_quotient = 0.0;  // sup |G_k(t) - G_k(s) - S_{hk}(s) dW^h_{s,t}| / |t-s|^{2 alpha}
};

/// Hoelder quotients of the controlledness of the pairings over grid pairs, with
/// G_k(t) = <mu_t, Gamma_k phi> and S_{kl}(t) = <mu_t, (Gamma_k Gamma_l + Gamma'_{lk}) phi>.
inline ControlledPairing controlled_pairing_check(const MeasureFlow& flow, const GridRoughPath& rp,
                                                  const TestFunction& phi, const CoefficientSet& c) {
    detail::require_same_grid(flow, rp);
    const std::size_t K = flow.grid.size(), n = rp.dim();
    const double alpha = rp.alpha();
    std::vector<OperatorValues> ops(K);
    for (std::size_t k = 0; k < K; ++k) ops[k] = operator_values(snapshot_integrands(flow.at(k), flow.grid[k], phi, c));
    ControlledPairing out;
    for (std::size_t s = 0; s < K; ++s)
        for (std::size_t t = s + 1; t < K; ++t) {
            const double dt = flow.grid[t] - flow.grid[s];
            const auto dW = rp.increment(s, t);
            for (std::size_t e = 0; e < n * n; ++e)
                out.alpha_quotient =
                    std::max(out.alpha_quotient, std::abs(ops[t].second[e] - ops[s].second[e]) / std::pow(dt, alpha));
            for (std::size_t k = 0; k < n; ++k) {
                double r = ops[t].gamma[k] - ops[s].gamma[k];
                for (std::size_t h = 0; h < n; ++h) r -= ops[s].second[h * n + k] * dW[h];
                out.two_alpha_quotient = std::max(out.two_alpha_quotient, std::abs(r) / std::pow(dt, 2.0 * alpha));
            }
        }
    return out;
}

}  // namespace roughmkv
