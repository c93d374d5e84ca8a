#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "assignment.hpp"
#include "empirical_measure.hpp"
#include "summation.hpp"
#include "test_functions.hpp"
#include "time_grid.hpp"

namespace roughmkv {

/// Curve t -> mu_t of empirical measures, one snapshot per grid point, fixed N.
/// Particle i of every snapshot is the same particle, so the flow doubles as the
/// trajectory record.
struct MeasureFlow {
    TimeGrid grid;
    std::vector<EmpiricalMeasure> snapshots;
    std::uint64_t rough_path_checksum = 0;

    MeasureFlow(TimeGrid g, std::vector<EmpiricalMeasure> s, std::uint64_t checksum = 0)
        : grid(std::move(g)), snapshots(std::move(s)), rough_path_checksum(checksum) {
        if (snapshots.size() != grid.size()) throw std::invalid_argument("MeasureFlow: one snapshot per grid point");
        for (const auto& m : snapshots)
            if (m.size() != snapshots.front().size() || m.dim() != snapshots.front().dim())
                throw std::invalid_argument("MeasureFlow: particle count and dimension must be constant");
    }

    std::size_t particles() const { return snapshots.front().size(); }
    std::size_t dim() const { return snapshots.front().dim(); }
    const EmpiricalMeasure& at(std::size_t k) const { return snapshots[k]; }
    const EmpiricalMeasure& terminal() const { return snapshots.back(); }
};

/// <mu, phi> = (1/N) sum_i phi(X_i).
template <class Phi>
double pairing(const EmpiricalMeasure& mu, const Phi& phi) {
    std::vector<double> v(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) v[i] = phi(mu.particle(i));
    return order_invariant_mean(v);
}

/// W2 for d = 1 via the quantile coupling of the sorted samples.
inline double wasserstein2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != 1 || nu.dim() != 1)
        throw std::invalid_argument("wasserstein2_1d: d != 1, use wasserstein2_exact_small");
    if (mu.size() != nu.size()) throw std::invalid_argument("wasserstein2_1d: unequal particle counts");
    std::vector<double> a(mu.points().begin(), mu.points().end()), b(nu.points().begin(), nu.points().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<double> sq(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) sq[i] = (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(order_invariant_mean(sq));
}

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s;
}

/// W2 between equal-size empirical measures in any dimension, by optimal assignment.
/// For equal weights and equal N an optimal coupling can be taken to be a permutation.
inline double wasserstein2_exact_small(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.size() != nu.size()) throw std::invalid_argument("wasserstein2_exact_small: unequal particle counts");
    if (mu.dim() != nu.dim()) throw std::invalid_argument("wasserstein2_exact_small: dimension mismatch");
    const std::size_t n = mu.size();
    if (n > 512) throw std::invalid_argument("wasserstein2_exact_small: N must be <= 512");
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = squared_distance(mu.particle(i), nu.particle(j));
    const auto perm = solve_assignment(cost, n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = cost[i * n + perm[i]];
    return std::sqrt(order_invariant_mean(sq));
}

/// Quantile route in 1-D, assignment otherwise.
inline double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    return mu.dim() == 1 ? wasserstein2_1d(mu, nu) : wasserstein2_exact_small(mu, nu);
}

// ---------------------------------------------------------------------------
// Hoelder diagnostics of the flow

struct FlowHolderReport {
    double sup = 0.0;  // lower bound for the sup over all Lipschitz-R test functions
    std::string worst_phi;
    double worst_s = 0.0, worst_t = 0.0;
    std::size_t bank_size = 0;
};

/// Lipschitz-R bank: R sin(<k,x> + theta)/|k| over a small frequency lattice, and
/// smoothly clipped coordinate projections R c tanh(x_i / c).
inline std::vector<TestFunction> lipschitz_bank(std::size_t d, double R) {
    std::vector<TestFunction> bank;
    std::vector<std::vector<double>> freqs;
    for (std::size_t i = 0; i < d; ++i)
        for (double scale : {0.5, 1.0, 2.0}) {
            std::vector<double> k(d, 0.0);
            k[i] = scale;
            freqs.push_back(k);
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            for (double sgn : {1.0, -1.0}) {
                std::vector<double> k(d, 0.0);
                k[i] = 1.0;
                k[j] = sgn;
                freqs.push_back(k);
            }
    for (const auto& k : freqs) {
        double norm = 0.0;
        for (double v : k) norm += v * v;
        norm = std::sqrt(norm);
        for (double theta : {0.0, std::numbers::pi / 2}) {
            auto f = test_functions::sine_wave(k, theta, R / norm);
            char buf[64];
            std::snprintf(buf, sizeof buf, "_k%.3g", norm);
            f.id += buf;
            bank.push_back(std::move(f));
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (double c : {1.0, 4.0}) {
            TestFunction f;
            f.dim = d;
            f.id = "tanh_x" + std::to_string(i + 1) + "_c" + std::to_string(static_cast<int>(c));
            f.value = [=](std::span<const double> x) { return R * c * std::tanh(x[i] / c); };
            bank.push_back(std::move(f));
        }
    return bank;
}

/// Estimates sup_{s<t} sup_phi |<mu_t - mu_s, phi>| / |t-s|^alpha over grid pairs and the
/// Lipschitz-R bank. A finite bank only gives a lower bound for the sup over all phi.
inline FlowHolderReport flow_holder_diagnostic(const MeasureFlow& flow, double R, double alpha) {
    if (!(R > 0.0)) throw std::invalid_argument("flow_holder_diagnostic: R must be positive");
    const auto bank = lipschitz_bank(flow.dim(), R);
    const std::size_t K = flow.grid.size();
    FlowHolderReport rep;
    rep.bank_size = bank.size();
    for (const auto& phi : bank) {
        std::vector<double> p(K);
        for (std::size_t k = 0; k < K; ++k) p[k] = pairing(flow.at(k), phi);
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = i + 1; j < K; ++j) {
                const double q = std::abs(p[j] - p[i]) / std::pow(flow.grid[j] - flow.grid[i], alpha);
                if (q > rep.sup) {
                    rep.sup = q;
                    rep.worst_phi = phi.id;
                    rep.worst_s = flow.grid[i];
                    rep.worst_t = flow.grid[j];
                }
            }
    }
    return rep;
}

/// sup_{s<t} W2(mu_s, mu_t) / |t-s|^alpha over grid pairs.
inline double wasserstein_holder_quotient(const MeasureFlow& flow, double alpha) {
    const std::size_t K = flow.grid.size();
    double sup = 0.0;
    if (flow.dim() == 1) {
        std::vector<std::vector<double>> sorted(K);
        for (std::size_t k = 0; k < K; ++k) {
            sorted[k].assign(flow.at(k).points().begin(), flow.at(k).points().end());
            std::sort(sorted[k].begin(), sorted[k].end());
        }
        std::vector<double> sq(flow.particles());
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = i + 1; j < K; ++j) {
                for (std::size_t z = 0; z < sq.size(); ++z)
                    sq[z] = (sorted[i][z] - sorted[j][z]) * (sorted[i][z] - sorted[j][z]);
                const double w = std::sqrt(order_invariant_mean(sq));
                sup = std::max(sup, w / std::pow(flow.grid[j] - flow.grid[i], alpha));
            }
        return sup;
    }
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = i + 1; j < K; ++j)
            sup = std::max(sup, wasserstein2_exact_small(flow.at(i), flow.at(j)) /
                                    std::pow(flow.grid[j] - flow.grid[i], alpha));
    return sup;
}

/// CSV dump: t,particle,x1..xd with %.17g numbers.
inline void write_flow_csv(std::ostream& os, const MeasureFlow& flow) {
    os << "t,particle";
    for (std::size_t i = 0; i < flow.dim(); ++i) os << ",x" << i + 1;
    os << '\n';
    char buf[40];
    for (std::size_t k = 0; k < flow.grid.size(); ++k)
        for (std::size_t p = 0; p < flow.particles(); ++p) {
            std::snprintf(buf, sizeof buf, "%.17g", flow.grid[k]);
            os << buf << ',' << p;
            for (double v : flow.at(k).particle(p)) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                os << ',' << buf;
            }
            os << '\n';
        }
}

}  // namespace roughmkv
