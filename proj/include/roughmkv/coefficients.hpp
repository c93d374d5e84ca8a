#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "empirical_measure.hpp"
#include "summation.hpp"

namespace roughmkv {

// Tensor layouts used throughout (all row-major):
//   b        d            b^i
//   sigma    d x m        sigma^i_l
//   f        d x n        f^i_kappa
//   f'       d x n x n    (f'_{kappa lambda})^i
//   dx_f     d x d x n    d_{x^j} f^i_kappa          index (i, j, kappa)
//   lions_f  d x d x n    (d_mu f^i_kappa(v))_j      index (i, j, kappa)
//   Phi      d x n x n    Phi^i_{kappa lambda}

struct Dimensions {
    std::size_t d = 1;  // state
    std::size_t m = 1;  // idiosyncratic Brownian motion
    std::size_t n = 1;  // rough driver
    friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t total = 1;
        for (auto e : shape) total *= e;
        data.assign(total, 0.0);
    }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::abs(v));
        return m;
    }
};

using PointFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using PairFn =
    std::function<void(double t, std::span<const double> x, std::span<const double> y, std::span<double> out)>;
using MeasureFn =
    std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out)>;
using LionsFn = std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                                   std::span<const double> v, std::span<double> out)>;

constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// f(t, x, mu) = int g_t(x, y) mu(dy);  d_mu f(t, x, mu)(v) = D_y g_t(x, v).
struct ConvolutionFamily {
    PairFn g, dx_g, dy_g;
    PairFn g_prime;  // empty: zero
    double bound = kUnbounded;
};

/// f(t, x, mu) = phi_t(x, m(mu)) with m(mu) the mean; d_mu f(v) = D_m phi_t(x, m), constant in v.
struct MomentFamily {
    PairFn phi, dx_phi, dm_phi;
    PairFn phi_prime;  // empty: zero
    double bound = kUnbounded;
};

struct ConstantFamily {
    std::vector<double> value;  // d x n
};

struct MeasureFreeFamily {
    PointFn h, dx_h;
    PointFn h_prime;  // empty: zero
    double bound = kUnbounded;
};

/// Arbitrary closures. Accepted, but regularity is not certified.
struct CustomFamily {
    MeasureFn f, dx_f, f_prime;
    LionsFn lions_f;
    bool measure_dependent = true;
    double bound = kUnbounded;
};

using RoughFamily = std::variant<ConvolutionFamily, MomentFamily, ConstantFamily, MeasureFreeFamily, CustomFamily>;

struct DriftField {
    MeasureFn fn;  // empty: zero
    bool measure_dependent = false;
};

struct DiffusionField {
    MeasureFn fn;  // empty: zero
    bool measure_dependent = false;
};

/// The coefficient tuple (b, sigma, f, f') with spatial and Lions derivatives of f.
class CoefficientSet {
public:
    CoefficientSet(Dimensions dims, DriftField drift, DiffusionField diffusion, RoughFamily rough)
        : dims_(dims), drift_(std::move(drift)), diffusion_(std::move(diffusion)), rough_(std::move(rough)) {
        if (dims_.d < 1 || dims_.m < 1 || dims_.n < 1)
            throw std::invalid_argument("CoefficientSet: dimensions must be >= 1");
        if (auto* c = std::get_if<ConstantFamily>(&rough_); c && c->value.size() != dims_.d * dims_.n)
            throw std::invalid_argument("CoefficientSet: constant family must have d*n entries");
    }

    const Dimensions& dims() const { return dims_; }
    const RoughFamily& rough() const { return rough_; }

    bool drift_is_zero() const { return !drift_.fn; }
    bool diffusion_is_zero() const { return !diffusion_.fn; }
    bool rough_is_zero() const {
        if (auto* c = std::get_if<ConstantFamily>(&rough_))
            return std::all_of(c->value.begin(), c->value.end(), [](double v) { return v == 0.0; });
        return false;
    }

    bool rough_measure_dependent() const {
        return std::visit(
            [](const auto& fam) {
                using T = std::decay_t<decltype(fam)>;
                if constexpr (std::is_same_v<T, ConvolutionFamily> || std::is_same_v<T, MomentFamily>) return true;
                else if constexpr (std::is_same_v<T, CustomFamily>) return fam.measure_dependent;
                else return false;
            },
            rough_);
    }
    bool measure_free() const {
        return !drift_.measure_dependent && !diffusion_.measure_dependent && !rough_measure_dependent();
    }
    /// Only the built-in families carry analytically certified derivatives.
    bool certified() const { return !std::holds_alternative<CustomFamily>(rough_); }
    bool lions_constant_in_v() const { return !std::holds_alternative<ConvolutionFamily>(rough_) &&
                                              !std::holds_alternative<CustomFamily>(rough_); }

    double declared_bound() const {
        return std::visit(
            [](const auto& fam) {
                using T = std::decay_t<decltype(fam)>;
                if constexpr (std::is_same_v<T, ConstantFamily>) {
                    double m = 0.0;
                    for (double v : fam.value) m = std::max(m, std::abs(v));
                    return m;
                } else {
                    return fam.bound;
                }
            },
            rough_);
    }

    void b(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) const {
        if (drift_.fn) drift_.fn(t, x, mu, out);
        else std::fill(out.begin(), out.end(), 0.0);
    }

    void sigma(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) const {
        if (diffusion_.fn) diffusion_.fn(t, x, mu, out);
        else std::fill(out.begin(), out.end(), 0.0);
    }

    /// a = sigma sigma^T (d x d).
    void a(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) const {
        const std::size_t d = dims_.d, m = dims_.m;
        std::vector<double> s(d * m);
        sigma(t, x, mu, s);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < m; ++l) acc += s[i * m + l] * s[j * m + l];
                out[i * d + j] = acc;
                out[j * d + i] = acc;
            }
    }

    void f(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) const {
        const std::size_t dn = dims_.d * dims_.n;
        std::visit(
            [&](const auto& fam) {
                using T = std::decay_t<decltype(fam)>;
                if constexpr (std::is_same_v<T, ConvolutionFamily>) {
                    average_over_measure(fam.g, t, x, mu, out, dn);
                } else if constexpr (std::is_same_v<T, MomentFamily>) {
                    fam.phi(t, x, mu.mean(), out);
                } else if constexpr (std::is_same_v<T, ConstantFamily>) {
                    std::copy(fam.value.begin(), fam.value.end(), out.begin());
                } else if constexpr (std::is_same_v<T, MeasureFreeFamily>) {
                    fam.h(t, x, out);
                } else {
                    fam.f(t, x, mu, out);
                }
            },
            rough_);
    }

    void f_prime(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) const {
        const std::size_t dnn = dims_.d * dims_.n * dims_.n;
        std::fill(out.begin(), out.end(), 0.0);
        std::visit(
            [&](const auto& fam) {
                using T = std::decay_t<decltype(fam)>;
                if constexpr (std::is_same_v<T, ConvolutionFamily>) {
                    if (fam.g_prime) average_over_measure(fam.g_prime, t, x, mu, out, dnn);
                } else if constexpr (std::is_same_v<T, MomentFamily>) {
                    if (fam.phi_prime) fam.phi_prime(t, x, mu.mean(), out);
                } else if constexpr (std::is_same_v<T, MeasureFreeFamily>) {
                    if (fam.h_prime) fam.h_prime(t, x, out);
                } else if constexpr (std::is_same_v<T, CustomFamily>) {
                    if (fam.f_prime) fam.f_prime(t, x, mu, out);
                }
            },
            rough_);
    }

    void dx_f(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) const {
        const std::size_t ddn = dims_.d * dims_.d * dims_.n;
        std::fill(out.begin(), out.end(), 0.0);
        std::visit(
            [&](const auto& fam) {
                using T = std::decay_t<decltype(fam)>;
                if constexpr (std::is_same_v<T, ConvolutionFamily>) {
                    average_over_measure(fam.dx_g, t, x, mu, out, ddn);
                } else if constexpr (std::is_same_v<T, MomentFamily>) {
                    fam.dx_phi(t, x, mu.mean(), out);
                } else if constexpr (std::is_same_v<T, MeasureFreeFamily>) {
                    fam.dx_h(t, x, out);
                } else if constexpr (std::is_same_v<T, CustomFamily>) {
                    if (fam.dx_f) fam.dx_f(t, x, mu, out);
                }
            },
            rough_);
    }

    /// d_mu f(t, x, mu)(v). Zero for measure-free and constant families.
    void lions_f(double t, std::span<const double> x, const EmpiricalMeasure& mu, std::span<const double> v,
                 std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        std::visit(
            [&](const auto& fam) {
                using T = std::decay_t<decltype(fam)>;
                if constexpr (std::is_same_v<T, ConvolutionFamily>) {
                    fam.dy_g(t, x, v, out);
                } else if constexpr (std::is_same_v<T, MomentFamily>) {
                    fam.dm_phi(t, x, mu.mean(), out);
                } else if constexpr (std::is_same_v<T, CustomFamily>) {
                    if (fam.lions_f) fam.lions_f(t, x, mu, v, out);
                }
            },
            rough_);
    }

private:
    static void average_over_measure(const PairFn& g, double t, std::span<const double> x, const EmpiricalMeasure& mu,
                                     std::span<double> out, std::size_t width) {
        const std::size_t N = mu.size();
        std::vector<double> block(N * width);
        for (std::size_t z = 0; z < N; ++z)
            g(t, x, mu.particle(z), std::span<double>(block.data() + z * width, width));
        const auto means = order_invariant_column_means(block, N, width);
        std::copy(means.begin(), means.end(), out.begin());
    }

    Dimensions dims_;
    DriftField drift_;
    DiffusionField diffusion_;
    RoughFamily rough_;
};

// ---------------------------------------------------------------------------

enum class Coefficient { b, sigma, f, f_prime };

/// Evaluates one coefficient at (t, x, mu) as a shaped tensor.
inline Tensor eval(const CoefficientSet& c, Coefficient which, double t, std::span<const double> x,
                   const EmpiricalMeasure& mu) {
    const auto& dm = c.dims();
    if (mu.size() == 0) throw std::invalid_argument("eval: empty measure");
    if (x.size() != dm.d || mu.dim() != dm.d) throw std::invalid_argument("eval: dimension mismatch");
    switch (which) {
        case Coefficient::b: {
            Tensor out({dm.d});
            c.b(t, x, mu, out.data);
            return out;
        }
        case Coefficient::sigma: {
            Tensor out({dm.d, dm.m});
            c.sigma(t, x, mu, out.data);
            return out;
        }
        case Coefficient::f: {
            Tensor out({dm.d, dm.n});
            c.f(t, x, mu, out.data);
            return out;
        }
        case Coefficient::f_prime: {
            Tensor out({dm.d, dm.n, dm.n});
            c.f_prime(t, x, mu, out.data);
            return out;
        }
    }
    throw std::invalid_argument("eval: unknown coefficient");
}

/// d_mu f(t, x, mu)(v) as a d x d x n tensor (zero for measure-free families).
inline Tensor lions_derivative(const CoefficientSet& c, double t, std::span<const double> x,
                               const EmpiricalMeasure& mu, std::span<const double> v) {
    const auto& dm = c.dims();
    Tensor out({dm.d, dm.d, dm.n});
    c.lions_f(t, x, mu, v, out.data);
    return out;
}

struct LionsCheck {
    double relative_error = 0.0;
    Tensor finite_difference;
    Tensor analytic;
};

/// Central difference of h -> f(t, x, mu(X + h Y)) against (1/N) sum_j d_mu f(X_j) . Y_j.
///
/// The relative error is max|fd - analytic| / max|analytic|; if the analytic side is
/// identically zero the absolute difference is returned instead.
inline LionsCheck lions_fd_check(const CoefficientSet& c, double t, std::span<const double> x,
                                 const EmpiricalMeasure& ensemble, std::span<const double> direction, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("lions_fd_check: h must be positive");
    const auto& dm = c.dims();
    const std::size_t N = ensemble.size(), d = dm.d, n = dm.n;
    if (direction.size() != N * d) throw std::invalid_argument("lions_fd_check: direction must be N x d");

    std::vector<double> plus(ensemble.points().begin(), ensemble.points().end()), minus = plus;
    for (std::size_t k = 0; k < plus.size(); ++k) {
        plus[k] += h * direction[k];
        minus[k] -= h * direction[k];
    }
    const EmpiricalMeasure mu_plus(d, std::move(plus)), mu_minus(d, std::move(minus));
    LionsCheck out;
    out.finite_difference = Tensor({d, n});
    out.analytic = Tensor({d, n});
    std::vector<double> fp(d * n), fm(d * n);
    c.f(t, x, mu_plus, fp);
    c.f(t, x, mu_minus, fm);
    for (std::size_t e = 0; e < d * n; ++e) out.finite_difference[e] = (fp[e] - fm[e]) / (2.0 * h);

    std::vector<double> lions(d * d * n), terms(N * d * n);
    for (std::size_t z = 0; z < N; ++z) {
        c.lions_f(t, x, ensemble, ensemble.particle(z), lions);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += lions[(i * d + j) * n + k] * direction[z * d + j];
                terms[z * d * n + i * n + k] = acc;
            }
    }
    const auto means = order_invariant_column_means(terms, N, d * n);
    std::copy(means.begin(), means.end(), out.analytic.data.begin());

    double diff = 0.0;
    for (std::size_t e = 0; e < d * n; ++e)
        diff = std::max(diff, std::abs(out.finite_difference[e] - out.analytic[e]));
    const double scale = out.analytic.max_abs();
    out.relative_error = scale > 0.0 ? diff / scale : diff;
    return out;
}

// ---------------------------------------------------------------------------

/// Evaluates the second-level integrand of the Davie expansion against a frozen measure:
///   Phi^i_{kl}(x) = sum_j d_{x^j} f^i_l f^j_k
///                 + (1/N) sum_z d_mu f^i_l(x)(X_z) . f_k(X_z)
///                 + (f'_{lk})^i.
/// f at every particle of mu is computed once at construction.
class GammaPrimeEvaluator {
public:
    GammaPrimeEvaluator(const CoefficientSet& c, double t, const EmpiricalMeasure& mu) : c_(c), t_(t), mu_(mu) {
        if (mu.size() == 0) throw std::invalid_argument("gamma_prime_integrand: empty measure");
        const auto& dm = c.dims();
        const std::size_t N = mu.size(), dn = dm.d * dm.n;
        f_table_.resize(N * dn);
        for (std::size_t z = 0; z < N; ++z)
            c.f(t, mu.particle(z), mu, std::span<double>(f_table_.data() + z * dn, dn));
        if (c.rough_measure_dependent() && c.lions_constant_in_v())
            f_mean_ = order_invariant_column_means(f_table_, N, dn);
    }

    /// f(t, X_z, mu) for particle z of the frozen measure.
    std::span<const double> f_at(std::size_t z) const {
        const std::size_t dn = c_.dims().d * c_.dims().n;
        return {f_table_.data() + z * dn, dn};
    }

    /// Phi(x) given f(x) already evaluated.
    void operator()(std::span<const double> x, std::span<const double> fx, std::span<double> out) const {
        const auto& dm = c_.dims();
        const std::size_t d = dm.d, n = dm.n;
        std::vector<double> dxf(d * d * n), fpr(d * n * n);
        c_.dx_f(t_, x, mu_, dxf);
        c_.f_prime(t_, x, mu_, fpr);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t l = 0; l < n; ++l) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < d; ++j) acc += dxf[(i * d + j) * n + l] * fx[j * n + k];
                    out[(i * n + k) * n + l] = acc + fpr[(i * n + l) * n + k];
                }
        if (!c_.rough_measure_dependent()) return;

        std::vector<double> lions(d * d * n);
        if (c_.lions_constant_in_v()) {
            c_.lions_f(t_, x, mu_, mu_.particle(0), lions);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t k = 0; k < n; ++k)
                    for (std::size_t l = 0; l < n; ++l) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < d; ++j) acc += lions[(i * d + j) * n + l] * f_mean_[j * n + k];
                        out[(i * n + k) * n + l] += acc;
                    }
            return;
        }
        const std::size_t N = mu_.size(), dnn = d * n * n;
        std::vector<double> terms(N * dnn);
        for (std::size_t z = 0; z < N; ++z) {
            c_.lions_f(t_, x, mu_, mu_.particle(z), lions);
            const auto fz = f_at(z);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t k = 0; k < n; ++k)
                    for (std::size_t l = 0; l < n; ++l) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < d; ++j) acc += lions[(i * d + j) * n + l] * fz[j * n + k];
                        terms[z * dnn + (i * n + k) * n + l] = acc;
                    }
        }
        const auto means = order_invariant_column_means(terms, N, dnn);
        for (std::size_t e = 0; e < dnn; ++e) out[e] += means[e];
    }

    void operator()(std::span<const double> x, std::span<double> out) const {
        std::vector<double> fx(c_.dims().d * c_.dims().n);
        c_.f(t_, x, mu_, fx);
        (*this)(x, fx, out);
    }

private:
    const CoefficientSet& c_;
    double t_;
    const EmpiricalMeasure& mu_;
    std::vector<double> f_table_;
    std::vector<double> f_mean_;
};

inline Tensor gamma_prime_integrand(const CoefficientSet& c, double t, std::span<const double> x,
                                    const EmpiricalMeasure& mu) {
    const auto& dm = c.dims();
    Tensor out({dm.d, dm.n, dm.n});
    GammaPrimeEvaluator(c, t, mu)(x, out.data);
    return out;
}

}  // namespace roughmkv
