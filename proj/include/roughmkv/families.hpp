#pragma once

// Built-in parametric coefficient families. Each rough family comes with analytic
// spatial and Lions derivatives; component kappa of a vector field is phase-shifted
// by kappa/2 so that the n driver directions are not collinear.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "coefficients.hpp"

namespace roughmkv::families {

namespace detail {
inline double phase(std::size_t kappa) { return 0.5 * static_cast<double>(kappa); }
}  // namespace detail

// ----------------------------------------------------------------------------- rough (f, f')

inline RoughFamily zero_rough(const Dimensions& dm) { return ConstantFamily{std::vector<double>(dm.d * dm.n, 0.0)}; }

inline RoughFamily constant_rough(const Dimensions& dm, double c) {
    return ConstantFamily{std::vector<double>(dm.d * dm.n, c)};
}

/// h^i_k(x) = slope x_i + offset.
inline RoughFamily affine_rough(const Dimensions& dm, double slope, double offset) {
    const std::size_t d = dm.d, n = dm.n;
    MeasureFreeFamily fam;
    fam.h = [=](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[i * n + k] = slope * x[i] + offset;
    };
    fam.dx_h = [=](double, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[(i * d + i) * n + k] = slope;
    };
    return fam;
}

/// h^i_k(x) = amp sin(freq x_i + k/2).
inline RoughFamily sine_rough(const Dimensions& dm, double amp, double freq) {
    const std::size_t d = dm.d, n = dm.n;
    MeasureFreeFamily fam;
    fam.h = [=](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[i * n + k] = amp * std::sin(freq * x[i] + detail::phase(k));
    };
    fam.dx_h = [=](double, std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k)
                out[(i * d + i) * n + k] = amp * freq * std::cos(freq * x[i] + detail::phase(k));
    };
    fam.bound = std::abs(amp);
    return fam;
}

/// phi^i_k(x, m) = a sin(x_i + k/2) + c cos(m_i + k/2).
inline RoughFamily moment_sine(const Dimensions& dm, double a, double c) {
    const std::size_t d = dm.d, n = dm.n;
    MomentFamily fam;
    fam.phi = [=](double, std::span<const double> x, std::span<const double> m, std::span<double> out) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k)
                out[i * n + k] = a * std::sin(x[i] + detail::phase(k)) + c * std::cos(m[i] + detail::phase(k));
    };
    fam.dx_phi = [=](double, std::span<const double> x, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[(i * d + i) * n + k] = a * std::cos(x[i] + detail::phase(k));
    };
    fam.dm_phi = [=](double, std::span<const double>, std::span<const double> m, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[(i * d + i) * n + k] = -c * std::sin(m[i] + detail::phase(k));
    };
    fam.bound = std::abs(a) + std::abs(c);
    return fam;
}

/// phi^i_k(x, m) = a x_i + c m_i + offset.
inline RoughFamily moment_linear(const Dimensions& dm, double a, double c, double offset = 0.0) {
    const std::size_t d = dm.d, n = dm.n;
    MomentFamily fam;
    fam.phi = [=](double, std::span<const double> x, std::span<const double> m, std::span<double> out) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[i * n + k] = a * x[i] + c * m[i] + offset;
    };
    fam.dx_phi = [=](double, std::span<const double>, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[(i * d + i) * n + k] = a;
    };
    fam.dm_phi = [=](double, std::span<const double>, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[(i * d + i) * n + k] = c;
    };
    return fam;
}

/// g^i_k(x, y) = amp/(k+1) r_i exp(-|r|^2 / (2 w^2)),  r = y - x.
inline RoughFamily gaussian_convolution(const Dimensions& dm, double amp, double width) {
    const std::size_t d = dm.d, n = dm.n;
    const double w2 = width * width;
    auto kernel = [=](std::span<const double> x, std::span<const double> y, std::vector<double>& r) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            r[i] = y[i] - x[i];
            r2 += r[i] * r[i];
        }
        return std::exp(-r2 / (2.0 * w2));
    };
    // dy_g^i_k / dy_j = a_k (delta_ij - r_i r_j / w^2) E
    auto dy = [=](std::span<const double> x, std::span<const double> y, std::span<double> out, double sign) {
        std::vector<double> r(d);
        const double e = kernel(x, y, r);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                for (std::size_t k = 0; k < n; ++k) {
                    const double ak = amp / static_cast<double>(k + 1);
                    out[(i * d + j) * n + k] = sign * ak * ((i == j ? 1.0 : 0.0) - r[i] * r[j] / w2) * e;
                }
    };
    ConvolutionFamily fam;
    fam.g = [=](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
        std::vector<double> r(d);
        const double e = kernel(x, y, r);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[i * n + k] = amp / static_cast<double>(k + 1) * r[i] * e;
    };
    fam.dy_g = [=](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
        dy(x, y, out, 1.0);
    };
    fam.dx_g = [=](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
        dy(x, y, out, -1.0);
    };
    fam.bound = std::abs(amp) * width * std::exp(-0.5);
    return fam;
}

/// g^i_k(x, y) = amp sin(y_i - x_i + k/2).
inline RoughFamily sine_convolution(const Dimensions& dm, double amp) {
    const std::size_t d = dm.d, n = dm.n;
    auto deriv = [=](std::span<const double> x, std::span<const double> y, std::span<double> out, double sign) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k)
                out[(i * d + i) * n + k] = sign * amp * std::cos(y[i] - x[i] + detail::phase(k));
    };
    ConvolutionFamily fam;
    fam.g = [=](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < n; ++k) out[i * n + k] = amp * std::sin(y[i] - x[i] + detail::phase(k));
    };
    fam.dy_g = [=](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
        deriv(x, y, out, 1.0);
    };
    fam.dx_g = [=](double, std::span<const double> x, std::span<const double> y, std::span<double> out) {
        deriv(x, y, out, -1.0);
    };
    fam.bound = std::abs(amp);
    return fam;
}

// ----------------------------------------------------------------------------- drift, diffusion

inline DriftField zero_drift() { return {}; }

/// b^i(x, mu) = a x_i + c m_i(mu).
inline DriftField linear_mean_field_drift(const Dimensions& dm, double a, double c) {
    const std::size_t d = dm.d;
    DriftField b;
    b.fn = [=](double, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) {
        const auto m = mu.mean();
        for (std::size_t i = 0; i < d; ++i) out[i] = a * x[i] + c * m[i];
    };
    b.measure_dependent = c != 0.0;
    return b;
}

/// b^i(x, mu) = a sin(x_i) + c cos(m_i(mu)).
inline DriftField sine_mean_field_drift(const Dimensions& dm, double a, double c) {
    const std::size_t d = dm.d;
    DriftField b;
    b.fn = [=](double, std::span<const double> x, const EmpiricalMeasure& mu, std::span<double> out) {
        const auto m = mu.mean();
        for (std::size_t i = 0; i < d; ++i) out[i] = a * std::sin(x[i]) + c * std::cos(m[i]);
    };
    b.measure_dependent = c != 0.0;
    return b;
}

inline DiffusionField zero_diffusion() { return {}; }

/// sigma^i_l(x) = (s0 + s1 x_i) delta_il.
inline DiffusionField affine_diffusion(const Dimensions& dm, double s0, double s1) {
    const std::size_t d = dm.d, m = dm.m;
    DiffusionField s;
    s.fn = [=](double, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < std::min(d, m); ++i) out[i * m + i] = s0 + s1 * x[i];
    };
    return s;
}

inline DiffusionField constant_diffusion(const Dimensions& dm, double s) { return affine_diffusion(dm, s, 0.0); }

}  // namespace roughmkv::families
