#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "random.hpp"

namespace roughmkv {

namespace detail {

inline bool is_power_of_two(std::size_t k) { return k != 0 && (k & (k - 1)) == 0; }

// Counter layout: component in the top 16 bits, node code below.
inline std::uint64_t brownian_counter(std::size_t component, std::uint64_t node_code) {
    return (static_cast<std::uint64_t>(component) << 48) | node_code;
}

constexpr std::uint64_t kIidCellOffset = std::uint64_t{1} << 40;

}  // namespace detail

/// One scalar Brownian component sampled at `times` (times[0] = 0, strictly increasing).
///
/// With a uniform grid of 2^L cells the path is built by a Levy (midpoint bridge)
/// construction whose normals are keyed by the dyadic rational of each node, so the
/// path restricted to any coarser dyadic grid is identical to the path sampled there
/// directly. Other grids fall back to independent increments keyed by cell index.
inline std::vector<double> brownian_component(const RandomStream& stream, std::size_t component,
                                              std::span<const double> times) {
    const std::size_t cells = times.size() - 1;
    std::vector<double> w(times.size(), 0.0);
    const double horizon = times.back();
    bool uniform = true;
    for (std::size_t k = 0; k <= cells; ++k)
        if (std::abs(times[k] - horizon * static_cast<double>(k) / static_cast<double>(cells)) >
            1e-12 * horizon) {
            uniform = false;
            break;
        }

    if (uniform && detail::is_power_of_two(cells)) {
        w[cells] = std::sqrt(horizon) * stream.normal(detail::brownian_counter(component, 0));
        for (std::size_t half = cells / 2; half >= 1; half /= 2) {
            const auto level = static_cast<unsigned>(std::countr_zero(cells / half));  // depth of this pass
            for (std::size_t i = half; i < cells; i += 2 * half) {
                const std::size_t l = i - half, r = i + half;
                const double tl = times[l], ti = times[i], tr = times[r];
                const double mean = w[l] + (w[r] - w[l]) * (ti - tl) / (tr - tl);
                const double sd = std::sqrt((ti - tl) * (tr - ti) / (tr - tl));
                // heap index of odd/2^level
                const std::uint64_t code = (std::uint64_t{1} << (level - 1)) + (i / half) / 2;
                w[i] = mean + sd * stream.normal(detail::brownian_counter(component, code));
            }
            if (half == 1) break;
        }
        return w;
    }

    for (std::size_t k = 0; k < cells; ++k) {
        const double h = times[k + 1] - times[k];
        w[k + 1] = w[k] + std::sqrt(h) * stream.normal(detail::brownian_counter(component, detail::kIidCellOffset + k));
    }
    return w;
}

/// Increments of an m-dimensional Brownian motion on `times`, laid out [cell][component].
inline std::vector<double> brownian_increments(const RandomStream& stream, std::size_t dim,
                                               std::span<const double> times) {
    if (times.size() < 2) throw std::invalid_argument("brownian_increments: need at least 2 times");
    const std::size_t cells = times.size() - 1;
    std::vector<double> out(cells * dim);
    for (std::size_t c = 0; c < dim; ++c) {
        const auto path = brownian_component(stream, c, times);
        for (std::size_t k = 0; k < cells; ++k) out[k * dim + c] = path[k + 1] - path[k];
    }
    return out;
}

}  // namespace roughmkv
