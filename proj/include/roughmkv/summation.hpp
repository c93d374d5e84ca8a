#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace roughmkv {

/// Sum whose result depends only on the multiset of terms, not their order.
/// Sorts `terms` in place (value, then sign of zero) and accumulates left to right.
inline double order_invariant_sum(std::span<double> terms) {
    std::sort(terms.begin(), terms.end(), [](double a, double b) {
        if (a < b) return true;
        if (b < a) return false;
        return std::signbit(a) && !std::signbit(b);
    });
    double acc = 0.0;
    for (double v : terms) acc += v;
    return acc;
}

/// Mean over terms with exact permutation invariance; an exact count divides the sum.
inline double order_invariant_mean(std::span<double> terms) {
    if (terms.empty()) return 0.0;
    return order_invariant_sum(terms) / static_cast<double>(terms.size());
}

/// Column means of a row-major `rows x cols` block, each column summed order-invariantly.
inline std::vector<double> order_invariant_column_means(std::span<const double> block, std::size_t rows,
                                                        std::size_t cols) {
    std::vector<double> out(cols, 0.0);
    std::vector<double> scratch(rows);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) scratch[r] = block[r * cols + c];
        out[c] = order_invariant_mean(scratch);
    }
    return out;
}

}  // namespace roughmkv
