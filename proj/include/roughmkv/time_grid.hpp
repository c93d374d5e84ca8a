#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace roughmkv {

/// Strictly increasing time points 0 = t_0 < ... < t_K = T.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw std::invalid_argument("TimeGrid: need at least 2 points");
        if (points_.front() != 0.0) throw std::invalid_argument("TimeGrid: first point must be 0");
        for (std::size_t k = 1; k < points_.size(); ++k) {
            if (!(points_[k] > points_[k - 1]) || !std::isfinite(points_[k]))
                throw std::invalid_argument("TimeGrid: points must be strictly increasing and finite (index " +
                                            std::to_string(k) + ")");
        }
    }

    static TimeGrid uniform(double horizon, std::size_t cells) {
        if (cells < 1) throw std::invalid_argument("TimeGrid::uniform: need at least one cell");
        if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid::uniform: horizon must be positive");
        std::vector<double> pts(cells + 1);
        for (std::size_t k = 0; k <= cells; ++k)
            pts[k] = horizon * static_cast<double>(k) / static_cast<double>(cells);
        pts.back() = horizon;
        return TimeGrid(std::move(pts));
    }

    std::size_t size() const { return points_.size(); }
    std::size_t cells() const { return points_.size() - 1; }
    double horizon() const { return points_.back(); }
    double operator[](std::size_t k) const { return points_[k]; }
    double step(std::size_t k) const { return points_[k + 1] - points_[k]; }
    const std::vector<double>& points() const { return points_; }

    double max_step() const {
        double h = 0.0;
        for (std::size_t k = 0; k < cells(); ++k) h = std::max(h, step(k));
        return h;
    }

    bool is_uniform(double rel_tol = 1e-12) const {
        const double h = horizon() / static_cast<double>(cells());
        for (std::size_t k = 0; k <= cells(); ++k)
            if (std::abs(points_[k] - h * static_cast<double>(k)) > rel_tol * horizon()) return false;
        return true;
    }

    /// Index of a grid time, matched to within 1e-12 relative to the horizon.
    std::optional<std::size_t> find(double t) const {
        const double tol = 1e-12 * horizon();
        auto it = std::lower_bound(points_.begin(), points_.end(), t - tol);
        if (it != points_.end() && std::abs(*it - t) <= tol)
            return static_cast<std::size_t>(it - points_.begin());
        return std::nullopt;
    }

    std::size_t index_of(double t) const {
        if (auto k = find(t)) return *k;
        throw std::invalid_argument("time " + std::to_string(t) + " is not a grid point");
    }

    /// Every `factor`-th point; the cell count must be divisible by `factor`.
    TimeGrid coarsened(std::size_t factor) const {
        if (factor == 0 || cells() % factor != 0)
            throw std::invalid_argument("TimeGrid::coarsened: factor must divide the cell count");
        std::vector<double> pts;
        for (std::size_t k = 0; k <= cells(); k += factor) pts.push_back(points_[k]);
        return TimeGrid(std::move(pts));
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    std::vector<double> points_;
};

}  // namespace roughmkv
