#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "summation.hpp"

namespace roughmkv {

/// Equal-weight empirical measure (1/N) sum_i delta_{X_i} on R^d.
class EmpiricalMeasure {
public:
    EmpiricalMeasure(std::size_t dim, std::vector<double> points) : dim_(dim), points_(std::move(points)) {
        if (dim_ < 1) throw std::invalid_argument("EmpiricalMeasure: dimension must be >= 1");
        if (points_.empty() || points_.size() % dim_ != 0)
            throw std::invalid_argument("EmpiricalMeasure: need N >= 1 points of dimension d");
        for (double v : points_)
            if (!std::isfinite(v)) throw std::invalid_argument("EmpiricalMeasure: non-finite coordinate");
        mean_ = order_invariant_column_means(points_, size(), dim_);
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return points_.size() / dim_; }
    std::span<const double> particle(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
    std::span<const double> points() const { return points_; }
    /// m(mu) = int y mu(dy), summed order-invariantly.
    std::span<const double> mean() const { return mean_; }

private:
    std::size_t dim_;
    std::vector<double> points_;
    std::vector<double> mean_;
};

}  // namespace roughmkv
