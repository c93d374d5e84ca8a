#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "brownian.hpp"
#include "checksum.hpp"
#include "random.hpp"
#include "time_grid.hpp"

namespace roughmkv {

enum class Convention { stratonovich, ito };

inline const char* to_string(Convention c) { return c == Convention::stratonovich ? "stratonovich" : "ito"; }

/// Dense n x n matrix, row-major. Holds second-level values W^{ij}_{s,t}.
struct SquareMatrix {
    std::size_t n = 0;
    std::vector<double> data;

    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t dim) : n(dim), data(dim * dim, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }

    /// Largest absolute entry.
    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::abs(v));
        return m;
    }
    double frobenius() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }
};

/// Level-2 rough path (W, WW) on a time grid.
///
/// Only the first level at grid points and the second level on adjacent cells are
/// stored; WW on any other grid pair is produced by Chen's relation, so the relation
/// holds by construction up to rounding.
class GridRoughPath {
public:
    GridRoughPath(TimeGrid grid, std::size_t dim, std::vector<double> values, std::vector<double> cell_areas,
                  double alpha, Convention convention = Convention::stratonovich)
        : grid_(std::move(grid)),
          dim_(dim),
          values_(std::move(values)),
          areas_(std::move(cell_areas)),
          alpha_(alpha),
          convention_(convention) {
        if (dim_ < 1) throw std::invalid_argument("GridRoughPath: dimension must be >= 1");
        if (!(alpha_ > 1.0 / 3.0 && alpha_ <= 0.5))
            throw std::invalid_argument("GridRoughPath: alpha must lie in (1/3, 1/2]");
        if (values_.size() != grid_.size() * dim_)
            throw std::invalid_argument("GridRoughPath: first level has wrong size");
        if (areas_.size() != grid_.cells() * dim_ * dim_)
            throw std::invalid_argument("GridRoughPath: second level has wrong size");
    }

    const TimeGrid& grid() const { return grid_; }
    std::size_t dim() const { return dim_; }
    double alpha() const { return alpha_; }
    Convention convention() const { return convention_; }

    std::span<const double> value(std::size_t k) const { return {values_.data() + k * dim_, dim_}; }
    std::span<const double> cell_area(std::size_t k) const {
        return {areas_.data() + k * dim_ * dim_, dim_ * dim_};
    }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& cell_areas() const { return areas_; }

    /// delta W_{t_i, t_j}.
    std::vector<double> increment(std::size_t i, std::size_t j) const {
        std::vector<double> d(dim_);
        for (std::size_t a = 0; a < dim_; ++a) d[a] = values_[j * dim_ + a] - values_[i * dim_ + a];
        return d;
    }

    std::uint64_t checksum() const {
        Fnv1a h;
        h.add(std::span<const double>(grid_.points()));
        h.add(static_cast<std::uint64_t>(dim_));
        h.add(alpha_);
        h.add(static_cast<std::uint64_t>(convention_));
        h.add(std::span<const double>(values_));
        h.add(std::span<const double>(areas_));
        return h.value();
    }

private:
    TimeGrid grid_;
    std::size_t dim_;
    std::vector<double> values_;  // (K+1) x n
    std::vector<double> areas_;   // K x n x n
    double alpha_;
    Convention convention_;
};

// ---------------------------------------------------------------------------
// Chen accumulation

/// WW_{t_i, t_j} by left-to-right accumulation over the cells between i and j.
inline SquareMatrix chen_extend_indices(const GridRoughPath& rp, std::size_t i, std::size_t j) {
    if (i > j) throw std::invalid_argument("chen_extend: s must not exceed t");
    if (j >= rp.grid().size()) throw std::invalid_argument("chen_extend: index out of range");
    const std::size_t n = rp.dim();
    SquareMatrix acc(n);
    for (std::size_t k = i; k < j; ++k) {
        const auto a = rp.cell_area(k);
        const auto left = rp.value(i), mid = rp.value(k), right = rp.value(k + 1);
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q)
                acc(p, q) += a[p * n + q] + (mid[p] - left[p]) * (right[q] - mid[q]);
    }
    return acc;
}

inline SquareMatrix chen_extend(const GridRoughPath& rp, double s, double t) {
    const auto i = rp.grid().find(s), j = rp.grid().find(t);
    if (!i || !j) throw std::invalid_argument("chen_extend: times must be grid points");
    return chen_extend_indices(rp, *i, *j);
}

/// max-entry norm of WW_{s,t} - WW_{s,u} - WW_{u,t} - dW_{s,u} (x) dW_{u,t}.
inline double chen_residual_indices(const GridRoughPath& rp, std::size_t s, std::size_t u, std::size_t t) {
    if (!(s <= u && u <= t)) throw std::invalid_argument("chen_residual: need s <= u <= t");
    const auto st = chen_extend_indices(rp, s, t);
    const auto su = chen_extend_indices(rp, s, u);
    const auto ut = chen_extend_indices(rp, u, t);
    const auto d1 = rp.increment(s, u), d2 = rp.increment(u, t);
    const std::size_t n = rp.dim();
    double r = 0.0;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < n; ++q)
            r = std::max(r, std::abs(st(p, q) - su(p, q) - ut(p, q) - d1[p] * d2[q]));
    return r;
}

inline double chen_residual(const GridRoughPath& rp, double s, double u, double t) {
    const auto i = rp.grid().find(s), j = rp.grid().find(u), k = rp.grid().find(t);
    if (!i || !j || !k) throw std::invalid_argument("chen_residual: times must be grid points");
    return chen_residual_indices(rp, *i, *j, *k);
}

/// Calls visit(i, j, WW_{i,j}) for every grid pair i < j, reusing one running fold per i.
template <class Visit>
void for_each_grid_pair(const GridRoughPath& rp, Visit&& visit) {
    const std::size_t n = rp.dim();
    const std::size_t pts = rp.grid().size();
    for (std::size_t i = 0; i + 1 < pts; ++i) {
        SquareMatrix acc(n);
        const auto left = rp.value(i);
        for (std::size_t k = i; k + 1 < pts; ++k) {
            const auto a = rp.cell_area(k);
            const auto mid = rp.value(k), right = rp.value(k + 1);
            for (std::size_t p = 0; p < n; ++p)
                for (std::size_t q = 0; q < n; ++q)
                    acc(p, q) += a[p * n + q] + (mid[p] - left[p]) * (right[q] - mid[q]);
            visit(i, k + 1, static_cast<const SquareMatrix&>(acc));
        }
    }
}

// ---------------------------------------------------------------------------
// Geometricity and Hoelder diagnostics

struct GeometricityReport {
    double max_sym_defect = 0.0;
    double worst_s = 0.0;
    double worst_t = 0.0;
};

/// Max over grid pairs of |Sym(WW_{s,t}) - 1/2 dW (x) dW| in the max-entry norm.
inline GeometricityReport sym_defect(const GridRoughPath& rp) {
    GeometricityReport rep;
    const std::size_t n = rp.dim();
    for_each_grid_pair(rp, [&](std::size_t i, std::size_t j, const SquareMatrix& ww) {
        const auto d = rp.increment(i, j);
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p; q < n; ++q) {
                const double defect = std::abs(0.5 * (ww(p, q) + ww(q, p)) - 0.5 * d[p] * d[q]);
                if (defect > rep.max_sym_defect) {
                    rep.max_sym_defect = defect;
                    rep.worst_s = rp.grid()[i];
                    rep.worst_t = rp.grid()[j];
                }
            }
    });
    return rep;
}

struct HolderNorms {
    double first = 0.0;   // sup |dW_{s,t}| / |t-s|^alpha
    double second = 0.0;  // sup |WW_{s,t}|_F / |t-s|^{2 alpha}
};

inline HolderNorms holder_norms(const GridRoughPath& rp) {
    HolderNorms h;
    const double alpha = rp.alpha();
    for_each_grid_pair(rp, [&](std::size_t i, std::size_t j, const SquareMatrix& ww) {
        const double dt = rp.grid()[j] - rp.grid()[i];
        double norm = 0.0;
        for (double v : rp.increment(i, j)) norm += v * v;
        h.first = std::max(h.first, std::sqrt(norm) / std::pow(dt, alpha));
        h.second = std::max(h.second, ww.frobenius() / std::pow(dt, 2.0 * alpha));
    });
    return h;
}

// ---------------------------------------------------------------------------
// Constructions

/// Lift of the piecewise-linear interpolation of `samples` ((K+1) x n, row-major).
/// Each cell carries WW = 1/2 dW (x) dW, the Riemann-Stieltjes value for a linear segment.
inline GridRoughPath lift_piecewise_linear(const TimeGrid& grid, std::size_t dim, std::span<const double> samples,
                                           double alpha) {
    if (dim < 1) throw std::invalid_argument("lift_piecewise_linear: dimension must be >= 1");
    if (samples.size() != grid.size() * dim)
        throw std::invalid_argument("lift_piecewise_linear: need one sample per grid point");
    std::vector<double> areas(grid.cells() * dim * dim);
    for (std::size_t k = 0; k < grid.cells(); ++k)
        for (std::size_t p = 0; p < dim; ++p)
            for (std::size_t q = 0; q < dim; ++q) {
                const double dp = samples[(k + 1) * dim + p] - samples[k * dim + p];
                const double dq = samples[(k + 1) * dim + q] - samples[k * dim + q];
                areas[(k * dim + p) * dim + q] = 0.5 * dp * dq;
            }
    return GridRoughPath(grid, dim, std::vector<double>(samples.begin(), samples.end()), std::move(areas), alpha);
}

/// Adds (ito -> stratonovich) or subtracts (stratonovich -> ito) 1/2 h Id on every cell.
inline GridRoughPath with_convention(const GridRoughPath& rp, Convention target) {
    if (rp.convention() == target) return rp;
    const double sign = target == Convention::ito ? -1.0 : 1.0;
    const std::size_t n = rp.dim();
    std::vector<double> areas = rp.cell_areas();
    for (std::size_t k = 0; k < rp.grid().cells(); ++k)
        for (std::size_t p = 0; p < n; ++p) areas[(k * n + p) * n + p] += sign * 0.5 * rp.grid().step(k);
    return GridRoughPath(rp.grid(), n, rp.values(), std::move(areas), rp.alpha(), target);
}

inline GridRoughPath to_ito(const GridRoughPath& rp) { return with_convention(rp, Convention::ito); }
inline GridRoughPath to_stratonovich(const GridRoughPath& rp) {
    return with_convention(rp, Convention::stratonovich);
}

/// Restriction to a subgrid; every coarse point must be a point of rp's grid.
inline GridRoughPath restrict_to(const GridRoughPath& rp, const TimeGrid& coarse) {
    const std::size_t n = rp.dim();
    std::vector<std::size_t> idx;
    for (double t : coarse.points()) {
        auto k = rp.grid().find(t);
        if (!k) throw std::invalid_argument("restrict_to: coarse grid is not a subgrid");
        idx.push_back(*k);
    }
    std::vector<double> values, areas;
    for (std::size_t k : idx) {
        auto v = rp.value(k);
        values.insert(values.end(), v.begin(), v.end());
    }
    for (std::size_t c = 0; c + 1 < idx.size(); ++c) {
        const auto ww = chen_extend_indices(rp, idx[c], idx[c + 1]);
        areas.insert(areas.end(), ww.data.begin(), ww.data.end());
    }
    return GridRoughPath(coarse, n, std::move(values), std::move(areas), rp.alpha(), rp.convention());
}

inline GridRoughPath coarsen(const GridRoughPath& rp, std::size_t factor) {
    return restrict_to(rp, rp.grid().coarsened(factor));
}

/// (W, WW) -> (lambda W, lambda^2 WW).
inline GridRoughPath scaled(const GridRoughPath& rp, double lambda) {
    std::vector<double> values = rp.values(), areas = rp.cell_areas();
    for (double& v : values) v *= lambda;
    for (double& a : areas) a *= lambda * lambda;
    return GridRoughPath(rp.grid(), rp.dim(), std::move(values), std::move(areas), rp.alpha(), rp.convention());
}

/// Brownian rough path on `grid`.
///
/// Every cell is split into `refinement` equal sub-steps; the Brownian sample on that
/// fine grid is exact in law, and each coarse cell's second level is the Chen product of
/// the fine linear-segment areas (Wong-Zakai). The Ito convention subtracts 1/2 h Id.
inline GridRoughPath brownian_lift(std::uint64_t seed, std::size_t dim, const TimeGrid& grid,
                                   std::size_t refinement = 64, Convention convention = Convention::stratonovich,
                                   double alpha = 0.4) {
    if (dim < 1) throw std::invalid_argument("brownian_lift: dimension must be >= 1");
    if (refinement < 1) throw std::invalid_argument("brownian_lift: refinement must be >= 1");
    const std::size_t cells = grid.cells();
    std::vector<double> fine_times;
    fine_times.reserve(cells * refinement + 1);
    for (std::size_t k = 0; k < cells; ++k)
        for (std::size_t r = 0; r < refinement; ++r)
            fine_times.push_back(grid[k] + grid.step(k) * static_cast<double>(r) / static_cast<double>(refinement));
    fine_times.push_back(grid.horizon());

    const RandomStream stream(seed, StreamTag::driver, 0);
    std::vector<std::vector<double>> paths(dim);
    for (std::size_t c = 0; c < dim; ++c) paths[c] = brownian_component(stream, c, fine_times);

    std::vector<double> values((cells + 1) * dim);
    std::vector<double> areas(cells * dim * dim, 0.0);
    for (std::size_t k = 0; k <= cells; ++k)
        for (std::size_t c = 0; c < dim; ++c) values[k * dim + c] = paths[c][k * refinement];
    for (std::size_t k = 0; k < cells; ++k) {
        double* a = areas.data() + k * dim * dim;
        const std::size_t base = k * refinement;
        for (std::size_t r = 0; r < refinement; ++r) {
            const std::size_t f = base + r;
            for (std::size_t p = 0; p < dim; ++p) {
                const double lead = paths[p][f] - paths[p][base];
                const double ep = paths[p][f + 1] - paths[p][f];
                for (std::size_t q = 0; q < dim; ++q) {
                    const double eq = paths[q][f + 1] - paths[q][f];
                    a[p * dim + q] += 0.5 * ep * eq + lead * eq;
                }
            }
        }
    }
    GridRoughPath rp(grid, dim, std::move(values), std::move(areas), alpha, Convention::stratonovich);
    return convention == Convention::ito ? to_ito(rp) : rp;
}

// ---------------------------------------------------------------------------
// CSV layout: one row per grid point k: t_k, W_{t_k} (n entries), WW_{t_k,t_{k+1}}
// (n*n entries, row-major). The final row carries WW_{T,T} = 0.

inline void write_csv(std::ostream& os, const GridRoughPath& rp) {
    const std::size_t n = rp.dim();
    os << "# roughmkv rough path dim=" << n << " alpha=";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", rp.alpha());
    os << buf << " convention=" << to_string(rp.convention()) << "\n";
    os << "t";
    for (std::size_t p = 0; p < n; ++p) os << ",W" << p + 1;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < n; ++q) os << ",WW" << p + 1 << "_" << q + 1;
    os << "\n";
    for (std::size_t k = 0; k < rp.grid().size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", rp.grid()[k]);
        os << buf;
        for (double v : rp.value(k)) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            os << buf;
        }
        for (std::size_t e = 0; e < n * n; ++e) {
            const double a = k < rp.grid().cells() ? rp.cell_area(k)[e] : 0.0;
            std::snprintf(buf, sizeof buf, ",%.17g", a);
            os << buf;
        }
        os << "\n";
    }
}

inline GridRoughPath read_csv(std::istream& is) {
    std::string line;
    std::size_t n = 0;
    double alpha = 0.4;
    Convention conv = Convention::stratonovich;
    if (!std::getline(is, line) || line.rfind("# roughmkv rough path", 0) != 0)
        throw std::runtime_error("rough path csv: missing header comment");
    {
        std::istringstream hs(line.substr(std::string("# roughmkv rough path").size()));
        std::string tok;
        while (hs >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "dim") n = std::stoul(val);
            else if (key == "alpha") alpha = std::stod(val);
            else if (key == "convention") conv = val == "ito" ? Convention::ito : Convention::stratonovich;
        }
    }
    if (n == 0) throw std::runtime_error("rough path csv: missing dim");
    std::getline(is, line);  // column names
    std::vector<double> times, values, areas;
    std::size_t row = 2;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<double> cells;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) cells.push_back(std::stod(field));
        if (cells.size() != 1 + n + n * n)
            throw std::runtime_error("rough path csv: wrong column count on line " + std::to_string(row));
        times.push_back(cells[0]);
        values.insert(values.end(), cells.begin() + 1, cells.begin() + 1 + static_cast<long>(n));
        areas.insert(areas.end(), cells.begin() + 1 + static_cast<long>(n), cells.end());
    }
    if (times.size() < 2) throw std::runtime_error("rough path csv: need at least two rows");
    areas.resize((times.size() - 1) * n * n);
    return GridRoughPath(TimeGrid(std::move(times)), n, std::move(values), std::move(areas), alpha, conv);
}

}  // namespace roughmkv
