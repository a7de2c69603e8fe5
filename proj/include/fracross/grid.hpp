#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace fracross {

/// Multi-index of a Neumann eigenmode. Unused axes are zero.
using ModeIndex = std::array<int, 2>;

/// Axis-aligned rectangle [0,L_0] x [0,L_1] (or an interval) with N_a
/// midpoint collocation nodes per axis.
class Grid {
public:
    Grid() = default;

    Grid(int dim, std::array<double, 2> extent, std::array<int, 2> resolution)
        : dim_(dim), extent_(extent), n_(resolution)
    {
        if (dim_ != 1 && dim_ != 2) {
            throw ValidationError("grid dimension must be 1 or 2, got " + std::to_string(dim_));
        }
        if (dim_ == 1) {
            extent_[1] = 1.0;
            n_[1] = 1;
        }
        for (int a = 0; a < dim_; ++a) {
            if (!(extent_[a] > 0.0) || !std::isfinite(extent_[a])) {
                throw ValidationError("grid extent must be positive on axis " + std::to_string(a));
            }
            if (n_[a] < 8) {
                throw ValidationError("grid resolution must be >= 8 on axis " + std::to_string(a));
            }
        }
    }

    static Grid interval(double length, int n) { return Grid(1, {length, 1.0}, {n, 1}); }
    static Grid rectangle(double lx, double ly, int nx, int ny) { return Grid(2, {lx, ly}, {nx, ny}); }

    int dim() const { return dim_; }
    double extent(int axis) const { return extent_[axis]; }
    int resolution(int axis) const { return n_[axis]; }
    std::size_t size() const { return static_cast<std::size_t>(n_[0]) * static_cast<std::size_t>(n_[1]); }

    double spacing(int axis) const { return extent_[axis] / n_[axis]; }
    double min_spacing() const { return dim_ == 1 ? spacing(0) : std::min(spacing(0), spacing(1)); }
    double node(int axis, int j) const { return (j + 0.5) * spacing(axis); }

    /// Quadrature weight of one collocation cell.
    double cell_volume() const { return dim_ == 1 ? spacing(0) : spacing(0) * spacing(1); }
    double volume() const { return dim_ == 1 ? extent_[0] : extent_[0] * extent_[1]; }

    std::size_t flat(int i0, int i1) const
    {
        return static_cast<std::size_t>(i0) * static_cast<std::size_t>(n_[1]) + static_cast<std::size_t>(i1);
    }
    ModeIndex unflat(std::size_t idx) const
    {
        return {static_cast<int>(idx / n_[1]), static_cast<int>(idx % n_[1])};
    }

    bool operator==(const Grid& other) const = default;

private:
    int dim_ = 1;
    std::array<double, 2> extent_{std::numbers::pi, 1.0};
    std::array<int, 2> n_{8, 1};
};

/// lambda_k = sum_a (k_a pi / L_a)^2.
inline double eigenvalue(const ModeIndex& k, const Grid& grid)
{
    double lambda = 0.0;
    for (int a = 0; a < 2; ++a) {
        const int limit = a < grid.dim() ? grid.resolution(a) : 1;
        if (k[a] < 0 || k[a] >= limit) {
            throw IndexError("mode index " + std::to_string(k[a]) + " out of range on axis " + std::to_string(a));
        }
        if (a < grid.dim()) {
            const double w = k[a] * std::numbers::pi / grid.extent(a);
            lambda += w * w;
        }
    }
    return lambda;
}

/// Eigenvalues for every mode in flat (row-major) order.
inline std::vector<double> eigenvalue_table(const Grid& grid)
{
    std::vector<double> table(grid.size());
    for (std::size_t idx = 0; idx < table.size(); ++idx) {
        table[idx] = eigenvalue(grid.unflat(idx), grid);
    }
    return table;
}

/// Collocation node coordinates for flat index idx.
inline std::array<double, 2> node_position(const Grid& grid, std::size_t idx)
{
    const auto ij = grid.unflat(idx);
    return {grid.node(0, ij[0]), grid.dim() == 2 ? grid.node(1, ij[1]) : 0.0};
}

}  // namespace fracross
