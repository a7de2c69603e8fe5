#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace fracross {

/// Values of a scalar field at the collocation nodes of a grid.
struct PhysicalField {
    Grid grid;
    std::vector<double> values;

    PhysicalField() = default;
    explicit PhysicalField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
    PhysicalField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v))
    {
        if (values.size() != grid.size()) {
            throw ValidationError("physical field size does not match grid");
        }
    }

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

/// Coefficients in the L2-normalized product-cosine Neumann eigenbasis.
/// Slot 0 holds the coefficient of the constant mode 1/sqrt(|Omega|).
struct SpectralField {
    Grid grid;
    std::vector<double> coeffs;

    SpectralField() = default;
    explicit SpectralField(const Grid& g, double fill = 0.0) : grid(g), coeffs(g.size(), fill) {}
    SpectralField(const Grid& g, std::vector<double> c) : grid(g), coeffs(std::move(c))
    {
        if (coeffs.size() != grid.size()) {
            throw ValidationError("spectral field size does not match grid");
        }
    }

    std::size_t size() const { return coeffs.size(); }
    double& operator[](std::size_t i) { return coeffs[i]; }
    double operator[](std::size_t i) const { return coeffs[i]; }

    double& at(const ModeIndex& k)
    {
        (void)eigenvalue(k, grid);
        return coeffs[grid.flat(k[0], k[1])];
    }
    double at(const ModeIndex& k) const
    {
        (void)eigenvalue(k, grid);
        return coeffs[grid.flat(k[0], k[1])];
    }

    double mean() const { return coeffs[0] / std::sqrt(grid.volume()); }
};

/// Single normalized eigenfunction psi_k as a spectral field.
inline SpectralField eigenmode(const Grid& grid, const ModeIndex& k, double amplitude = 1.0)
{
    SpectralField u(grid);
    u.at(k) = amplitude;
    return u;
}

inline SpectralField zero_mean(SpectralField u)
{
    u.coeffs[0] = 0.0;
    return u;
}

inline double l2_norm_sq(const SpectralField& u)
{
    return std::inner_product(u.coeffs.begin(), u.coeffs.end(), u.coeffs.begin(), 0.0);
}

inline double l2_norm(const SpectralField& u) { return std::sqrt(l2_norm_sq(u)); }

inline double inner(const SpectralField& u, const SpectralField& v)
{
    return std::inner_product(u.coeffs.begin(), u.coeffs.end(), v.coeffs.begin(), 0.0);
}

/// Midpoint quadrature of the field over the domain.
inline double integral(const PhysicalField& f)
{
    return f.grid.cell_volume() * std::accumulate(f.values.begin(), f.values.end(), 0.0);
}

inline double l1_norm(const PhysicalField& f)
{
    double s = 0.0;
    for (double v : f.values) s += std::abs(v);
    return f.grid.cell_volume() * s;
}

inline double l2_norm(const PhysicalField& f)
{
    double s = 0.0;
    for (double v : f.values) s += v * v;
    return std::sqrt(f.grid.cell_volume() * s);
}

inline double sup_norm(const PhysicalField& f)
{
    double s = 0.0;
    for (double v : f.values) s = std::max(s, std::abs(v));
    return s;
}

inline double l1_distance(const PhysicalField& f, const PhysicalField& g)
{
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(f[i] - g[i]);
    return f.grid.cell_volume() * s;
}

inline double l2_distance(const PhysicalField& f, const PhysicalField& g)
{
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += (f[i] - g[i]) * (f[i] - g[i]);
    return std::sqrt(f.grid.cell_volume() * s);
}

inline bool all_finite(const std::vector<double>& v)
{
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace fracross
