#pragma once

#include <vector>

#include "errors.hpp"
#include "field.hpp"

namespace fracross {

/// Species densities at one time level, with per-species masses.
struct SpeciesState {
    double t = 0.0;
    std::vector<PhysicalField> fields;
    std::vector<double> masses;

    SpeciesState() = default;
    SpeciesState(double time, std::vector<PhysicalField> f) : t(time), fields(std::move(f)) { refresh_masses(); }

    std::size_t species() const { return fields.size(); }
    const Grid& grid() const
    {
        if (fields.empty()) throw ValidationError("state has no species");
        return fields.front().grid;
    }

    void refresh_masses()
    {
        masses.resize(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i) masses[i] = integral(fields[i]);
    }
};

/// Spatially constant state carrying the same masses, u_i = mass_i / |Omega|.
inline SpeciesState equilibrium_of(const SpeciesState& s)
{
    std::vector<PhysicalField> eq;
    const Grid& grid = s.grid();
    for (double m : s.masses) eq.emplace_back(grid, m / grid.volume());
    SpeciesState out(s.t, std::move(eq));
    out.masses = s.masses;
    return out;
}

}  // namespace fracross
