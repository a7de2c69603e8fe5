#pragma once

// Neumann eigenbasis transforms on midpoint grids.
//
// Along each axis the normalized bases are
//   cosine:  c_k(x) = w_k cos(k pi x / L),  w_0 = 1/sqrt(L), w_k = sqrt(2/L)
//   sine:    s_k(x) = sqrt(2/L) sin(k pi x / L),  k = 1..N
// so that d/dx c_k = -(k pi / L) s_k and d/dx s_k = (k pi / L) c_k.
// Sine coefficients of mode k are stored at slot k-1.
//
// The discrete transforms are the DCT-II/III and DST-II/III pairs
// (even/odd extension of length 2N), evaluated with FFTW.

#include <fftw3.h>

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "field.hpp"
#include "grid.hpp"

namespace fracross {

enum class AxisBasis { cosine, sine };

/// How apply_multiplier treats mode 0 when the multiplier is singular there.
enum class ModeZeroPolicy { strict, pass_through };

namespace detail {

enum class Direction { analysis, synthesis };

inline fftw_r2r_kind fftw_kind(AxisBasis basis, Direction dir)
{
    if (basis == AxisBasis::cosine) {
        return dir == Direction::analysis ? FFTW_REDFT10 : FFTW_REDFT01;
    }
    return dir == Direction::analysis ? FFTW_RODFT10 : FFTW_RODFT01;
}

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
public:
    static PlanCache& instance()
    {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int dim, std::array<int, 2> n, std::array<fftw_r2r_kind, 2> kinds)
    {
        const auto key = std::make_tuple(dim, n[0], n[1], static_cast<int>(kinds[0]), static_cast<int>(kinds[1]));
        std::lock_guard<std::mutex> lock(mutex_);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        const std::size_t total = static_cast<std::size_t>(n[0]) * static_cast<std::size_t>(dim == 2 ? n[1] : 1);
        double* in = fftw_alloc_real(total);
        double* out = fftw_alloc_real(total);
        // FFTW_UNALIGNED keeps results independent of buffer addresses.
        fftw_plan plan = fftw_plan_r2r(dim, n.data(), in, out, kinds.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        if (plan == nullptr) throw NumericalError("FFTW failed to create a plan");
        plans_.emplace(key, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache()
    {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::tuple<int, int, int, int, int>, fftw_plan> plans_;
};

// Per-slot scale factors converting between normalized coefficients and the
// unnormalized FFTW conventions along one axis.
inline std::vector<double> axis_scale(AxisBasis basis, Direction dir, double length, int n)
{
    std::vector<double> s(n);
    const double h = length / n;
    const double root2l = std::sqrt(2.0 / length);
    for (int m = 0; m < n; ++m) {
        if (basis == AxisBasis::cosine) {
            const double w = m == 0 ? 1.0 / std::sqrt(length) : root2l;
            // REDFT10: Y_k = 2 sum_j x_j cos(...); REDFT01: Y_j = X_0 + 2 sum_k X_k cos(...)
            s[m] = dir == Direction::analysis ? 0.5 * h * w : (m == 0 ? w : 0.5 * w);
        } else {
            // RODFT01 doubles every term except the last (mode N).
            const bool top = m == n - 1;
            if (dir == Direction::analysis) {
                s[m] = top ? 0.25 * h * root2l : 0.5 * h * root2l;
            } else {
                s[m] = top ? root2l : 0.5 * root2l;
            }
        }
    }
    return s;
}

inline std::vector<double> transform(const Grid& grid, std::array<AxisBasis, 2> bases, Direction dir,
                                     std::span<const double> input)
{
    const int dim = grid.dim();
    std::array<std::vector<double>, 2> scales;
    for (int a = 0; a < dim; ++a) {
        scales[a] = axis_scale(bases[a], dir, grid.extent(a), grid.resolution(a));
    }
    std::vector<double> in(input.begin(), input.end());
    if (dir == Direction::synthesis) {
        for (std::size_t idx = 0; idx < in.size(); ++idx) {
            const auto ij = grid.unflat(idx);
            in[idx] *= scales[0][ij[0]] * (dim == 2 ? scales[1][ij[1]] : 1.0);
        }
    }
    std::array<int, 2> n{grid.resolution(0), grid.resolution(1)};
    std::array<fftw_r2r_kind, 2> kinds{fftw_kind(bases[0], dir), fftw_kind(bases[1], dir)};
    fftw_plan plan = PlanCache::instance().get(dim, n, kinds);
    std::vector<double> out(in.size());
    fftw_execute_r2r(plan, in.data(), out.data());
    if (dir == Direction::analysis) {
        for (std::size_t idx = 0; idx < out.size(); ++idx) {
            const auto ij = grid.unflat(idx);
            out[idx] *= scales[0][ij[0]] * (dim == 2 ? scales[1][ij[1]] : 1.0);
        }
    }
    return out;
}

inline void require_finite(const std::vector<double>& v, const char* what)
{
    if (!all_finite(v)) throw DomainError(std::string(what) + " contains non-finite values");
}

}  // namespace detail

inline SpectralField to_spectral(const PhysicalField& f)
{
    detail::require_finite(f.values, "physical field");
    return SpectralField(f.grid, detail::transform(f.grid, {AxisBasis::cosine, AxisBasis::cosine},
                                                   detail::Direction::analysis, f.values));
}

inline PhysicalField to_physical(const SpectralField& u)
{
    detail::require_finite(u.coeffs, "spectral field");
    return PhysicalField(u.grid, detail::transform(u.grid, {AxisBasis::cosine, AxisBasis::cosine},
                                                   detail::Direction::synthesis, u.coeffs));
}

/// coeffs'_k = m(lambda_k) coeffs_k. A multiplier that is not finite at
/// lambda = 0 requires a zero-mean input unless mode 0 is passed through.
template <class Multiplier>
SpectralField apply_multiplier(const SpectralField& u, Multiplier&& m,
                               ModeZeroPolicy policy = ModeZeroPolicy::strict)
{
    const Grid& grid = u.grid;
    SpectralField out(grid);
    for (std::size_t idx = 0; idx < u.size(); ++idx) {
        const double lambda = eigenvalue(grid.unflat(idx), grid);
        if (idx == 0) {
            if (policy == ModeZeroPolicy::pass_through) {
                out[0] = u[0];
                continue;
            }
            const double m0 = m(lambda);
            if (std::isfinite(m0)) {
                out[0] = m0 * u[0];
            } else if (u[0] == 0.0) {
                out[0] = 0.0;
            } else {
                throw DomainError("multiplier is singular at lambda = 0 and the field has non-zero mean");
            }
            continue;
        }
        const double mk = m(lambda);
        if (!std::isfinite(mk)) throw DomainError("multiplier is not finite at a grid eigenvalue");
        out[idx] = mk * u[idx];
    }
    return out;
}

/// Same as apply_multiplier with a precomputed table indexed like coeffs.
inline SpectralField apply_table(const SpectralField& u, std::span<const double> table)
{
    SpectralField out(u.grid);
    for (std::size_t idx = 0; idx < u.size(); ++idx) out[idx] = table[idx] * u[idx];
    return out;
}

inline SpectralField laplacian(const SpectralField& u)
{
    return apply_multiplier(u, [](double lambda) { return -lambda; });
}

/// Per-axis partial derivatives, synthesized at the collocation nodes.
inline std::vector<PhysicalField> gradient(const SpectralField& u)
{
    detail::require_finite(u.coeffs, "spectral field");
    const Grid& grid = u.grid;
    std::vector<PhysicalField> grad;
    for (int a = 0; a < grid.dim(); ++a) {
        const double wave = std::numbers::pi / grid.extent(a);
        std::vector<double> mixed(u.size(), 0.0);
        for (std::size_t idx = 0; idx < u.size(); ++idx) {
            auto k = grid.unflat(idx);
            if (k[a] == 0) continue;
            const double factor = -k[a] * wave;
            k[a] -= 1;  // sine slot of mode k_a
            mixed[grid.flat(k[0], k[1])] = factor * u[idx];
        }
        std::array<AxisBasis, 2> bases{AxisBasis::cosine, AxisBasis::cosine};
        bases[a] = AxisBasis::sine;
        grad.emplace_back(grid, detail::transform(grid, bases, detail::Direction::synthesis, mixed));
    }
    return grad;
}

/// Divergence of a flux given at the nodes. Each component is expanded in
/// sines along its own axis (no-flux at the walls) and cosines across.
/// Modes above keep_fraction * N_a on any axis are discarded before the
/// derivative is taken (keep_fraction = 2/3 is the usual dealiasing rule).
/// The result has an exactly zero mode-0 coefficient.
inline SpectralField divergence(std::span<const PhysicalField> flux, double keep_fraction = 1.0)
{
    if (flux.empty()) throw ValidationError("divergence needs at least one flux component");
    const Grid& grid = flux[0].grid;
    if (static_cast<int>(flux.size()) != grid.dim()) {
        throw ValidationError("flux must have one component per axis");
    }
    std::array<int, 2> cutoff{};
    for (int a = 0; a < grid.dim(); ++a) {
        cutoff[a] = static_cast<int>(std::floor(keep_fraction * grid.resolution(a) + 1e-12));
    }
    SpectralField out(grid);
    for (int a = 0; a < grid.dim(); ++a) {
        detail::require_finite(flux[a].values, "flux component");
        std::array<AxisBasis, 2> bases{AxisBasis::cosine, AxisBasis::cosine};
        bases[a] = AxisBasis::sine;
        const auto mixed = detail::transform(grid, bases, detail::Direction::analysis, flux[a].values);
        const double wave = std::numbers::pi / grid.extent(a);
        for (std::size_t idx = 1; idx < out.size(); ++idx) {
            auto k = grid.unflat(idx);
            if (k[a] == 0) continue;
            bool keep = true;
            for (int b = 0; b < grid.dim(); ++b) keep = keep && k[b] <= cutoff[b];
            if (!keep) continue;
            const double factor = k[a] * wave;
            auto slot = k;
            slot[a] -= 1;
            out[idx] += factor * mixed[grid.flat(slot[0], slot[1])];
        }
    }
    out[0] = 0.0;
    return out;
}

/// Retain only modes with k_a <= keep_fraction * N_a on every axis.
inline SpectralField truncate_modes(const SpectralField& u, double keep_fraction)
{
    SpectralField out = u;
    const Grid& grid = u.grid;
    for (std::size_t idx = 0; idx < u.size(); ++idx) {
        const auto k = grid.unflat(idx);
        for (int a = 0; a < grid.dim(); ++a) {
            if (k[a] > keep_fraction * grid.resolution(a) + 1e-12) {
                out[idx] = 0.0;
                break;
            }
        }
    }
    return out;
}

}  // namespace fracross
