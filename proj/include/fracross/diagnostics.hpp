#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coupling.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "spectral.hpp"
#include "state.hpp"

namespace fracross {

/// One row of the diagnostics stream.
struct DiagnosticsRecord {
    double t = 0.0;
    double dt = 0.0;
    std::vector<double> masses;
    double H = 0.0;
    double D = 0.0;
    double H_rel = 0.0;
    double L1_dist = 0.0;
    double clip_l1 = 0.0;
};

/// Fitted exponential decay H_rel(t) ~ H_rel(t_a) exp(-rate (t - t_a)).
struct RateFit {
    double t_a = 0.0;
    double t_b = 0.0;
    double rate = 0.0;
    double r2 = 0.0;
    std::size_t samples = 0;
};

namespace detail {

constexpr double log_floor = 1e-300;

inline double clip_tolerance(const PhysicalField& f) { return 1e-10 * sup_norm(f); }

inline void check_nonnegative(const PhysicalField& f, std::size_t species)
{
    const double tol = clip_tolerance(f);
    for (double v : f.values) {
        if (v < -tol) {
            throw DomainError("species " + std::to_string(species + 1) + " has negative density " + std::to_string(v));
        }
    }
}

inline void check_species(const SpeciesState& s, const CouplingSpec& coupling)
{
    if (s.species() != coupling.n) throw ValidationError("state and coupling disagree on the number of species");
}

/// v log v - v with 0 log 0 = 0.
inline double xlogx(double v)
{
    if (v <= 0.0) return 0.0;
    return v * std::log(std::max(v, log_floor));
}

/// u log(u/v) - u + v, accurate when u is close to v.
inline double relative_density(double u, double v)
{
    if (u <= 0.0) return v;
    const double x = (u - v) / v;
    return v * ((1.0 + x) * std::log1p(x) - x);
}

}  // namespace detail

/// H[u] = int sum_i pi_i u_i log u_i.
inline double entropy(const SpeciesState& state, const CouplingSpec& coupling)
{
    detail::check_species(state, coupling);
    double total = 0.0;
    for (std::size_t i = 0; i < state.species(); ++i) {
        const auto& f = state.fields[i];
        detail::check_nonnegative(f, i);
        double s = 0.0;
        for (double v : f.values) s += detail::xlogx(v);
        total += coupling.pi[i] * s * f.grid.cell_volume();
    }
    return total;
}

/// h_M(v) = int_0^v int_1^s T_M(sigma)^{-1} dsigma ds in closed form.
inline double truncated_entropy_density(double v, double M)
{
    if (v <= 0.0) return 0.0;
    if (std::isinf(M)) return detail::xlogx(v) - v;
    if (!(M > 0.0)) throw DomainError("truncation level M must be positive");
    if (M >= 1.0) {
        if (v <= M) return detail::xlogx(v) - v;
        const double d = v - M;
        return M * std::log(M) - M + d * std::log(M) + d * d / (2.0 * M);
    }
    // M < 1: T_M = M on [M, 1], so int_1^s is shifted by the constant part.
    const double shift = std::log(M) + (1.0 - M) / M;
    if (v <= M) return detail::xlogx(v) - v - v * shift;
    const double at_m = M * std::log(M) - M - M * shift;
    return at_m + ((v - 1.0) * (v - 1.0) - (M - 1.0) * (M - 1.0)) / (2.0 * M);
}

struct TruncatedEntropy {
    /// H_M itself.
    double raw = 0.0;
    /// H_M + sum_i pi_i mass_i, which equals H while u <= max(M, 1).
    double comparable = 0.0;
};

inline TruncatedEntropy entropy_truncated(const SpeciesState& state, const CouplingSpec& coupling, double M)
{
    detail::check_species(state, coupling);
    TruncatedEntropy out;
    double offset = 0.0;
    for (std::size_t i = 0; i < state.species(); ++i) {
        const auto& f = state.fields[i];
        detail::check_nonnegative(f, i);
        double s = 0.0;
        for (double v : f.values) s += truncated_entropy_density(v, M);
        out.raw += coupling.pi[i] * s * f.grid.cell_volume();
        offset += coupling.pi[i] * integral(f);
    }
    out.comparable = out.raw + offset;
    return out;
}

/// sum_i sum_{k != 0} lambda_k^{(1+beta)/2} c_k^2, i.e.
/// sum_i || grad (-Delta)^{-(1-beta)/4} u_i ||^2.
inline double dissipation(std::span<const SpectralField> fields, double beta)
{
    double total = 0.0;
    for (const auto& u : fields) {
        for (std::size_t idx = 1; idx < u.size(); ++idx) {
            const double lambda = eigenvalue(u.grid.unflat(idx), u.grid);
            total += std::pow(lambda, 0.5 * (1.0 + beta)) * u[idx] * u[idx];
        }
    }
    return total;
}

inline double dissipation(const SpeciesState& state, double beta)
{
    std::vector<SpectralField> spec;
    for (const auto& f : state.fields) spec.push_back(to_spectral(f));
    return dissipation(spec, beta);
}

/// H[u|v] = sum_i pi_i int (u_i log(u_i/v_i) - u_i + v_i).
inline double relative_entropy(const SpeciesState& state, const SpeciesState& ref, const CouplingSpec& coupling)
{
    detail::check_species(state, coupling);
    detail::check_species(ref, coupling);
    double total = 0.0;
    for (std::size_t i = 0; i < state.species(); ++i) {
        const auto& u = state.fields[i];
        const auto& v = ref.fields[i];
        if (!(u.grid == v.grid)) throw DomainError("relative entropy needs equal grids");
        detail::check_nonnegative(u, i);
        detail::check_nonnegative(v, i);
        double s = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            if (u[k] > 0.0 && v[k] <= 0.0) {
                throw DomainError("reference density of species " + std::to_string(i + 1) +
                                  " vanishes where the state is positive");
            }
            if (v[k] <= 0.0) continue;
            s += detail::relative_density(std::max(u[k], 0.0), v[k]);
        }
        total += coupling.pi[i] * s * u.grid.cell_volume();
    }
    return total;
}

struct CkpResult {
    /// ||u_i - ref_i||_{L1}^2 per species.
    std::vector<double> lhs;
    /// 2 mass_i KL_i per species.
    std::vector<double> rhs;
    double lhs_total = 0.0;
    double rhs_total = 0.0;
    bool ok = true;
};

/// Pinsker bound applied to u_i/mass_i against ref_i/mass_i.
inline CkpResult ckp_check(const SpeciesState& state, const SpeciesState& ref, const CouplingSpec& coupling)
{
    detail::check_species(state, coupling);
    detail::check_species(ref, coupling);
    CkpResult out;
    for (std::size_t i = 0; i < state.species(); ++i) {
        const auto& u = state.fields[i];
        const auto& v = ref.fields[i];
        const double mu = integral(u);
        const double mv = integral(v);
        if (std::abs(mu - mv) > 1e-10 * std::max(std::abs(mu), std::abs(mv))) {
            throw DomainError("CKP check requires equal masses for species " + std::to_string(i + 1));
        }
        double kl = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            if (u[k] > 0.0 && v[k] <= 0.0) throw DomainError("CKP reference vanishes where the state is positive");
            if (v[k] > 0.0) kl += detail::relative_density(std::max(u[k], 0.0), v[k]);
        }
        kl *= u.grid.cell_volume();
        const double dist = l1_distance(u, v);
        const double lhs = dist * dist;
        const double rhs = 2.0 * mu * kl;
        out.lhs.push_back(lhs);
        out.rhs.push_back(rhs);
        out.lhs_total += lhs;
        out.rhs_total += rhs;
        // Rounding slack scaled by mass^2; both sides vanish together.
        out.ok = out.ok && lhs <= rhs * (1.0 + 1e-10) + 1e-14 * mu * mu;
    }
    return out;
}

/// ||grad (-Delta)^{(r-1)/2} u||^2 / ||u||^2 for zero-mean nonzero u.
inline double poincare_ratio(const SpectralField& u, double r)
{
    if (u[0] != 0.0) throw DomainError("Poincare ratio requires a zero-mean field");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t idx = 1; idx < u.size(); ++idx) {
        const double lambda = eigenvalue(u.grid.unflat(idx), u.grid);
        num += std::pow(lambda, r) * u[idx] * u[idx];
        den += u[idx] * u[idx];
    }
    if (den == 0.0) throw DomainError("Poincare ratio requires a nonzero field");
    return num / den;
}

/// Least squares of log(H_rel) against t over samples with t in [t_a, t_b].
inline RateFit fit_rate(std::span<const double> t, std::span<const double> h_rel, double t_a, double t_b)
{
    if (t.size() != h_rel.size()) throw ValidationError("time and value series differ in length");
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_a || t[k] > t_b) continue;
        if (!(h_rel[k] > 0.0)) {
            throw DomainError("relative entropy is not positive in the fit window (already converged at t = " +
                              std::to_string(t[k]) + ")");
        }
        xs.push_back(t[k]);
        ys.push_back(std::log(h_rel[k]));
    }
    if (xs.size() < 10) {
        throw ValidationError("rate fit needs at least 10 samples in the window, got " + std::to_string(xs.size()));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    if (sxx == 0.0) throw DomainError("rate fit window has no time spread");
    RateFit fit;
    fit.t_a = xs.front();
    fit.t_b = xs.back();
    fit.samples = xs.size();
    const double slope = sxy / sxx;
    fit.rate = -slope;
    // A constant series is fitted exactly: r2 = 1 by convention.
    if (syy <= 1e-28 * std::max(1.0, my * my) * n) {
        fit.rate = 0.0;
        fit.r2 = 1.0;
        return fit;
    }
    double ss_res = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double pred = my + slope * (xs[k] - mx);
        ss_res += (ys[k] - pred) * (ys[k] - pred);
    }
    fit.r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    return fit;
}

/// Exponents of the integrability hypothesis on grad log v.
struct TwinExponents {
    double q1 = 0.0;
    double q2 = 0.0;
};

/// q2: smallest integer exceeding 2d/(1+beta); q1 = 2(d+1+beta)/(1+beta-2d/q2).
inline TwinExponents twin_exponents(int dim, double beta, std::optional<double> q2_override = std::nullopt)
{
    const double threshold = 2.0 * dim / (1.0 + beta);
    TwinExponents e;
    e.q2 = q2_override.value_or(std::floor(threshold) + 1.0);
    if (!(e.q2 > threshold)) throw ValidationError("q2 must exceed 2d/(1+beta)");
    e.q1 = 2.0 * (dim + 1.0 + beta) / (1.0 + beta - 2.0 * dim / e.q2);
    return e;
}

struct TwinSample {
    double t = 0.0;
    double H_rel = 0.0;
    /// sum_i || (-Delta)^{-(1-beta)/4} grad(u_i - v_i) ||^2
    double dissipation_between = 0.0;
    /// || grad log v_i ||_{L^{q2}} per species.
    std::vector<double> grad_log_norms;
    /// int_0^t sum_i || grad log v_i ||^{q1}
    double forcing_integral = 0.0;
    double envelope = 0.0;
    bool below_envelope = true;
};

struct TwinReport {
    TwinExponents exponents;
    std::vector<TwinSample> samples;
    /// Smallest C with H(t) <= H(0) exp(C * forcing_integral(t)) at every sample.
    double fitted_c = 0.0;
    bool monotone = true;
    bool all_below_envelope = true;
    bool failed = false;
    std::string annotation;
};

inline double lq_norm_of_gradient_log(const PhysicalField& v, double q)
{
    for (double x : v.values) {
        if (!(x > 0.0)) throw DomainError("grad log v requires a strictly positive density");
    }
    const auto grad = gradient(to_spectral(v));
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        double mag2 = 0.0;
        for (const auto& g : grad) mag2 += g[k] * g[k];
        s += std::pow(std::sqrt(mag2) / v[k], q);
    }
    return std::pow(s * v.grid.cell_volume(), 1.0 / q);
}

/// Weak-strong comparison of two trajectories sampled on the same times.
inline TwinReport twin_run_report(std::span<const SpeciesState> base, std::span<const SpeciesState> perturbed,
                                  const CouplingSpec& coupling, double beta,
                                  std::optional<double> q2_override = std::nullopt)
{
    if (base.size() != perturbed.size()) throw DomainError("twin trajectories have different sample counts");
    TwinReport report;
    if (base.empty()) return report;
    report.exponents = twin_exponents(base.front().grid().dim(), beta, q2_override);
    for (std::size_t k = 0; k < base.size(); ++k) {
        if (std::abs(base[k].t - perturbed[k].t) > 1e-12 * std::max(1.0, std::abs(base[k].t))) {
            throw DomainError("twin trajectories are not sampled at the same times");
        }
        if (!(base[k].grid() == perturbed[k].grid())) throw DomainError("twin trajectories use different grids");
    }

    try {
        double forcing = 0.0;
        double prev_rate = 0.0;
        for (std::size_t k = 0; k < base.size(); ++k) {
            TwinSample s;
            s.t = base[k].t;
            s.H_rel = relative_entropy(base[k], perturbed[k], coupling);
            std::vector<SpectralField> diff;
            for (std::size_t i = 0; i < coupling.n; ++i) {
                auto du = to_spectral(base[k].fields[i]);
                const auto dv = to_spectral(perturbed[k].fields[i]);
                for (std::size_t m = 0; m < du.size(); ++m) du[m] -= dv[m];
                diff.push_back(std::move(du));
            }
            s.dissipation_between = dissipation(diff, beta);
            double rate = 0.0;
            for (const auto& f : perturbed[k].fields) {
                const double norm = lq_norm_of_gradient_log(f, report.exponents.q2);
                s.grad_log_norms.push_back(norm);
                rate += std::pow(norm, report.exponents.q1);
            }
            if (k > 0) forcing += 0.5 * (rate + prev_rate) * (s.t - base[k - 1].t);
            prev_rate = rate;
            s.forcing_integral = forcing;
            report.samples.push_back(std::move(s));
        }
    } catch (const DomainError& e) {
        // Absolute-continuity failures end the comparison; the partial report says why.
        report.annotation = e.what();
        report.failed = true;
        return report;
    }

    const double h0 = report.samples.front().H_rel;
    double c = 0.0;
    for (std::size_t k = 1; k < report.samples.size(); ++k) {
        const auto& s = report.samples[k];
        if (s.H_rel <= h0 || h0 <= 0.0 || s.forcing_integral <= 0.0) continue;
        c = std::max(c, std::log(s.H_rel / h0) / s.forcing_integral);
    }
    report.fitted_c = c;
    for (std::size_t k = 0; k < report.samples.size(); ++k) {
        auto& s = report.samples[k];
        s.envelope = h0 * std::exp(c * s.forcing_integral);
        s.below_envelope = s.H_rel <= s.envelope * (1.0 + 1e-12) + 1e-300;
        report.all_below_envelope = report.all_below_envelope && s.below_envelope;
        if (k > 0 && s.H_rel > report.samples[k - 1].H_rel * (1.0 + 1e-12)) report.monotone = false;
    }
    return report;
}

}  // namespace fracross
