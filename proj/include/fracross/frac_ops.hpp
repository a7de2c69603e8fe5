#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "spectral.hpp"

namespace fracross {

/// Exponent of a spectral fractional power: s > 0 is (-Delta)^s,
/// s < 0 is (-Delta)^{-|s|}.
struct FracPower {
    double s = 0.0;
};

/// Log-spaced trapezoid rule in t on [t_min, t_max].
struct QuadratureSpec {
    int nodes = 512;
    double t_min = 1e-8;
    double t_max = 1e4;

    void validate() const
    {
        if (nodes < 16) throw ValidationError("quadrature needs at least 16 nodes");
        if (!(t_min > 0.0) || !(t_min < t_max)) throw ValidationError("quadrature requires 0 < t_min < t_max");
    }
};

/// Result of a semigroup quadrature. tail_bound bounds the part of the
/// integral that was neither integrated nor added analytically.
struct QuadratureResult {
    SpectralField value;
    double tail_bound = 0.0;
};

inline bool is_zero_mean(const SpectralField& u) { return u[0] == 0.0; }

inline SpectralField frac_apply(const SpectralField& u, FracPower p,
                                ModeZeroPolicy policy = ModeZeroPolicy::strict)
{
    if (p.s == 0.0) return u;
    // 0^s is 0 for s > 0 and infinite for s < 0; apply_multiplier handles both.
    return apply_multiplier(u, [s = p.s](double lambda) { return std::pow(lambda, s); }, policy);
}

/// e^{t Delta} u with Neumann boundary conditions.
inline SpectralField heat_apply(const SpectralField& u, double t)
{
    if (!(t >= 0.0)) throw DomainError("heat semigroup requires t >= 0");
    return apply_multiplier(u, [t](double lambda) { return std::exp(-lambda * t); });
}

namespace detail {

inline std::vector<double> log_nodes(const QuadratureSpec& q)
{
    std::vector<double> tau(q.nodes);
    const double a = std::log(q.t_min);
    const double b = std::log(q.t_max);
    for (int m = 0; m < q.nodes; ++m) tau[m] = a + (b - a) * m / (q.nodes - 1);
    return tau;
}

inline void axpy(double alpha, const SpectralField& x, SpectralField& y)
{
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

inline double smallest_positive_eigenvalue(const Grid& grid)
{
    double lambda1 = eigenvalue({1, 0}, grid);
    if (grid.dim() == 2) lambda1 = std::min(lambda1, eigenvalue({0, 1}, grid));
    return lambda1;
}

}  // namespace detail

/// (-Delta)^{-s} u = Gamma(s)^{-1} int_0^inf e^{t Delta} u t^{s-1} dt,
/// evaluated with heat-semigroup samples only. Substituting t = e^tau, the
/// trapezoid rule gets an Euler-Maclaurin endpoint correction; the head
/// [0, t_min] is added from the two-term expansion of e^{t Delta}.
inline QuadratureResult inv_power_by_quadrature(const SpectralField& u, double s, const QuadratureSpec& q = {})
{
    if (!(s > 0.0 && s < 1.0)) throw DomainError("inverse power quadrature needs s in (0,1)");
    if (!is_zero_mean(u)) throw DomainError("inverse power integral diverges on the mean; input must be zero-mean");
    q.validate();
    const auto tau = detail::log_nodes(q);
    const double h = tau[1] - tau[0];
    const SpectralField lap_u = laplacian(u);

    SpectralField acc(u.grid);
    // f(tau) = t^s e^{t Delta} u ;  f'(tau) = s f + t^{s+1} Delta e^{t Delta} u
    auto derivative = [&](double t) {
        const SpectralField heat = heat_apply(u, t);
        SpectralField d = heat;
        for (auto& c : d.coeffs) c *= s * std::pow(t, s);
        detail::axpy(std::pow(t, s + 1.0), laplacian(heat), d);
        return d;
    };
    for (int m = 0; m < q.nodes; ++m) {
        const double t = std::exp(tau[m]);
        const double w = (m == 0 || m == q.nodes - 1) ? 0.5 * h : h;
        detail::axpy(w * std::pow(t, s), heat_apply(u, t), acc);
    }
    detail::axpy(-h * h / 12.0, derivative(q.t_max), acc);
    detail::axpy(h * h / 12.0, derivative(q.t_min), acc);
    detail::axpy(std::pow(q.t_min, s) / s, u, acc);
    detail::axpy(std::pow(q.t_min, s + 1.0) / (s + 1.0), lap_u, acc);

    const double scale = 1.0 / std::tgamma(s);
    for (auto& c : acc.coeffs) c *= scale;
    const double lambda1 = detail::smallest_positive_eigenvalue(u.grid);
    const double tail = scale * l2_norm(u) * std::exp(-lambda1 * q.t_max) * std::pow(q.t_max, s - 1.0) / lambda1;
    return {std::move(acc), tail};
}

/// (-Delta)^s u = s/Gamma(1-s) int_0^inf (u - e^{t Delta} u) t^{-1-s} dt.
/// Head from the two-term expansion, tail of the u - mean part added
/// exactly; the remaining e^{t Delta} tail is bounded.
inline QuadratureResult power_by_quadrature(const SpectralField& u, double s, const QuadratureSpec& q = {})
{
    if (!(s > 0.0 && s < 1.0)) throw DomainError("power quadrature needs s in (0,1)");
    q.validate();
    const auto tau = detail::log_nodes(q);
    const double h = tau[1] - tau[0];
    const SpectralField centered = zero_mean(u);
    const SpectralField neg_lap = apply_multiplier(centered, [](double lambda) { return lambda; });
    const SpectralField neg_lap2 = apply_multiplier(neg_lap, [](double lambda) { return lambda; });

    auto integrand = [&](double t) {
        SpectralField f = centered;
        detail::axpy(-1.0, heat_apply(centered, t), f);
        for (auto& c : f.coeffs) c *= std::pow(t, -s);
        return f;
    };
    // f'(tau) = -s f + t^{1-s} (-Delta) e^{t Delta} u
    auto derivative = [&](double t) {
        SpectralField d = integrand(t);
        for (auto& c : d.coeffs) c *= -s;
        detail::axpy(std::pow(t, 1.0 - s), heat_apply(neg_lap, t), d);
        return d;
    };

    SpectralField acc(u.grid);
    for (int m = 0; m < q.nodes; ++m) {
        const double t = std::exp(tau[m]);
        const double w = (m == 0 || m == q.nodes - 1) ? 0.5 * h : h;
        detail::axpy(w, integrand(t), acc);
    }
    detail::axpy(-h * h / 12.0, derivative(q.t_max), acc);
    detail::axpy(h * h / 12.0, derivative(q.t_min), acc);
    detail::axpy(std::pow(q.t_min, 1.0 - s) / (1.0 - s), neg_lap, acc);
    detail::axpy(-std::pow(q.t_min, 2.0 - s) / (2.0 * (2.0 - s)), neg_lap2, acc);
    detail::axpy(std::pow(q.t_max, -s) / s, centered, acc);

    const double scale = s / std::tgamma(1.0 - s);
    for (auto& c : acc.coeffs) c *= scale;
    const double lambda1 = detail::smallest_positive_eigenvalue(u.grid);
    const double tail = scale * l2_norm(centered) * std::exp(-lambda1 * q.t_max) * std::pow(q.t_max, -1.0 - s) / lambda1;
    return {std::move(acc), tail};
}

/// Normalized cutoff profile
///   g(s) = alpha/Gamma(1-alpha) int_s^inf (1 - e^{-t}) t^{-1-alpha} dt
///        = s^{-alpha}(1 - e^{-s})/Gamma(1-alpha) + Q(1-alpha, s),
/// with Q the regularized upper incomplete gamma function. g(0) = 1 and g
/// decreases to 0. raw = true drops the factor alpha (g(0) = 1/alpha).
inline double g_alpha(double sarg, double alpha, bool raw = false)
{
    if (!(sarg >= 0.0)) throw DomainError("g_alpha requires a nonnegative argument");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("g_alpha requires alpha in (0,1)");
    double value = boost::math::gamma_q(1.0 - alpha, sarg);
    if (sarg > 0.0) value += std::pow(sarg, -alpha) * (-std::expm1(-sarg)) / std::tgamma(1.0 - alpha);
    return raw ? value / alpha : value;
}

/// Heat-semigroup operator with the singular part t < eps removed.
struct RegOp {
    double alpha = 0.5;
    double eps = 0.0;
    bool raw_normalization = false;

    void validate() const
    {
        if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("RegOp alpha must lie in (0,1)");
        if (!(eps >= 0.0)) throw ValidationError("RegOp eps must be >= 0");
    }

    /// lambda^alpha g(eps lambda); zero at lambda = 0.
    double multiplier(double lambda) const
    {
        if (lambda == 0.0) return 0.0;
        return std::pow(lambda, alpha) * g_alpha(eps * lambda, alpha, raw_normalization);
    }
};

/// Multiplier table of op over the grid's eigenvalues.
inline std::vector<double> multiplier_table(const Grid& grid, const RegOp& op)
{
    op.validate();
    auto table = eigenvalue_table(grid);
    for (auto& v : table) v = op.multiplier(v);
    return table;
}

inline SpectralField reg_apply(const SpectralField& u, const RegOp& op)
{
    return apply_table(u, multiplier_table(u.grid, op));
}

/// sum_ij b_ij <f_i, L f_j>, evaluated by Parseval in spectral space.
inline double positivity_form(std::span<const SpectralField> fields, std::span<const double> b, const RegOp& op)
{
    const std::size_t n = fields.size();
    if (b.size() != n * n) throw ValidationError("matrix size does not match number of fields");
    double bmax = 0.0;
    for (double v : b) bmax = std::max(bmax, std::abs(v));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(b[i * n + j] - b[j * n + i]) > 1e-12 * bmax) {
                throw DomainError("positivity form requires a symmetric matrix");
            }
        }
    }
    if (n == 0) return 0.0;
    const auto table = multiplier_table(fields[0].grid, op);
    std::vector<SpectralField> applied;
    applied.reserve(n);
    for (const auto& f : fields) {
        if (!(f.grid == fields[0].grid)) throw ValidationError("all fields must share one grid");
        applied.push_back(apply_table(f, table));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) total += b[i * n + j] * inner(fields[i], applied[j]);
    }
    return total;
}

/// || (-Delta)^{-1} L_eps f - (-Delta)^{-1} L_0 f ||_{L2} for zero-mean f.
/// With the default normalization L_0 = (-Delta)^alpha.
inline double approx_error(const SpectralField& f, double alpha, double eps, bool raw_normalization = false)
{
    if (!is_zero_mean(f)) throw DomainError("approximation error is defined on zero-mean fields");
    if (!(eps >= 0.0)) throw DomainError("eps must be >= 0");
    const double limit = g_alpha(0.0, alpha, raw_normalization);
    double sum = 0.0;
    for (std::size_t idx = 1; idx < f.size(); ++idx) {
        const double lambda = eigenvalue(f.grid.unflat(idx), f.grid);
        const double d = std::pow(lambda, alpha - 1.0) * (g_alpha(eps * lambda, alpha, raw_normalization) - limit);
        sum += d * d * f[idx] * f[idx];
    }
    return std::sqrt(sum);
}

/// Potential multiplier of the transport term,
/// lambda^{-1} (lambda^a g_a(eps lambda))^2 with a = (beta+1)/4, which is
/// lambda^{(beta-1)/2} when eps = 0. Mode 0 maps to 0.
inline std::vector<double> transport_multiplier_table(const Grid& grid, double beta, double eps,
                                                      bool raw_normalization = false)
{
    if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("beta must lie in (0,1)");
    const double alpha = 0.25 * (beta + 1.0);
    auto table = eigenvalue_table(grid);
    for (auto& lambda : table) {
        if (lambda == 0.0) continue;
        const double g = eps > 0.0 || raw_normalization ? g_alpha(eps * lambda, alpha, raw_normalization) : 1.0;
        lambda = std::pow(lambda, 0.5 * (beta - 1.0)) * g * g;
    }
    return table;
}

}  // namespace fracross
