#pragma once

// Property suite for the fractional operators, reported as JSON.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "config.hpp"
#include "diagnostics.hpp"
#include "dynamics.hpp"
#include "frac_ops.hpp"
#include "spectral.hpp"

namespace fracross {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    std::string comparison;  ///< "<=" or ">=" or "in"
    double upper = 0.0;      ///< for "in"
    bool pass = false;
    bool expected_fail = false;
    std::string note;
    nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    /// All checks pass, expected failures excluded.
    bool ok() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass || c.expected_fail; });
    }

    const CheckResult& find(const std::string& name) const
    {
        for (const auto& c : checks) {
            if (c.name == name) return c;
        }
        throw std::out_of_range("no check named " + name);
    }
};

namespace detail {

inline CheckResult at_most(std::string name, double measured, double threshold)
{
    CheckResult c;
    c.name = std::move(name);
    c.measured = measured;
    c.threshold = threshold;
    c.comparison = "<=";
    c.pass = measured <= threshold;
    return c;
}

inline CheckResult at_least(std::string name, double measured, double threshold)
{
    CheckResult c = at_most(std::move(name), measured, threshold);
    c.comparison = ">=";
    c.pass = measured >= threshold;
    return c;
}

inline CheckResult within(std::string name, double measured, double lo, double hi)
{
    CheckResult c = at_most(std::move(name), measured, lo);
    c.comparison = "in";
    c.upper = hi;
    c.pass = measured >= lo && measured <= hi;
    return c;
}

inline std::string fmt_param(double v)
{
    return format_double(v);
}

inline SpectralField unit_random(const Grid& grid, int band_limit, std::mt19937_64& rng)
{
    auto u = random_band_limited(grid, band_limit, rng);
    const double n = l2_norm(u);
    for (auto& c : u.coeffs) c /= n;
    return u;
}

inline double relative_l2(const SpectralField& a, const SpectralField& b)
{
    double num = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) num += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(num) / l2_norm(b);
}

}  // namespace detail

/// Oracle equivalence of quadrature and multiplier forms of (-Delta)^{+-s}.
inline std::vector<CheckResult> check_oracles(const Grid& grid, double beta, const VerifySpec& spec,
                                              std::mt19937_64& rng)
{
    std::vector<CheckResult> out;
    std::vector<SpectralField> fields;
    for (int k = 0; k < spec.oracle_trials; ++k) fields.push_back(detail::unit_random(grid, spec.band_limit, rng));
    std::vector<double> powers{0.25, 0.5 * (1.0 - beta), 0.75};
    std::sort(powers.begin(), powers.end());
    powers.erase(std::unique(powers.begin(), powers.end()), powers.end());
    for (double s : powers) {
        double worst_inv = 0.0;
        double worst_pos = 0.0;
        double tail_inv = 0.0;
        double tail_pos = 0.0;
        for (const auto& u : fields) {
            const auto qi = inv_power_by_quadrature(u, s, spec.quadrature);
            worst_inv = std::max(worst_inv, detail::relative_l2(qi.value, frac_apply(u, FracPower{-s})));
            tail_inv = std::max(tail_inv, qi.tail_bound);
            const auto qp = power_by_quadrature(u, s, spec.quadrature);
            worst_pos = std::max(worst_pos, detail::relative_l2(qp.value, frac_apply(u, FracPower{s})));
            tail_pos = std::max(tail_pos, qp.tail_bound);
        }
        auto ci = detail::at_most("oracle_inverse_s=" + detail::fmt_param(s), worst_inv, 1e-6);
        ci.detail["trials"] = fields.size();
        ci.detail["tail_bound"] = tail_inv;
        out.push_back(ci);
        auto cp = detail::at_most("oracle_positive_s=" + detail::fmt_param(s), worst_pos, 1e-6);
        cp.detail["trials"] = fields.size();
        cp.detail["tail_bound"] = tail_pos;
        out.push_back(cp);
    }
    return out;
}

/// Pointwise bounds of the cutoff profile. With the literal (raw) constant
/// the value at zero is 1/alpha, so this check is expected to fail.
inline CheckResult check_g_alpha(bool raw_normalization)
{
    double worst = 0.0;
    bool monotone = true;
    for (double alpha : {0.25, 0.375, 0.5}) {
        worst = std::max(worst, std::abs(g_alpha(0.0, alpha, raw_normalization) - 1.0));
        double prev = g_alpha(0.0, alpha, raw_normalization);
        for (double s : {0.01, 1.0, 100.0}) {
            const double g = g_alpha(s, alpha, raw_normalization);
            worst = std::max(worst, std::max(g - 1.0, -g));
            monotone = monotone && g < prev;
            prev = g;
        }
    }
    auto c = detail::at_most("g_alpha_bounds", worst, 1e-12);
    c.detail["monotone"] = monotone;
    c.pass = c.pass && monotone;
    if (raw_normalization) {
        c.expected_fail = !c.pass;
        c.note = "raw normalization: g_alpha(0) = 1/alpha exceeds the bound 1";
    }
    return c;
}

inline std::vector<CheckResult> check_positivity(const Grid& grid, double beta, const VerifySpec& spec,
                                                 bool raw_normalization, std::mt19937_64& rng)
{
    const double alpha = 0.25 * (beta + 1.0);
    const std::size_t n = 3;
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::vector<double> eps_cycle{0.0, 1e-3, 1e-2, 1e-1};
    double worst_form = INFINITY;
    double worst_adj = 0.0;
    for (int trial = 0; trial < spec.positivity_trials; ++trial) {
        RegOp op{alpha, eps_cycle[trial % eps_cycle.size()], raw_normalization};
        // b = R R^T + 1e-3 I
        std::vector<double> r(n * n);
        for (auto& x : r) x = normal(rng);
        std::vector<double> b(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < n; ++k) b[i * n + j] += r[i * n + k] * r[j * n + k];
            }
            b[i * n + i] += 1e-3;
        }
        std::vector<SpectralField> fields;
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            fields.push_back(random_band_limited(grid, spec.band_limit, rng));
            scale += l2_norm_sq(fields.back());
        }
        const auto table = multiplier_table(grid, op);
        const double mmax = *std::max_element(table.begin(), table.end());
        const double bmax = *std::max_element(b.begin(), b.end());
        const double form = positivity_form(fields, b, op);
        worst_form = std::min(worst_form, form / (bmax * mmax * scale));

        const auto f = detail::unit_random(grid, spec.band_limit, rng);
        const auto g = detail::unit_random(grid, spec.band_limit, rng);
        worst_adj = std::max(worst_adj, std::abs(inner(f, reg_apply(g, op)) - inner(g, reg_apply(f, op))));
    }
    auto cf = detail::at_least("positivity_form_min", worst_form, -1e-12);
    cf.detail["trials"] = spec.positivity_trials;
    cf.detail["species"] = n;
    auto ca = detail::at_most("self_adjointness_defect", worst_adj, 1e-10);
    ca.detail["trials"] = spec.positivity_trials;
    return {cf, ca};
}

inline std::vector<CheckResult> check_error_slopes(const Grid& grid, const VerifySpec& spec, bool raw_normalization,
                                                   std::mt19937_64& rng)
{
    std::vector<CheckResult> out;
    std::vector<double> eps(8);
    for (int k = 0; k < 8; ++k) eps[k] = std::pow(10.0, -4.0 + 3.0 * k / 7.0);
    const auto f = detail::unit_random(grid, spec.band_limit, rng);
    for (double alpha : {0.25, 0.375, 0.5}) {
        std::vector<double> err;
        for (double e : eps) err.push_back(approx_error(f, alpha, e, raw_normalization));
        const double slope = detail::loglog_slope(eps, err);
        auto c = detail::within("approx_error_slope_alpha=" + detail::fmt_param(alpha), slope, 1.0 - alpha - 0.1,
                                1.0 - alpha + 0.1);
        c.detail["eps"] = eps;
        c.detail["error"] = err;
        c.detail["expected"] = 1.0 - alpha;
        out.push_back(c);
    }
    return out;
}

inline std::vector<CheckResult> check_poincare(const Grid& grid, const VerifySpec& spec, std::mt19937_64& rng)
{
    std::vector<CheckResult> out;
    const double lambda1 = detail::smallest_positive_eigenvalue(grid);
    ModeIndex first{1, 0};
    if (grid.dim() == 2 && eigenvalue({0, 1}, grid) < eigenvalue({1, 0}, grid)) first = {0, 1};
    const auto psi1 = eigenmode(grid, first);
    for (double r : {0.25, 0.5, 0.75}) {
        const double bound = std::pow(lambda1, r);
        double worst = INFINITY;
        for (int k = 0; k < spec.poincare_trials; ++k) {
            auto u = random_band_limited(grid, spec.band_limit, rng);
            worst = std::min(worst, poincare_ratio(u, r) - bound);
        }
        auto c = detail::at_least("poincare_margin_r=" + detail::fmt_param(r), worst, -1e-10);
        c.detail["trials"] = spec.poincare_trials;
        c.detail["lambda1_pow_r"] = bound;
        out.push_back(c);
        out.push_back(detail::at_most("poincare_equality_psi1_r=" + detail::fmt_param(r),
                                      std::abs(poincare_ratio(psi1, r) - bound), 1e-12));
    }
    return out;
}

inline VerifyReport verify_ops(const SimConfig& cfg)
{
    std::mt19937_64 rng(cfg.seed);
    VerifyReport report;
    auto append = [&](std::vector<CheckResult> v) {
        for (auto& c : v) report.checks.push_back(std::move(c));
    };
    append(check_oracles(cfg.grid, cfg.params.beta, cfg.verify, rng));
    report.checks.push_back(check_g_alpha(cfg.raw_normalization));
    append(check_positivity(cfg.grid, cfg.params.beta, cfg.verify, cfg.raw_normalization, rng));
    append(check_error_slopes(cfg.grid, cfg.verify, cfg.raw_normalization, rng));
    append(check_poincare(cfg.grid, cfg.verify, rng));
    return report;
}

inline nlohmann::ordered_json to_json(const VerifyReport& r)
{
    nlohmann::ordered_json j;
    j["pass"] = r.ok();
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : r.checks) {
        nlohmann::ordered_json e;
        e["name"] = c.name;
        e["measured"] = c.measured;
        e["comparison"] = c.comparison;
        if (c.comparison == "in") {
            e["threshold"] = {c.threshold, c.upper};
        } else {
            e["threshold"] = c.threshold;
        }
        e["pass"] = c.pass;
        if (c.expected_fail) e["expected_fail"] = true;
        if (!c.note.empty()) e["note"] = c.note;
        if (!c.detail.empty()) e["detail"] = c.detail;
        j["checks"].push_back(e);
    }
    return j;
}

}  // namespace fracross
