#include <catch_amalgamated.hpp>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <fracross/config.hpp>
#include <fracross/dynamics.hpp>
#include <fracross/frac_ops.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace fracross;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;

// Adaptive quadrature of alpha/Gamma(1-alpha) int_s^inf (1-e^{-t}) t^{-1-alpha} dt,
// split at t = 1 so the t^{-alpha} endpoint behaviour is isolated.
double g_oracle(double s, double alpha)
{
    auto f = [alpha](double t) {
        const double ratio = t < 1e-300 ? 1.0 : -std::expm1(-t) / t;
        return ratio * std::pow(t, -alpha);
    };
    double total = 0.0;
    if (s < 1.0) {
        boost::math::quadrature::tanh_sinh<double> ts;
        total += ts.integrate(f, s, 1.0);
    }
    boost::math::quadrature::exp_sinh<double> es;
    total += es.integrate(f, std::max(s, 1.0), std::numeric_limits<double>::infinity());
    return alpha / std::tgamma(1.0 - alpha) * total;
}

double rel_l2(const SpectralField& a, const SpectralField& b)
{
    double num = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) num += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(num) / l2_norm(b);
}

SpectralField random_zero_mean(const Grid& g, std::mt19937_64& rng, int band = 8)
{
    return random_band_limited(g, band, rng);
}

}  // namespace

TEST_CASE("frac_apply")
{
    const Grid g = Grid::interval(pi, 32);
    const auto psi1 = eigenmode(g, {1, 0});
    const auto psi2 = eigenmode(g, {2, 0});
    CHECK_THAT(frac_apply(psi1, FracPower{-0.35}).at({1, 0}), WithinAbs(1.0, 1e-15));
    CHECK_THAT(frac_apply(psi2, FracPower{0.5}).at({2, 0}), WithinAbs(2.0, 1e-14));

    std::mt19937_64 rng(1);
    const auto u = random_zero_mean(Grid::interval(pi, 128), rng, 127);
    for (double s : {0.25, 0.5, 0.9}) {
        const auto back = frac_apply(frac_apply(u, FracPower{s}), FracPower{-s});
        const auto diff = to_physical(back);
        const auto orig = to_physical(u);
        double sup = 0.0;
        for (std::size_t j = 0; j < diff.size(); ++j) sup = std::max(sup, std::abs(diff[j] - orig[j]));
        CHECK(sup <= 1e-11);
    }

    SpectralField c(g);
    c[0] = 1.0;
    CHECK_THROWS_AS(frac_apply(c, FracPower{-0.5}), DomainError);
    CHECK(frac_apply(c, FracPower{-0.5}, ModeZeroPolicy::pass_through)[0] == 1.0);
    CHECK(frac_apply(c, FracPower{0.5})[0] == 0.0);
}

TEST_CASE("heat semigroup")
{
    const Grid g = Grid::interval(pi, 32);
    std::mt19937_64 rng(2);
    auto u = random_zero_mean(g, rng, 31);
    u[0] = 2.0;
    CHECK(heat_apply(u, 0.0).coeffs == u.coeffs);
    CHECK_THAT(heat_apply(eigenmode(g, {1, 0}), std::log(2.0)).at({1, 0}), WithinAbs(0.5, 1e-15));
    CHECK_THROWS_AS(heat_apply(u, -1.0), DomainError);

    const auto a = heat_apply(heat_apply(u, 0.3), 0.45);
    const auto b = heat_apply(u, 0.75);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK_THAT(a[k], WithinAbs(b[k], 1e-15));
    for (double t : {0.0, 0.1, 1.0, 10.0}) {
        CHECK(heat_apply(u, t)[0] == u[0]);
        const auto z = zero_mean(u);
        CHECK(l2_norm(heat_apply(z, t)) <= std::exp(-t) * l2_norm(z) * (1.0 + 1e-14));
    }
}

TEST_CASE("inverse power by quadrature")
{
    const Grid g = Grid::interval(pi, 256);
    const auto r1 = inv_power_by_quadrature(eigenmode(g, {1, 0}), 0.5);
    CHECK_THAT(r1.value.at({1, 0}), WithinAbs(1.0, 1e-6));
    const auto r2 = inv_power_by_quadrature(eigenmode(g, {2, 0}), 0.5);
    CHECK_THAT(r2.value.at({2, 0}), WithinAbs(0.5, 1e-6));
    CHECK(r1.tail_bound >= 0.0);

    SpectralField c(g);
    c[0] = 1.0;
    CHECK_THROWS_AS(inv_power_by_quadrature(c, 0.5), DomainError);

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const auto u = random_zero_mean(g, rng);
        CHECK(rel_l2(inv_power_by_quadrature(u, 0.25).value, frac_apply(u, FracPower{-0.25})) <= 1e-6);
    }

    // Error shrinks as the node count grows.
    const auto u = random_zero_mean(g, rng);
    double prev = INFINITY;
    for (int nodes : {32, 64, 128, 512}) {
        QuadratureSpec q;
        q.nodes = nodes;
        const double e = rel_l2(inv_power_by_quadrature(u, 0.5, q).value, frac_apply(u, FracPower{-0.5}));
        CHECK(e < prev);
        prev = e;
    }
}

TEST_CASE("positive power by quadrature")
{
    const Grid g = Grid::interval(pi, 256);
    SpectralField c(g);
    c[0] = 3.0;
    CHECK(l2_norm(power_by_quadrature(c, 0.5).value) == 0.0);
    for (double s : {0.2, 0.5, 0.8}) {
        CHECK_THAT(power_by_quadrature(eigenmode(g, {1, 0}), s).value.at({1, 0}), WithinAbs(1.0, 1e-6));
    }
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        auto u = random_zero_mean(g, rng);
        u[0] = 1.0;
        CHECK(rel_l2(power_by_quadrature(u, 0.75).value, frac_apply(u, FracPower{0.75})) <= 1e-6);
    }
}

TEST_CASE("quadrature spec validation")
{
    const Grid g = Grid::interval(pi, 16);
    const auto u = eigenmode(g, {1, 0});
    QuadratureSpec q;
    q.nodes = 8;
    CHECK_THROWS_AS(inv_power_by_quadrature(u, 0.5, q), ValidationError);
    q = {};
    q.t_min = 1.0;
    q.t_max = 0.5;
    CHECK_THROWS_AS(power_by_quadrature(u, 0.5, q), ValidationError);
}

TEST_CASE("cutoff profile g_alpha")
{
    for (double alpha : {0.25, 0.375, 0.5}) {
        CHECK_THAT(g_alpha(0.0, alpha), WithinAbs(1.0, 1e-14));
        CHECK_THAT(g_oracle(0.0, alpha), WithinAbs(1.0, 1e-8));
        CHECK_THAT(g_alpha(0.0, alpha, true), WithinRel(1.0 / alpha, 1e-14));
        double prev = 1.0;
        for (double s : {1e-6, 0.01, 0.3, 1.0, 7.0, 100.0}) {
            const double g = g_alpha(s, alpha);
            CHECK_THAT(g, WithinAbs(g_oracle(s, alpha), 1e-9));
            CHECK(g >= 0.0);
            CHECK(g <= 1.0);
            CHECK(g < prev);
            prev = g;
        }
    }
    CHECK(g_alpha(1e4, 0.5) <= 1e-2);
    // Tail bound: g(s) <= s^{-alpha}/Gamma(1-alpha).
    CHECK(g_alpha(1e4, 0.5) <= std::pow(1e4, -0.5) / std::tgamma(0.5));
    CHECK_THROWS_AS(g_alpha(-1.0, 0.5), DomainError);
}

TEST_CASE("regularized operator")
{
    const Grid g = Grid::interval(pi, 64);
    SpectralField c(g);
    c[0] = 5.0;
    RegOp op{0.375, 0.01};
    CHECK(l2_norm(reg_apply(c, op)) == 0.0);
    CHECK_THROWS_AS(reg_apply(c, RegOp{1.5, 0.1}), ValidationError);
    CHECK_THROWS_AS(reg_apply(c, RegOp{0.5, -0.1}), ValidationError);

    for (double lambda : eigenvalue_table(g)) {
        const double m = op.multiplier(lambda);
        CHECK(m >= 0.0);
        CHECK(m <= std::pow(lambda, op.alpha) * (1.0 + 1e-15));
    }

    std::mt19937_64 rng(6);
    auto u = random_zero_mean(g, rng);
    u[0] = 1.0;
    const auto target = frac_apply(u, FracPower{op.alpha});
    double prev = INFINITY;
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
        const double d = rel_l2(reg_apply(u, RegOp{op.alpha, eps}), target);
        CHECK(d < prev);
        prev = d;
    }
    CHECK(prev < 1e-2);
    CHECK(rel_l2(reg_apply(u, RegOp{op.alpha, 0.0}), target) <= 1e-15);

    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_zero_mean(g, rng, 63);
        const auto h = random_zero_mean(g, rng, 63);
        CHECK(std::abs(inner(f, reg_apply(h, op)) - inner(h, reg_apply(f, op))) <= 1e-10);
    }
}

TEST_CASE("positivity form")
{
    const Grid g = Grid::interval(pi, 64);
    const RegOp op{0.375, 0.1};
    std::vector<SpectralField> zeros(3, SpectralField(g));
    std::vector<double> b{2, 1, 0, 1, 2, 1, 0, 1, 2};
    CHECK(positivity_form(zeros, b, op) == 0.0);

    std::vector<SpectralField> one{eigenmode(g, {1, 0})};
    std::vector<double> b1{1.0};
    CHECK_THAT(positivity_form(one, b1, op), WithinRel(g_alpha(0.1, 0.375), 1e-14));

    std::vector<double> bad{2, 1, 0, 1.5, 2, 1, 0, 1, 2};
    std::vector<SpectralField> three(3, eigenmode(g, {1, 0}));
    CHECK_THROWS_AS(positivity_form(three, bad, op), DomainError);
    std::vector<double> wrong_size{1.0, 0.0};
    CHECK_THROWS_AS(positivity_form(three, wrong_size, op), ValidationError);

    // Hand evaluation of the two-species form with single-mode fields.
    std::vector<SpectralField> two{eigenmode(g, {1, 0}, 2.0), eigenmode(g, {1, 0}, -1.0)};
    std::vector<double> b2{3.0, 1.0, 1.0, 2.0};
    const double m1 = op.multiplier(1.0);
    CHECK_THAT(positivity_form(two, b2, op), WithinRel((3.0 * 4.0 - 2.0 * 2.0 + 2.0 * 1.0) * m1, 1e-14));

    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal;
    double worst = INFINITY;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> r(9), spd(9, 0.0);
        for (auto& x : r) x = normal(rng);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                for (int k = 0; k < 3; ++k) spd[i * 3 + j] += r[i * 3 + k] * r[j * 3 + k];
            }
        }
        std::vector<SpectralField> f;
        double scale = 0.0;
        for (int i = 0; i < 3; ++i) {
            f.push_back(random_zero_mean(g, rng, 63));
            scale += l2_norm_sq(f.back());
        }
        worst = std::min(worst, positivity_form(f, spd, op) / scale);
    }
    CHECK(worst >= -1e-12);
}

TEST_CASE("approximation error")
{
    const Grid g = Grid::interval(pi, 256);
    const auto psi1 = eigenmode(g, {1, 0}, 2.0);
    CHECK(approx_error(psi1, 0.5, 0.0) == 0.0);
    CHECK_THAT(approx_error(psi1, 0.5, 0.01), WithinRel(std::abs(g_alpha(0.01, 0.5) - 1.0) * 2.0, 1e-14));

    std::mt19937_64 rng(13);
    const auto f = random_zero_mean(g, rng);
    double prev = 0.0;
    for (double eps : {1e-5, 1e-4, 1e-3, 1e-2, 1e-1}) {
        const double e = approx_error(f, 0.5, eps);
        CHECK(e >= prev);
        prev = e;
    }

    std::vector<double> eps(8), err;
    for (int k = 0; k < 8; ++k) eps[k] = std::pow(10.0, -4.0 + 3.0 * k / 7.0);
    for (double alpha : {0.25, 0.375, 0.5}) {
        err.clear();
        for (double e : eps) err.push_back(approx_error(f, alpha, e));
        const double slope = detail::loglog_slope(eps, err);
        CHECK(slope >= 1.0 - alpha - 0.1);
        CHECK(slope <= 1.0 - alpha + 0.1);
        // The raw constant rescales the error but keeps the exponent.
        err.clear();
        for (double e : eps) err.push_back(approx_error(f, alpha, e, true));
        CHECK_THAT(detail::loglog_slope(eps, err), WithinAbs(slope, 1e-10));
    }

    SpectralField c(g);
    c[0] = 1.0;
    CHECK_THROWS_AS(approx_error(c, 0.5, 0.1), DomainError);
}

TEST_CASE("transport multiplier")
{
    const Grid g = Grid::interval(pi, 32);
    const double beta = 0.5;
    const auto plain = transport_multiplier_table(g, beta, 0.0);
    const auto reg = transport_multiplier_table(g, beta, 0.05);
    const auto lambdas = eigenvalue_table(g);
    CHECK(plain[0] == 0.0);
    CHECK(reg[0] == 0.0);
    const double alpha = 0.25 * (beta + 1.0);
    for (std::size_t k = 1; k < g.size(); ++k) {
        const double l = lambdas[k];
        CHECK_THAT(plain[k], WithinRel(std::pow(l, -0.25), 1e-14));
        const double composed = std::pow(std::pow(l, alpha) * g_alpha(0.05 * l, alpha), 2) / l;
        CHECK_THAT(reg[k], WithinRel(composed, 1e-13));
    }
    CHECK_THROWS_AS(transport_multiplier_table(g, 1.0, 0.0), ValidationError);
}
