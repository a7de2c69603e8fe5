#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "coupling.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "spectral.hpp"
#include "state.hpp"

namespace fracross {

using json = nlohmann::json;

/// Initial density of one species.
struct ProfileSpec {
    std::string kind = "constant";  ///< constant | gaussian-bump | two-level | modes | random | file
    double value = 1.0;             ///< constant
    std::vector<double> center;     ///< gaussian-bump
    double width = 0.1;
    double amplitude = 1.0;
    double baseline = 1.0;          ///< gaussian-bump, modes, random
    double low = 0.0;               ///< two-level
    double high = 1.0;
    double split = 0.5;             ///< fraction of axis 0 holding `low`
    std::vector<std::pair<ModeIndex, double>> modes;
    int band_limit = 8;             ///< random
    std::string path;               ///< file
    int field_index = 0;
};

/// Mass-preserving perturbation for twin runs.
struct PerturbationSpec {
    ModeIndex mode{2, 0};
    double amplitude = 1e-3;
};

struct VerifySpec {
    int oracle_trials = 20;
    int positivity_trials = 100;
    int poincare_trials = 100;
    int band_limit = 8;
    QuadratureSpec quadrature;
};

struct SimConfig {
    Grid grid;
    CouplingSpec coupling;
    RegParams params;
    std::vector<ProfileSpec> initial;
    double t_final = 1.0;
    double cfl = 0.4;
    double dt_max = 1e-2;
    int out_every = 10;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    bool raw_normalization = false;
    bool dealias = true;
    bool snapshots = false;
    PerturbationSpec perturbation;
    std::optional<double> q2;
    VerifySpec verify;
    /// Canonical text of the parsed document, used for hashing.
    std::string canonical;

    RunOptions run_options() const
    {
        RunOptions o;
        o.t_final = t_final;
        o.cfl = cfl;
        o.dt_max = dt_max;
        o.out_every = out_every;
        return o;
    }

    ModelOptions model_options() const
    {
        ModelOptions o;
        o.dealias = dealias;
        o.raw_normalization = raw_normalization;
        return o;
    }
};

namespace detail {

inline ValidationError field_error(const std::string& field, const std::string& what)
{
    return ValidationError("config field '" + field + "': " + what);
}

template <class T>
T get_or(const json& j, const std::string& key, const T& fallback, const std::string& ctx)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw field_error(ctx + key, e.what());
    }
}

inline double number_or_inf(const json& j, const std::string& ctx)
{
    if (j.is_null()) return std::numeric_limits<double>::infinity();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "infinity" || s == "Infinity") return std::numeric_limits<double>::infinity();
        throw field_error(ctx, "expected a number or \"inf\"");
    }
    if (!j.is_number()) throw field_error(ctx, "expected a number or \"inf\"");
    return j.get<double>();
}

inline ModeIndex parse_mode(const json& j, const std::string& ctx)
{
    ModeIndex k{0, 0};
    if (j.is_number_integer()) {
        k[0] = j.get<int>();
        return k;
    }
    if (!j.is_array() || j.empty() || j.size() > 2) throw field_error(ctx, "mode must be an integer or [k0, k1]");
    for (std::size_t a = 0; a < j.size(); ++a) k[a] = j[a].get<int>();
    return k;
}

inline ProfileSpec parse_profile(const json& j, const std::string& ctx)
{
    ProfileSpec p;
    p.kind = get_or<std::string>(j, "profile", "constant", ctx);
    p.value = get_or<double>(j, "value", p.value, ctx);
    p.width = get_or<double>(j, "width", p.width, ctx);
    p.amplitude = get_or<double>(j, "amplitude", p.amplitude, ctx);
    p.baseline = get_or<double>(j, "baseline", p.baseline, ctx);
    p.low = get_or<double>(j, "low", p.low, ctx);
    p.high = get_or<double>(j, "high", p.high, ctx);
    p.split = get_or<double>(j, "split", p.split, ctx);
    p.band_limit = get_or<int>(j, "band_limit", p.band_limit, ctx);
    p.path = get_or<std::string>(j, "path", "", ctx);
    p.field_index = get_or<int>(j, "field", 0, ctx);
    if (j.contains("center")) {
        const auto& c = j.at("center");
        p.center = c.is_array() ? c.get<std::vector<double>>() : std::vector<double>{c.get<double>()};
    }
    if (j.contains("modes")) {
        for (const auto& m : j.at("modes")) {
            p.modes.emplace_back(parse_mode(m.at("k"), ctx + "modes.k"), m.at("amplitude").get<double>());
        }
    }
    static const std::vector<std::string> kinds{"constant", "gaussian-bump", "two-level", "modes", "random", "file"};
    if (std::find(kinds.begin(), kinds.end(), p.kind) == kinds.end()) {
        throw field_error(ctx + "profile", "unknown profile '" + p.kind + "'");
    }
    if (p.kind == "gaussian-bump" && !(p.width > 0.0)) throw field_error(ctx + "width", "must be positive");
    if (p.kind == "file" && p.path.empty()) throw field_error(ctx + "path", "file profile needs a path");
    return p;
}

}  // namespace detail

inline SimConfig parse_config(const json& doc)
{
    SimConfig cfg;
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");
    cfg.canonical = doc.dump();

    const json grid = doc.value("grid", json::object());
    const int dim = detail::get_or<int>(grid, "dim", 1, "grid.");
    auto extent = detail::get_or<std::vector<double>>(grid, "extent", {std::numbers::pi}, "grid.");
    auto resolution = detail::get_or<std::vector<int>>(grid, "resolution", {64}, "grid.");
    if (static_cast<int>(extent.size()) != dim) throw detail::field_error("grid.extent", "needs one entry per axis");
    if (static_cast<int>(resolution.size()) != dim) {
        throw detail::field_error("grid.resolution", "needs one entry per axis");
    }
    try {
        cfg.grid = Grid(dim, {extent[0], dim == 2 ? extent[1] : 1.0}, {resolution[0], dim == 2 ? resolution[1] : 1});
    } catch (const ValidationError& e) {
        throw detail::field_error("grid", e.what());
    }

    cfg.params.beta = detail::get_or<double>(doc, "beta", 0.5, "");
    if (!(cfg.params.beta > 0.0 && cfg.params.beta < 1.0)) throw detail::field_error("beta", "must lie in (0,1)");

    const json coupling = doc.value("coupling", json::object());
    const auto a = detail::get_or<std::vector<std::vector<double>>>(coupling, "a", {{1.0}}, "coupling.");
    const auto pi = detail::get_or<std::vector<double>>(coupling, "pi", std::vector<double>(a.size(), 1.0), "coupling.");
    try {
        cfg.coupling = validate_coupling(a, pi);
    } catch (const ValidationError& e) {
        throw detail::field_error("coupling", e.what());
    }

    const json reg = doc.value("regularization", json::object());
    cfg.params.kappa = detail::get_or<double>(reg, "kappa", 0.0, "regularization.");
    cfg.params.eps = detail::get_or<double>(reg, "eps", 0.0, "regularization.");
    cfg.params.rho = detail::get_or<double>(reg, "rho", 0.0, "regularization.");
    if (reg.contains("M")) cfg.params.M = detail::number_or_inf(reg.at("M"), "regularization.M");
    try {
        cfg.params.validate();
    } catch (const ValidationError& e) {
        throw detail::field_error("regularization", e.what());
    }

    if (doc.contains("initial")) {
        const auto& init = doc.at("initial");
        if (!init.is_array()) throw detail::field_error("initial", "must be an array with one profile per species");
        for (std::size_t i = 0; i < init.size(); ++i) {
            cfg.initial.push_back(detail::parse_profile(init[i], "initial[" + std::to_string(i) + "]."));
        }
    } else {
        cfg.initial.assign(cfg.coupling.n, ProfileSpec{});
    }
    if (cfg.initial.size() != cfg.coupling.n) {
        throw detail::field_error("initial", "needs one profile per species (" + std::to_string(cfg.coupling.n) + ")");
    }

    cfg.t_final = detail::get_or<double>(doc, "t_final", cfg.t_final, "");
    cfg.cfl = detail::get_or<double>(doc, "cfl", cfg.cfl, "");
    cfg.dt_max = detail::get_or<double>(doc, "dt_max", cfg.dt_max, "");
    cfg.out_every = detail::get_or<int>(doc, "out_every", cfg.out_every, "");
    cfg.seed = detail::get_or<std::uint64_t>(doc, "seed", cfg.seed, "");
    cfg.output_dir = detail::get_or<std::string>(doc, "output_dir", cfg.output_dir, "");
    cfg.snapshots = detail::get_or<bool>(doc, "snapshots", cfg.snapshots, "");
    if (!(cfg.t_final >= 0.0)) throw detail::field_error("t_final", "must be >= 0");
    if (!(cfg.cfl > 0.0)) throw detail::field_error("cfl", "must be positive");
    if (!(cfg.dt_max > 0.0)) throw detail::field_error("dt_max", "must be positive");
    if (cfg.out_every < 1) throw detail::field_error("out_every", "must be >= 1");

    const json flags = doc.value("flags", json::object());
    cfg.raw_normalization = detail::get_or<bool>(flags, "raw_normalization", false, "flags.");
    cfg.dealias = detail::get_or<bool>(flags, "dealias", true, "flags.");

    if (doc.contains("twin")) {
        const auto& twin = doc.at("twin");
        if (twin.contains("mode")) cfg.perturbation.mode = detail::parse_mode(twin.at("mode"), "twin.mode");
        cfg.perturbation.amplitude = detail::get_or<double>(twin, "amplitude", cfg.perturbation.amplitude, "twin.");
        if (twin.contains("q2")) cfg.q2 = twin.at("q2").get<double>();
    }

    if (doc.contains("verify")) {
        const auto& v = doc.at("verify");
        cfg.verify.oracle_trials = detail::get_or<int>(v, "oracle_trials", cfg.verify.oracle_trials, "verify.");
        cfg.verify.positivity_trials =
            detail::get_or<int>(v, "positivity_trials", cfg.verify.positivity_trials, "verify.");
        cfg.verify.poincare_trials = detail::get_or<int>(v, "poincare_trials", cfg.verify.poincare_trials, "verify.");
        cfg.verify.band_limit = detail::get_or<int>(v, "band_limit", cfg.verify.band_limit, "verify.");
        cfg.verify.quadrature.nodes = detail::get_or<int>(v, "quad_nodes", cfg.verify.quadrature.nodes, "verify.");
        cfg.verify.quadrature.t_min = detail::get_or<double>(v, "t_min", cfg.verify.quadrature.t_min, "verify.");
        cfg.verify.quadrature.t_max = detail::get_or<double>(v, "t_max", cfg.verify.quadrature.t_max, "verify.");
        try {
            cfg.verify.quadrature.validate();
        } catch (const ValidationError& e) {
            throw detail::field_error("verify", e.what());
        }
    }
    return cfg;
}

inline SimConfig parse_config_text(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

inline SimConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Random zero-mean field with Gaussian coefficients on modes 1..band_limit
/// per axis (mode 0 excluded).
template <class Rng>
SpectralField random_band_limited(const Grid& grid, int band_limit, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    SpectralField u(grid);
    for (std::size_t idx = 1; idx < u.size(); ++idx) {
        const auto k = grid.unflat(idx);
        bool inside = true;
        for (int a = 0; a < grid.dim(); ++a) inside = inside && k[a] <= band_limit;
        if (inside) u[idx] = normal(rng);
    }
    return u;
}

/// Sample a profile at the collocation nodes and check nonnegativity.
inline PhysicalField synthesize_profile(const Grid& grid, const ProfileSpec& p, std::uint64_t seed,
                                        std::size_t species)
{
    PhysicalField f(grid);
    const std::string ctx = "initial[" + std::to_string(species) + "]";
    if (p.kind == "constant") {
        for (auto& v : f.values) v = p.value;
    } else if (p.kind == "gaussian-bump") {
        std::vector<double> c = p.center;
        c.resize(2, 0.0);
        if (p.center.empty()) {
            for (int a = 0; a < grid.dim(); ++a) c[a] = 0.5 * grid.extent(a);
        }
        for (std::size_t idx = 0; idx < f.size(); ++idx) {
            const auto x = node_position(grid, idx);
            double r2 = 0.0;
            for (int a = 0; a < grid.dim(); ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
            f[idx] = p.baseline + p.amplitude * std::exp(-r2 / (2.0 * p.width * p.width));
        }
    } else if (p.kind == "two-level") {
        for (std::size_t idx = 0; idx < f.size(); ++idx) {
            const auto x = node_position(grid, idx);
            f[idx] = x[0] < p.split * grid.extent(0) ? p.low : p.high;
        }
    } else if (p.kind == "modes") {
        SpectralField u(grid);
        u[0] = p.baseline * std::sqrt(grid.volume());
        for (const auto& [k, amp] : p.modes) {
            try {
                u.at(k) += amp;
            } catch (const IndexError& e) {
                throw detail::field_error(ctx + ".modes", e.what());
            }
        }
        f = to_physical(u);
    } else if (p.kind == "random") {
        std::mt19937_64 rng(seed + 7919 * species);
        auto u = random_band_limited(grid, p.band_limit, rng);
        const double norm = l2_norm(u);
        if (norm > 0.0) {
            for (auto& c : u.coeffs) c *= p.amplitude / norm;
        }
        u[0] = p.baseline * std::sqrt(grid.volume());
        f = to_physical(u);
    } else if (p.kind == "file") {
        const auto snap = read_snapshot(p.path);
        if (!(snap.grid_matches(grid))) throw detail::field_error(ctx + ".path", "snapshot resolution differs");
        if (p.field_index < 0 || p.field_index >= static_cast<int>(snap.fields.size())) {
            throw detail::field_error(ctx + ".field", "snapshot has no such field");
        }
        f = PhysicalField(grid, snap.fields[p.field_index]);
    }
    for (double v : f.values) {
        if (!std::isfinite(v) || v < 0.0) throw detail::field_error(ctx, "initial profile must be finite and nonnegative");
    }
    return f;
}

inline SpeciesState initial_state(const SimConfig& cfg)
{
    std::vector<PhysicalField> fields;
    for (std::size_t i = 0; i < cfg.initial.size(); ++i) {
        fields.push_back(synthesize_profile(cfg.grid, cfg.initial[i], cfg.seed, i));
    }
    return SpeciesState(0.0, std::move(fields));
}

/// Adds amplitude * psi_k to every species; rejects mass changes and
/// negative densities.
inline SpeciesState perturb(const SpeciesState& s, const PerturbationSpec& p)
{
    if (p.mode[0] == 0 && p.mode[1] == 0 && p.amplitude != 0.0) {
        throw ValidationError("perturbation of mode 0 changes the species mass");
    }
    // Skip the transform round trip so a zero perturbation is bitwise exact.
    if (p.amplitude == 0.0) return s;
    SpeciesState out = s;
    for (auto& f : out.fields) {
        auto u = to_spectral(f);
        try {
            u.at(p.mode) += p.amplitude;
        } catch (const IndexError& e) {
            throw ValidationError(std::string("perturbation mode: ") + e.what());
        }
        f = to_physical(u);
        for (double v : f.values) {
            if (v < 0.0) throw ValidationError("perturbation creates a negative density");
        }
    }
    // Restore the exact masses of the unperturbed state.
    for (std::size_t i = 0; i < out.fields.size(); ++i) {
        const double m = integral(out.fields[i]);
        if (std::abs(m - s.masses[i]) > 1e-10 * std::abs(s.masses[i])) {
            throw ValidationError("perturbation changes the mass of species " + std::to_string(i + 1));
        }
    }
    out.masses = s.masses;
    return out;
}

}  // namespace fracross
