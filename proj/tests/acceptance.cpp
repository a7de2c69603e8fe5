// Runs the desk-scale acceptance criteria A1..A11, one PASS/FAIL line each.

#include <fracross/cli.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sys/wait.h>

using namespace fracross;

namespace {

const std::string source_dir = FRACROSS_SOURCE_DIR;

int failures = 0;

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(const std::string& id, bool pass, const std::string& what, double seconds, double budget)
{
    const bool in_time = seconds < budget;
    const bool ok = pass && in_time;
    if (!ok) ++failures;
    std::printf("%s %s %s [%.2fs of %.0fs]%s\n", ok ? "PASS" : "FAIL", id.c_str(), what.c_str(), seconds, budget,
                in_time ? "" : " over budget");
    std::fflush(stdout);
}

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

SimConfig config(const std::string& name)
{
    return load_config(source_dir + "/configs/" + name);
}

// Worst measured value over checks whose name starts with prefix.
std::pair<bool, double> worst(const std::vector<CheckResult>& checks, const std::string& prefix, bool larger_is_worse)
{
    bool pass = true;
    double w = larger_is_worse ? 0.0 : INFINITY;
    for (const auto& c : checks) {
        if (c.name.rfind(prefix, 0) != 0) continue;
        pass = pass && c.pass;
        w = larger_is_worse ? std::max(w, c.measured) : std::min(w, c.measured);
    }
    return {pass, w};
}

void operator_criteria()
{
    const SimConfig cfg = config("verify.json");
    std::mt19937_64 rng(cfg.seed);
    {
        Stopwatch sw;
        const auto checks = check_oracles(cfg.grid, cfg.params.beta, cfg.verify, rng);
        const auto [pass, err] = worst(checks, "oracle", true);
        report("A1", pass && checks.size() == 4, "operator oracles: max relative L2 error " + num(err) + " <= 1e-06",
               sw.seconds(), 10);
    }
    {
        Stopwatch sw;
        const auto checks = check_error_slopes(cfg.grid, cfg.verify, false, rng);
        std::string slopes;
        bool pass = true;
        for (const auto& c : checks) {
            pass = pass && c.pass;
            slopes += (slopes.empty() ? "" : ", ") + num(c.measured) + " in [" + num(c.threshold) + "," +
                      num(c.upper) + "]";
        }
        report("A2", pass && checks.size() == 3, "approximation error slopes " + slopes, sw.seconds(), 5);
    }
    {
        Stopwatch sw;
        const auto checks = check_positivity(cfg.grid, cfg.params.beta, cfg.verify, false, rng);
        const auto [pf, form] = worst(checks, "positivity", false);
        const auto [pa, adj] = worst(checks, "self_adjoint", true);
        report("A3", pf && pa,
               "positivity: min normalized form " + num(form) + " >= -1e-12, self-adjointness " + num(adj) +
                   " <= 1e-10",
               sw.seconds(), 5);
    }
    {
        Stopwatch sw;
        const auto checks = check_poincare(cfg.grid, cfg.verify, rng);
        const auto [pm, margin] = worst(checks, "poincare_margin", false);
        const auto [pe, eq] = worst(checks, "poincare_equality", true);
        report("A4", pm && pe,
               "Poincare: min margin " + num(margin) + " >= -1e-10, equality defect on psi_1 " + num(eq) + " <= 1e-12",
               sw.seconds(), 2);
    }
}

void decay_criteria()
{
    const SimConfig cfg = config("decay.json");
    const Model model(cfg.grid, cfg.coupling, cfg.params, cfg.model_options());
    const SpeciesState init = initial_state(cfg);
    const SpeciesState eq = equilibrium_of(init);
    RunOptions opts = cfg.run_options();
    opts.log_steps = true;

    bool ckp_ok = true;
    double ckp_worst = 0.0;
    Stopwatch sw;
    const auto traj = run(model, init, opts, [&](const DiagnosticsRecord&, const SpeciesState& s) {
        const auto c = ckp_check(s, eq, cfg.coupling);
        ckp_ok = ckp_ok && c.ok;
        if (c.rhs_total > 0.0) ckp_worst = std::max(ckp_worst, c.lhs_total / c.rhs_total);
    });
    const double elapsed = sw.seconds();

    // A5
    double drift = 0.0;
    for (const auto& r : traj.records) {
        for (std::size_t i = 0; i < init.species(); ++i) {
            drift = std::max(drift, std::abs(r.masses[i] - init.masses[i]) / init.masses[i]);
        }
    }
    report("A5", drift <= 1e-10, "mass drift " + num(drift) + " <= 1e-10 over " + num(traj.records.size()) + " samples",
           elapsed, 60);

    // A6
    const double c0 = cfg.coupling.c0;
    const double h0 = entropy(init, cfg.coupling);
    double prev = h0;
    double worst_rise = -INFINITY;
    double integrated = 0.0;
    double worst_excess = -INFINITY;
    for (const auto& s : traj.steps) {
        worst_rise = std::max(worst_rise, (s.H - prev) / (1.0 + std::abs(prev)));
        prev = s.H;
        integrated += s.D0 * s.dt;
        worst_excess = std::max(worst_excess, s.H + c0 * integrated - h0);
    }
    const double excess_tol = 1e-6 * (1.0 + std::abs(h0));
    report("A6", worst_rise <= 1e-8 && worst_excess <= excess_tol && std::abs(c0 - 1.0) <= 1e-12,
           "entropy: max relative step increase " + num(worst_rise) + " <= 1e-08, integrated excess " +
               num(worst_excess) + " <= " + num(excess_tol) + " (c0 = " + num(c0) + ", " +
               num(traj.steps.size()) + " steps)",
           elapsed, 60);

    // A7
    std::vector<double> t, h;
    for (const auto& r : traj.records) {
        t.push_back(r.t);
        h.push_back(r.H_rel);
    }
    std::size_t rises = 0;
    for (std::size_t k = 1; k < h.size(); ++k) {
        if (t[k] >= 0.1 * cfg.t_final && h[k] > h[k - 1]) ++rises;
    }
    const auto fit = fit_rate(t, h, t.front() + 0.5 * (t.back() - t.front()), t.back());
    const double l1_ratio = traj.records.back().L1_dist / traj.records.front().L1_dist;
    report("A7", rises == 0 && fit.rate > 0.0 && fit.r2 > 0.99 && l1_ratio < 1e-4 && ckp_ok,
           "decay: rate " + num(fit.rate) + " r2 " + num(fit.r2) + ", H_rel increases after transient " +
               num(rises) + ", L1 ratio " + num(l1_ratio) + " < 1e-4, CKP " + (ckp_ok ? "ok" : "violated") +
               " (max lhs/rhs " + num(ckp_worst) + ")",
           elapsed, 60);
}

void linear_rate_criterion()
{
    Stopwatch sw;
    const auto grid = Grid::interval(std::numbers::pi, 64);
    const Model model(grid, validate_coupling({{1.0}}, {1.0}), RegParams{0.0, 0.0, 0.0, INFINITY, 0.5});
    auto field = to_physical(eigenmode(grid, {1, 0}, 1e-6));
    for (auto& v : field.values) v += 1.0;
    RunOptions opts;
    opts.t_final = 2.0;
    opts.dt_max = 1e-3;
    opts.out_every = 20;
    std::vector<double> t, c1;
    run(model, SpeciesState(0.0, {field}), opts, [&](const DiagnosticsRecord& r, const SpeciesState& s) {
        t.push_back(r.t);
        c1.push_back(to_spectral(s.fields[0]).at({1, 0}));
    });
    const auto fit = fit_rate(t, c1, 0.0, opts.t_final);
    const double rel = std::abs(fit.rate - 1.0);
    report("A8", rel <= 0.05, "linearized mode-1 rate " + num(fit.rate) + " within 5% of 1 (r2 " + num(fit.r2) + ")",
           sw.seconds(), 10);
}

void continuation_criterion()
{
    Stopwatch sw;
    const SimConfig cfg = config("continuation.json");
    const SpeciesState init = initial_state(cfg);
    auto schedule = [&](const std::string& name) {
        std::vector<RegParams> s;
        for (double v : {1e-1, 1e-2, 1e-3}) {
            RegParams p;
            p.beta = cfg.params.beta;
            (name == "kappa" ? p.kappa : p.eps) = v;
            s.push_back(p);
        }
        return s;
    };
    const auto kappa = continuation_study(cfg.grid, cfg.coupling, init, schedule("kappa"), cfg.run_options(),
                                          cfg.model_options());
    const auto eps =
        continuation_study(cfg.grid, cfg.coupling, init, schedule("eps"), cfg.run_options(), cfg.model_options());

    auto distances = [](const ContinuationReport& r) {
        std::vector<double> d;
        for (const auto& e : r.entries) d.push_back(e.l1_to_limit);
        return d;
    };
    const auto dk = distances(kappa);
    const auto de = distances(eps);
    const bool k_strict = kappa.complete && dk.size() == 3 && dk[0] > dk[1] && dk[1] > dk[2];
    const bool e_decr = eps.complete && de.size() == 3 && de[0] > de[1] && de[1] > de[2];
    const double target = 1.0 - 0.25 * (cfg.params.beta + 1.0);
    const double slope = eps.slope.value_or(NAN);
    const bool slope_ok = std::abs(slope - target) <= 0.2;
    report("A9", k_strict && e_decr && slope_ok,
           "continuation at t = " + num(cfg.t_final) + ": kappa L1 " + num(dk[0]) + " > " + num(dk[1]) + " > " +
               num(dk[2]) + "; eps L1 " + num(de[0]) + " > " + num(de[1]) + " > " + num(de[2]) + ", slope " +
               num(slope) + " within 0.2 of " + num(target),
           sw.seconds(), 180);
}

void twin_criterion()
{
    Stopwatch sw;
    const SimConfig cfg = config("twin.json");
    const Model model(cfg.grid, cfg.coupling, cfg.params, cfg.model_options());
    const SpeciesState base = initial_state(cfg);

    const auto traj = run_lockstep(model, base, perturb(base, cfg.perturbation), cfg.run_options());
    const auto rep = twin_run_report(traj.second, traj.first, cfg.coupling, cfg.params.beta, cfg.q2);

    PerturbationSpec none = cfg.perturbation;
    none.amplitude = 0.0;
    const auto same = run_lockstep(model, base, perturb(base, none), cfg.run_options());
    const auto zero = twin_run_report(same.second, same.first, cfg.coupling, cfg.params.beta, cfg.q2);
    double zmax = 0.0;
    for (const auto& s : zero.samples) zmax = std::max(zmax, std::abs(s.H_rel));

    report("A10", rep.all_below_envelope && !rep.failed && zmax <= 1e-14,
           "twin: " + num(rep.samples.size()) + " samples below envelope (fitted C " + num(rep.fitted_c) + ", q1 " +
               num(rep.exponents.q1) + ", q2 " + num(rep.exponents.q2) + "), zero perturbation max H_rel " +
               num(zmax) + " <= 1e-14",
           sw.seconds(), 120);
}

void determinism_criterion()
{
    Stopwatch sw;
    const auto root = fs::temp_directory_path() / "fracross_acceptance_a11";
    fs::remove_all(root);
    bool ran = true;
    for (const char* name : {"first", "second"}) {
        const std::string cmd = std::string("'") + FRACROSS_CLI_PATH + "' run --config '" + source_dir +
                                "/configs/decay.json' --out '" + (root / name).string() + "' > /dev/null";
        const int status = std::system(cmd.c_str());
        ran = ran && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const auto a = slurp(root / "first" / "diagnostics.csv");
    const auto b = slurp(root / "second" / "diagnostics.csv");
    report("A11", ran && !a.empty() && a == b,
           "two CLI runs of the decay setup give byte-identical diagnostics.csv (" + num(a.size()) + " bytes)",
           sw.seconds(), 120);
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, void (*)()>> groups{
        {"A1-A4", operator_criteria}, {"A5-A7", decay_criteria},     {"A8", linear_rate_criterion},
        {"A9", continuation_criterion}, {"A10", twin_criterion}, {"A11", determinism_criterion}};
    for (const auto& [ids, fn] : groups) {
        try {
            fn();
        } catch (const std::exception& e) {
            ++failures;
            std::printf("FAIL %s aborted: %s\n", ids.c_str(), e.what());
        }
    }
    std::printf("%s: %d failing criteria\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
