#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "diagnostics.hpp"
#include "dynamics.hpp"
#include "io.hpp"
#include "verify.hpp"

namespace fracross {

enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_numerical = 3,
    exit_acceptance = 4,
};

struct CliOptions {
    std::string config;
    std::string out;
    std::string schedule;
    std::string window;
    std::string csv;
    std::optional<std::uint64_t> seed;
};

/// Output directory precedence: --out, then FRACROSS_OUT, then the config.
inline fs::path resolve_out_dir(const CliOptions& opts, const std::string& config_dir)
{
    if (!opts.out.empty()) return opts.out;
    if (const char* env = std::getenv("FRACROSS_OUT"); env != nullptr && *env != '\0') return env;
    return config_dir;
}

inline std::pair<double, double> parse_window(const std::string& text)
{
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ValidationError("window must look like T_A:T_B");
    const double a = parse_double(text.substr(0, colon));
    const double b = parse_double(text.substr(colon + 1));
    if (!(a < b)) throw ValidationError("window needs T_A < T_B");
    return {a, b};
}

/// Schedule file: a JSON array of parameter objects, or {"schedule": [...]}.
/// Missing keys take the base configuration's values.
inline std::vector<RegParams> load_schedule(const std::string& path, const RegParams& base)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read schedule file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("schedule is not valid JSON: ") + e.what());
    }
    const json& list = doc.is_object() ? doc.value("schedule", json::array()) : doc;
    if (!list.is_array()) throw ValidationError("schedule must be an array of parameter objects");
    std::vector<RegParams> out;
    for (std::size_t k = 0; k < list.size(); ++k) {
        const std::string ctx = "schedule[" + std::to_string(k) + "].";
        RegParams p = base;
        const auto& e = list[k];
        p.kappa = detail::get_or<double>(e, "kappa", p.kappa, ctx);
        p.eps = detail::get_or<double>(e, "eps", p.eps, ctx);
        p.rho = detail::get_or<double>(e, "rho", p.rho, ctx);
        if (e.contains("M")) p.M = detail::number_or_inf(e.at("M"), ctx + "M");
        out.push_back(p);
    }
    validate_schedule(out);
    return out;
}

namespace detail {

/// Runs body with a manifest that is written however the command ends.
/// Maps exceptions onto exit codes and prints a JSON error line to stderr.
inline int guarded(const std::string& command, const CliOptions& opts,
                   const std::function<int(RunManifest&, fs::path&)>& body)
{
    RunManifest manifest;
    manifest.command = command;
    manifest.config_path = opts.config;
    fs::path out_dir;
    int code = exit_ok;
    std::string kind;
    try {
        code = body(manifest, out_dir);
        manifest.status = code == exit_ok ? "ok" : code == exit_acceptance ? "acceptance_failure" : "failed";
    } catch (const ValidationError& e) {
        code = exit_config;
        kind = "config_error";
        manifest.error = e.what();
    } catch (const nlohmann::json::exception& e) {
        code = exit_config;
        kind = "config_error";
        manifest.error = e.what();
    } catch (const NumericalError& e) {
        code = exit_numerical;
        kind = "numerical_failure";
        manifest.error = e.what();
    } catch (const DomainError& e) {
        code = exit_numerical;
        kind = "numerical_failure";
        manifest.error = e.what();
    } catch (const IndexError& e) {
        code = exit_config;
        kind = "config_error";
        manifest.error = e.what();
    } catch (const std::exception& e) {
        code = exit_numerical;
        kind = "runtime_failure";
        manifest.error = e.what();
    }
    if (!kind.empty()) {
        manifest.status = kind;
        nlohmann::ordered_json err;
        err["status"] = kind;
        err["exit_code"] = code;
        err["command"] = command;
        err["message"] = manifest.error;
        std::cerr << err.dump() << '\n';
    }
    manifest.exit_code = code;
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (!ec) write_manifest(out_dir, manifest);
    }
    return code;
}

/// output_dir from a config that may not validate; "out" if unreadable.
inline std::string peek_output_dir(const std::string& path)
{
    std::ifstream in(path);
    const auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_object() && doc.contains("output_dir") && doc["output_dir"].is_string()) {
        return doc["output_dir"].get<std::string>();
    }
    return "out";
}

/// Loads the config, applies --seed and resolves/creates the output directory.
inline SimConfig prepare(const CliOptions& opts, RunManifest& manifest, fs::path& out_dir)
{
    if (opts.config.empty()) throw ValidationError("--config is required");
    // Create the output directory early so config errors still leave a manifest.
    out_dir = resolve_out_dir(opts, peek_output_dir(opts.config));
    SimConfig cfg = load_config(opts.config);
    out_dir = resolve_out_dir(opts, cfg.output_dir);
    if (opts.seed) cfg.seed = *opts.seed;
    manifest.config_hash = hex64(fnv1a(cfg.canonical + "|seed=" + std::to_string(cfg.seed)));
    fs::create_directories(out_dir);
    return cfg;
}

}  // namespace detail

inline int cmd_run(const CliOptions& opts)
{
    return detail::guarded("run", opts, [&](RunManifest& manifest, fs::path& out_dir) {
        const SimConfig cfg = detail::prepare(opts, manifest, out_dir);
        const Model model(cfg.grid, cfg.coupling, cfg.params, cfg.model_options());
        const SpeciesState init = initial_state(cfg);
        if (cfg.snapshots) write_snapshot(out_dir / "initial.frx", init);
        write_plot_script(out_dir / "plot_h_rel.py", "diagnostics.csv", "H_rel", "h_rel.png");

        std::vector<DiagnosticsRecord> records;
        const auto write_csv = [&] { write_diagnostics(out_dir / "diagnostics.csv", records, init.species()); };
        Trajectory traj;
        try {
            traj = run(model, init, cfg.run_options(),
                       [&](const DiagnosticsRecord& r, const SpeciesState&) { records.push_back(r); });
        } catch (...) {
            write_csv();
            throw;
        }
        write_csv();
        if (cfg.snapshots) write_snapshot(out_dir / "final.frx", traj.final_state);
        return static_cast<int>(exit_ok);
    });
}

inline int cmd_verify_ops(const CliOptions& opts)
{
    return detail::guarded("verify-ops", opts, [&](RunManifest& manifest, fs::path& out_dir) {
        const SimConfig cfg = detail::prepare(opts, manifest, out_dir);
        const VerifyReport report = verify_ops(cfg);
        auto j = to_json(report);
        j["raw_normalization"] = cfg.raw_normalization;
        j["seed"] = cfg.seed;
        std::ofstream(out_dir / "report.json") << j.dump(2) << '\n';
        for (const auto& c : report.checks) {
            std::cout << (c.pass ? "PASS " : c.expected_fail ? "XFAIL " : "FAIL ") << c.name << " "
                      << format_double(c.measured) << '\n';
        }
        return static_cast<int>(report.ok() ? exit_ok : exit_acceptance);
    });
}

inline int cmd_twin(const CliOptions& opts)
{
    return detail::guarded("twin", opts, [&](RunManifest& manifest, fs::path& out_dir) {
        const SimConfig cfg = detail::prepare(opts, manifest, out_dir);
        const Model model(cfg.grid, cfg.coupling, cfg.params, cfg.model_options());
        const SpeciesState base = initial_state(cfg);
        const SpeciesState perturbed = perturb(base, cfg.perturbation);
        const auto traj = run_lockstep(model, base, perturbed, cfg.run_options());
        // Solutions are compared as H[u|v] with u perturbed and v the reference.
        const auto report = twin_run_report(traj.second, traj.first, cfg.coupling, cfg.params.beta, cfg.q2);

        CsvWriter w(out_dir / "twin.csv");
        std::vector<std::string> cols{"t", "H_rel", "dissipation_between"};
        for (std::size_t i = 1; i <= base.species(); ++i) cols.push_back("grad_log_norm_" + std::to_string(i));
        for (const char* c : {"forcing_integral", "envelope", "below_envelope"}) cols.emplace_back(c);
        w.header(cols);
        for (const auto& s : report.samples) {
            std::vector<double> row{s.t, s.H_rel, s.dissipation_between};
            row.insert(row.end(), s.grad_log_norms.begin(), s.grad_log_norms.end());
            row.push_back(s.forcing_integral);
            row.push_back(s.envelope);
            row.push_back(s.below_envelope ? 1.0 : 0.0);
            w.row(row);
        }

        nlohmann::ordered_json fit;
        fit["q1"] = report.exponents.q1;
        fit["q2"] = report.exponents.q2;
        fit["fitted_c"] = report.fitted_c;
        fit["all_below_envelope"] = report.all_below_envelope;
        fit["monotone"] = report.monotone;
        fit["failed"] = report.failed;
        if (!report.annotation.empty()) fit["annotation"] = report.annotation;
        fit["perturbation"] = {{"mode", cfg.perturbation.mode}, {"amplitude", cfg.perturbation.amplitude}};
        std::ofstream(out_dir / "twin_fit.json") << fit.dump(2) << '\n';
        write_plot_script(out_dir / "plot_twin.py", "twin.csv", "H_rel", "twin_h_rel.png");
        return static_cast<int>(report.failed ? exit_numerical : exit_ok);
    });
}

inline int cmd_continuation(const CliOptions& opts)
{
    return detail::guarded("continuation", opts, [&](RunManifest& manifest, fs::path& out_dir) {
        const SimConfig cfg = detail::prepare(opts, manifest, out_dir);
        if (opts.schedule.empty()) throw ValidationError("--schedule is required");
        const auto schedule = load_schedule(opts.schedule, cfg.params);
        const SpeciesState init = initial_state(cfg);
        const auto report =
            continuation_study(cfg.grid, cfg.coupling, init, schedule, cfg.run_options(), cfg.model_options());

        CsvWriter w(out_dir / "continuation.csv");
        w.header({"kappa", "eps", "rho", "M", "l1_to_next", "l2_to_next", "l1_to_limit", "l2_to_limit", "ok"});
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (const auto& e : report.entries) {
            w.row({e.params.kappa, e.params.eps, e.params.rho, e.params.M, e.l1_to_next.value_or(nan),
                   e.l2_to_next.value_or(nan), e.ok ? e.l1_to_limit : nan, e.ok ? e.l2_to_limit : nan,
                   e.ok ? 1.0 : 0.0});
        }
        nlohmann::ordered_json fit;
        fit["varied"] = report.varied;
        fit["slope"] = report.slope ? nlohmann::ordered_json(*report.slope) : nlohmann::ordered_json();
        fit["monotone"] = report.monotone;
        fit["complete"] = report.complete;
        fit["t_final"] = cfg.t_final;
        for (const auto& e : report.entries) {
            if (!e.ok) fit["failures"].push_back(e.failure);
        }
        std::ofstream(out_dir / "continuation_fit.json") << fit.dump(2) << '\n';
        return static_cast<int>(report.complete ? exit_ok : exit_numerical);
    });
}

inline int cmd_rate(const CliOptions& opts)
{
    return detail::guarded("rate", opts, [&](RunManifest& manifest, fs::path& out_dir) {
        if (!opts.out.empty()) {
            out_dir = opts.out;
            fs::create_directories(out_dir);
        }
        if (opts.csv.empty()) throw ValidationError("rate needs a diagnostics CSV path");
        manifest.config_path = opts.csv;
        const CsvTable table = read_csv(opts.csv);
        if (table.rows.empty()) throw ValidationError(opts.csv + " has no samples");
        const auto t = table.values("t");
        const auto h = table.values("H_rel");
        double t_a = t.front() + 0.5 * (t.back() - t.front());
        double t_b = t.back();
        if (!opts.window.empty()) std::tie(t_a, t_b) = parse_window(opts.window);
        const RateFit fit = fit_rate(t, h, t_a, t_b);
        nlohmann::ordered_json j;
        j["rate"] = fit.rate;
        j["r2"] = fit.r2;
        j["window"] = {fit.t_a, fit.t_b};
        j["samples"] = fit.samples;
        std::cout << j.dump() << '\n';
        if (!out_dir.empty()) std::ofstream(out_dir / "rate.json") << j.dump(2) << '\n';
        return static_cast<int>(exit_ok);
    });
}

/// Full command-line entry point.
inline int cli_main(int argc, char** argv)
{
    CLI::App app{"Fractional cross-diffusion solver"};
    app.set_version_flag("--version", std::string(FRACROSS_VERSION));
    app.require_subcommand(1);
    CliOptions opts;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "configuration JSON");
        sub->add_option("--out", opts.out, "output directory");
        sub->add_option("--seed", seed, "random seed override");
    };
    auto* run_cmd = app.add_subcommand("run", "integrate one configuration");
    common(run_cmd);
    auto* verify_cmd = app.add_subcommand("verify-ops", "fractional operator property suite");
    common(verify_cmd);
    auto* twin_cmd = app.add_subcommand("twin", "relative entropy between perturbed and base runs");
    common(twin_cmd);
    auto* cont_cmd = app.add_subcommand("continuation", "regularization limit study");
    common(cont_cmd);
    cont_cmd->add_option("--schedule", opts.schedule, "schedule JSON");
    auto* rate_cmd = app.add_subcommand("rate", "fit the exponential decay rate of a diagnostics CSV");
    rate_cmd->add_option("csv", opts.csv, "diagnostics.csv")->required();
    rate_cmd->add_option("--window", opts.window, "fit window T_A:T_B");
    rate_cmd->add_option("--out", opts.out, "directory for rate.json and manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }
    for (auto* sub : {run_cmd, verify_cmd, twin_cmd, cont_cmd}) {
        if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;
    }
    if (run_cmd->parsed()) return cmd_run(opts);
    if (verify_cmd->parsed()) return cmd_verify_ops(opts);
    if (twin_cmd->parsed()) return cmd_twin(opts);
    if (cont_cmd->parsed()) return cmd_continuation(opts);
    return cmd_rate(opts);
}

}  // namespace fracross
