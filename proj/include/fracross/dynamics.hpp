#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coupling.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "frac_ops.hpp"
#include "spectral.hpp"
#include "state.hpp"

namespace fracross {

/// Regularization parameters. The limit system is
/// (kappa, eps, rho, M) = (0, 0, 0, inf).
struct RegParams {
    double kappa = 0.0;
    double eps = 0.0;
    double rho = 0.0;
    double M = std::numeric_limits<double>::infinity();
    double beta = 0.5;

    void validate() const
    {
        if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("beta must lie in (0,1)");
        if (!(kappa >= 0.0)) throw ValidationError("kappa must be >= 0");
        if (!(eps >= 0.0)) throw ValidationError("eps must be >= 0");
        if (!(rho >= 0.0)) throw ValidationError("rho must be >= 0");
        if (!(M > 0.0)) throw ValidationError("truncation level M must be positive");
    }

    bool is_limit() const { return kappa == 0.0 && eps == 0.0 && rho == 0.0 && std::isinf(M); }
};

/// g_rho[u] = u^2/(1 + rho|u|) minus its mean.
inline PhysicalField g_correction(const PhysicalField& u, double rho)
{
    if (!(rho >= 0.0)) throw DomainError("rho must be >= 0");
    PhysicalField out(u.grid);
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = u[k] * u[k] / (1.0 + rho * std::abs(u[k]));
    const double mean = integral(out) / u.grid.volume();
    for (auto& v : out.values) v -= mean;
    return out;
}

/// T_M(u) = min(max(u, 0), M) pointwise.
inline PhysicalField truncate_mobility(const PhysicalField& u, double M)
{
    if (!(M > 0.0)) throw DomainError("truncation level M must be positive");
    PhysicalField out(u.grid);
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = std::min(std::max(u[k], 0.0), M);
    return out;
}

/// Explicit right-hand side in spectral space; the implicit part is
/// kappa * Delta, kept separate.
struct Rhs {
    std::vector<SpectralField> explicit_part;
    double kappa = 0.0;
    /// max over species and nodes of |sum_j a_ij grad P_j|.
    double max_velocity = 0.0;
};

struct StepResult {
    SpeciesState state;
    /// L1 mass removed by clipping negative values, summed over species.
    double clip_l1 = 0.0;
};

struct ModelOptions {
    bool dealias = true;
    bool raw_normalization = false;
    /// Fraction of modes kept after pointwise products.
    double dealias_fraction = 2.0 / 3.0;
    /// Clipped mass above this fraction of a species' mass fails the step.
    double max_clip_fraction = 0.01;
};

/// The discretized cross-diffusion system on one grid.
class Model {
public:
    Model(const Grid& grid, CouplingSpec coupling, RegParams params, ModelOptions options = {})
        : grid_(grid), coupling_(std::move(coupling)), params_(params), options_(options)
    {
        params_.validate();
        lambda_ = eigenvalue_table(grid_);
        potential_ = transport_multiplier_table(grid_, params_.beta, params_.eps, options_.raw_normalization);
        const double keep = options_.dealias ? options_.dealias_fraction : 1.0;
        for (std::size_t idx = 1; idx < lambda_.size(); ++idx) {
            const auto k = grid_.unflat(idx);
            bool kept = true;
            for (int a = 0; a < grid_.dim(); ++a) kept = kept && k[a] <= keep * grid_.resolution(a) + 1e-12;
            if (kept) max_transport_rate_ = std::max(max_transport_rate_, lambda_[idx] * potential_[idx]);
        }
    }

    const Grid& grid() const { return grid_; }
    const CouplingSpec& coupling() const { return coupling_; }
    const RegParams& params() const { return params_; }
    const ModelOptions& options() const { return options_; }

    Rhs assemble_rhs(const SpeciesState& state) const
    {
        check_state(state);
        const std::size_t n = coupling_.n;
        const int dim = grid_.dim();
        std::vector<std::vector<PhysicalField>> velocity;
        velocity.reserve(n);
        for (std::size_t j = 0; j < n; ++j) {
            const auto potential = apply_table(to_spectral(state.fields[j]), potential_);
            velocity.push_back(gradient(potential));
        }
        Rhs rhs;
        rhs.kappa = params_.kappa;
        const double keep = options_.dealias ? options_.dealias_fraction : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto mobility = truncate_mobility(state.fields[i], params_.M);
            std::vector<PhysicalField> flux(dim, PhysicalField(grid_));
            for (int a = 0; a < dim; ++a) {
                for (std::size_t k = 0; k < grid_.size(); ++k) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < n; ++j) v += coupling_.a(i, j) * velocity[j][a][k];
                    rhs.max_velocity = std::max(rhs.max_velocity, std::abs(v));
                    flux[a][k] = mobility[k] * v;
                }
            }
            SpectralField part = divergence(flux, keep);
            if (params_.kappa > 0.0) {
                const auto g = to_spectral(g_correction(state.fields[i], params_.rho));
                for (std::size_t m = 1; m < part.size(); ++m) part[m] -= params_.kappa * g[m];
            }
            part[0] = 0.0;
            if (!all_finite(part.coeffs)) {
                std::ostringstream msg;
                msg << "non-finite right-hand side for species " << i + 1 << " at t = " << state.t;
                throw BlowupError(msg.str());
            }
            rhs.explicit_part.push_back(std::move(part));
        }
        return rhs;
    }

    /// Largest step allowed by transport CFL, the explicit stability limit
    /// of the fractional transport and the quadratic correction, and dt_max.
    double stable_dt(const SpeciesState& state, const Rhs& rhs, double cfl, double dt_max) const
    {
        double dt = dt_max;
        if (rhs.max_velocity > 0.0) dt = std::min(dt, cfl * grid_.min_spacing() / rhs.max_velocity);
        double umax = 0.0;
        for (const auto& f : state.fields) {
            for (double v : f.values) umax = std::max(umax, std::min(v, params_.M));
        }
        const double rate = coupling_.max_row_sum() * umax * max_transport_rate_;
        if (rate > 0.0) dt = std::min(dt, cfl / rate);
        if (params_.kappa > 0.0 && umax > 0.0) dt = std::min(dt, cfl / (2.0 * params_.kappa * umax));
        return dt;
    }

    /// IMEX Euler: c' = (c + dt * explicit) / (1 + dt kappa lambda), then
    /// clip negatives and rescale each species back to its mass.
    StepResult step(const SpeciesState& state, double dt) const
    {
        return step(state, assemble_rhs(state), dt);
    }

    StepResult step(const SpeciesState& state, const Rhs& rhs, double dt) const
    {
        if (!(dt > 0.0)) throw DomainError("time step must be positive");
        StepResult out;
        out.state.t = state.t + dt;
        out.state.masses = state.masses;
        for (std::size_t i = 0; i < coupling_.n; ++i) {
            auto coeffs = to_spectral(state.fields[i]);
            const auto& e = rhs.explicit_part[i];
            for (std::size_t m = 0; m < coeffs.size(); ++m) {
                coeffs[m] = (coeffs[m] + dt * e[m]) / (1.0 + dt * params_.kappa * lambda_[m]);
            }
            auto field = to_physical(coeffs);
            if (!all_finite(field.values)) {
                std::ostringstream msg;
                msg << "non-finite density for species " << i + 1 << " after step to t = " << out.state.t;
                throw BlowupError(msg.str());
            }
            double clipped = 0.0;
            for (auto& v : field.values) {
                if (v < 0.0) {
                    clipped -= v;
                    v = 0.0;
                }
            }
            clipped *= grid_.cell_volume();
            const double target = state.masses[i];
            if (clipped > options_.max_clip_fraction * std::abs(target)) {
                std::ostringstream msg;
                msg << "positivity failure: clipped mass " << clipped << " of species " << i + 1 << " exceeds "
                    << options_.max_clip_fraction * 100.0 << "% at t = " << out.state.t << "; reduce dt";
                throw PositivityError(msg.str());
            }
            const double current = integral(field);
            if (current > 0.0) {
                const double scale = target / current;
                for (auto& v : field.values) v *= scale;
            }
            out.clip_l1 += clipped;
            out.state.fields.push_back(std::move(field));
        }
        return out;
    }

    /// Lyapunov functional of the run: H_M (comparable form), which is H when M = inf.
    double lyapunov(const SpeciesState& state) const
    {
        return entropy_truncated(state, coupling_, params_.M).comparable;
    }

private:
    void check_state(const SpeciesState& state) const
    {
        if (state.species() != coupling_.n) throw ValidationError("state and coupling disagree on the number of species");
        for (const auto& f : state.fields) {
            if (!(f.grid == grid_)) throw ValidationError("state grid differs from the model grid");
        }
    }

    Grid grid_;
    CouplingSpec coupling_;
    RegParams params_;
    ModelOptions options_;
    std::vector<double> lambda_;
    std::vector<double> potential_;
    double max_transport_rate_ = 0.0;
};

/// Per-step log entry of an accepted step.
struct StepLog {
    double t = 0.0;   ///< time at the end of the step
    double dt = 0.0;
    double H = 0.0;   ///< entropy at the end of the step
    double D0 = 0.0;  ///< dissipation at the start of the step
    double clip_l1 = 0.0;
};

struct RunOptions {
    double t_final = 1.0;
    double cfl = 0.4;
    double dt_max = 1e-2;
    int out_every = 10;
    /// Keep a copy of the state at every output sample.
    bool keep_snapshots = false;
    /// Keep one StepLog per accepted step.
    bool log_steps = false;
    /// Entropy increase tolerance per step, relative to 1 + |H|.
    double entropy_tol = 1e-8;
    int clean_steps_to_grow = 20;
    double growth = 1.2;
    double min_dt = 1e-14;
};

struct Trajectory {
    std::vector<DiagnosticsRecord> records;
    std::vector<SpeciesState> snapshots;
    std::vector<StepLog> steps;
    SpeciesState final_state;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
};

using RecordObserver = std::function<void(const DiagnosticsRecord&, const SpeciesState&)>;

/// Diagnostics of a state against the constant equilibrium of given masses.
inline DiagnosticsRecord make_record(const Model& model, const SpeciesState& state, const SpeciesState& equilibrium,
                                     double dt, double clip_l1)
{
    DiagnosticsRecord r;
    r.t = state.t;
    r.dt = dt;
    for (const auto& f : state.fields) r.masses.push_back(integral(f));
    r.H = entropy(state, model.coupling());
    r.D = dissipation(state, model.params().beta);
    r.H_rel = relative_entropy(state, equilibrium, model.coupling());
    for (std::size_t i = 0; i < state.species(); ++i) r.L1_dist += l1_distance(state.fields[i], equilibrium.fields[i]);
    r.clip_l1 = clip_l1;
    return r;
}

/// Adaptive step-size control shared by single and lock-step runs.
class StepController {
public:
    explicit StepController(const RunOptions& opts) : opts_(opts), dt_ctrl_(opts.dt_max) {}

    double propose(double stable_dt, double remaining) const
    {
        return std::min({dt_ctrl_, stable_dt, remaining});
    }

    void reject(double dt_tried)
    {
        dt_ctrl_ = 0.5 * dt_tried;
        clean_ = 0;
        if (dt_ctrl_ < opts_.min_dt) {
            throw NumericalError("step size fell below " + std::to_string(opts_.min_dt));
        }
    }

    void accept()
    {
        if (++clean_ >= opts_.clean_steps_to_grow) {
            dt_ctrl_ = std::min(opts_.dt_max, dt_ctrl_ * opts_.growth);
            clean_ = 0;
        }
    }

private:
    RunOptions opts_;
    double dt_ctrl_;
    int clean_ = 0;
};

/// One integrator: owns a state and its controller.
class Integrator {
public:
    Integrator(const Model& model, SpeciesState initial, const RunOptions& opts)
        : model_(&model), state_(std::move(initial)), opts_(opts), controller_(opts)
    {
        state_.refresh_masses();
        check_entropy_ = model.params().kappa == 0.0;
        lyapunov_ = model.lyapunov(state_);
    }

    const SpeciesState& state() const { return state_; }

    /// Largest admissible step from the current state, or 0 when done.
    double propose(double t_end)
    {
        rhs_ = model_->assemble_rhs(state_);
        const double stable = model_->stable_dt(state_, rhs_, opts_.cfl, opts_.dt_max);
        return controller_.propose(stable, t_end - state_.t);
    }

    /// Attempt a step; nullopt means rejected (controller already halved).
    std::optional<StepResult> attempt(double dt)
    {
        try {
            StepResult res = model_->step(state_, rhs_, dt);
            if (check_entropy_) {
                const double next = model_->lyapunov(res.state);
                if (next > lyapunov_ + opts_.entropy_tol * (1.0 + std::abs(lyapunov_))) {
                    controller_.reject(dt);
                    ++rejected_;
                    return std::nullopt;
                }
            }
            return res;
        } catch (const PositivityError&) {
            controller_.reject(dt);
            ++rejected_;
            return std::nullopt;
        }
    }

    void commit(StepResult res)
    {
        state_ = std::move(res.state);
        lyapunov_ = model_->lyapunov(state_);
        controller_.accept();
    }

    std::size_t rejected() const { return rejected_; }

private:
    const Model* model_;
    SpeciesState state_;
    RunOptions opts_;
    StepController controller_;
    Rhs rhs_;
    bool check_entropy_ = false;
    double lyapunov_ = 0.0;
    std::size_t rejected_ = 0;
};

/// Integrate to t_final with adaptive dt, emitting diagnostics at t = 0,
/// every out_every accepted steps and at the final time.
inline Trajectory run(const Model& model, const SpeciesState& initial, const RunOptions& opts,
                      const RecordObserver& observer = {})
{
    if (!(opts.t_final >= 0.0)) throw ValidationError("t_final must be >= 0");
    if (!(opts.cfl > 0.0) || !(opts.dt_max > 0.0) || opts.out_every < 1) {
        throw ValidationError("cfl, dt_max and out_every must be positive");
    }
    Trajectory traj;
    Integrator integ(model, initial, opts);
    const SpeciesState equilibrium = equilibrium_of(integ.state());

    auto emit = [&](const SpeciesState& s, double dt, double clip) {
        auto rec = make_record(model, s, equilibrium, dt, clip);
        if (observer) observer(rec, s);
        traj.records.push_back(std::move(rec));
        if (opts.keep_snapshots) traj.snapshots.push_back(s);
    };
    emit(integ.state(), 0.0, 0.0);

    double clip_since_output = 0.0;
    int since_output = 0;
    // Tolerance for landing exactly on t_final.
    const double t_eps = 1e-12 * std::max(1.0, opts.t_final);
    while (opts.t_final - integ.state().t > t_eps) {
        const double dt = integ.propose(opts.t_final);
        const double d0 = opts.log_steps ? dissipation(integ.state(), model.params().beta) : 0.0;
        auto res = integ.attempt(dt);
        if (!res) {
            ++traj.rejected_steps;
            continue;
        }
        const double clip = res->clip_l1;
        integ.commit(std::move(*res));
        ++traj.accepted_steps;
        clip_since_output += clip;
        if (opts.log_steps) {
            traj.steps.push_back({integ.state().t, dt, entropy(integ.state(), model.coupling()), d0, clip});
        }
        const bool done = opts.t_final - integ.state().t <= t_eps;
        if (++since_output >= opts.out_every || done) {
            emit(integ.state(), dt, clip_since_output);
            clip_since_output = 0.0;
            since_output = 0;
        }
    }
    traj.final_state = integ.state();
    return traj;
}

/// Two trajectories advanced with a common step sequence, so both are
/// sampled at identical times.
struct LockstepResult {
    std::vector<SpeciesState> first;
    std::vector<SpeciesState> second;
};

inline LockstepResult run_lockstep(const Model& model, const SpeciesState& a, const SpeciesState& b,
                                   const RunOptions& opts)
{
    LockstepResult out;
    Integrator ia(model, a, opts);
    Integrator ib(model, b, opts);
    out.first.push_back(ia.state());
    out.second.push_back(ib.state());
    const double t_eps = 1e-12 * std::max(1.0, opts.t_final);
    int since_output = 0;
    while (opts.t_final - ia.state().t > t_eps) {
        const double dt = std::min(ia.propose(opts.t_final), ib.propose(opts.t_final));
        auto ra = ia.attempt(dt);
        auto rb = ib.attempt(dt);
        if (!ra || !rb) continue;
        ia.commit(std::move(*ra));
        ib.commit(std::move(*rb));
        const bool done = opts.t_final - ia.state().t <= t_eps;
        if (++since_output >= opts.out_every || done) {
            out.first.push_back(ia.state());
            out.second.push_back(ib.state());
            since_output = 0;
        }
    }
    return out;
}

struct ContinuationEntry {
    RegParams params;
    bool ok = true;
    std::string failure;
    SpeciesState final_state;
    /// Distances to the next schedule entry (absent for the last entry).
    std::optional<double> l1_to_next;
    std::optional<double> l2_to_next;
    double l1_to_limit = 0.0;
    double l2_to_limit = 0.0;
};

struct ContinuationReport {
    RegParams limit;
    std::vector<ContinuationEntry> entries;
    /// Name of the single parameter varied along the schedule, if any.
    std::string varied;
    /// Log-log slope of distance-to-limit against the varied parameter.
    std::optional<double> slope;
    /// Distances to the limit non-increasing along the schedule within 10%.
    bool monotone = true;
    bool complete = true;
};

namespace detail {

inline double param_value(const RegParams& p, const std::string& name)
{
    if (name == "kappa") return p.kappa;
    if (name == "eps") return p.eps;
    if (name == "rho") return p.rho;
    return p.M;
}

inline double sum_distance(const SpeciesState& a, const SpeciesState& b, bool l1)
{
    double total = 0.0;
    for (std::size_t i = 0; i < a.species(); ++i) {
        total += l1 ? l1_distance(a.fields[i], b.fields[i]) : l2_distance(a.fields[i], b.fields[i]);
    }
    return total;
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += std::log(x[k]);
        my += std::log(y[k]);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
        sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
    }
    return sxy / sxx;
}

}  // namespace detail

/// Schedules must move every parameter monotonically toward its limit value.
inline void validate_schedule(const std::vector<RegParams>& schedule)
{
    if (schedule.empty()) throw ValidationError("continuation schedule is empty");
    for (const auto& p : schedule) p.validate();
    for (std::size_t k = 1; k < schedule.size(); ++k) {
        const auto& a = schedule[k - 1];
        const auto& b = schedule[k];
        if (b.kappa > a.kappa || b.eps > a.eps || b.rho > a.rho || b.M < a.M) {
            throw ValidationError("continuation schedule is not monotone toward the limit at entry " +
                                  std::to_string(k + 1));
        }
        if (b.beta != a.beta) throw ValidationError("beta must be constant along a continuation schedule");
    }
}

/// Runs every schedule entry and the limit system to opts.t_final and
/// compares final states.
inline ContinuationReport continuation_study(const Grid& grid, const CouplingSpec& coupling,
                                             const SpeciesState& initial, const std::vector<RegParams>& schedule,
                                             const RunOptions& opts, ModelOptions model_opts = {})
{
    validate_schedule(schedule);
    ContinuationReport report;
    report.limit.beta = schedule.front().beta;

    RunOptions quiet = opts;
    quiet.keep_snapshots = false;
    quiet.log_steps = false;
    quiet.out_every = std::numeric_limits<int>::max();

    const Model limit_model(grid, coupling, report.limit, model_opts);
    const SpeciesState limit_state = run(limit_model, initial, quiet).final_state;

    for (const auto& p : schedule) {
        ContinuationEntry entry;
        entry.params = p;
        try {
            const Model m(grid, coupling, p, model_opts);
            entry.final_state = run(m, initial, quiet).final_state;
            entry.l1_to_limit = detail::sum_distance(entry.final_state, limit_state, true);
            entry.l2_to_limit = detail::sum_distance(entry.final_state, limit_state, false);
        } catch (const std::exception& e) {
            entry.ok = false;
            entry.failure = e.what();
            report.complete = false;
        }
        report.entries.push_back(std::move(entry));
    }
    for (std::size_t k = 0; k + 1 < report.entries.size(); ++k) {
        auto& a = report.entries[k];
        const auto& b = report.entries[k + 1];
        if (!a.ok || !b.ok) continue;
        a.l1_to_next = detail::sum_distance(a.final_state, b.final_state, true);
        a.l2_to_next = detail::sum_distance(a.final_state, b.final_state, false);
        if (b.l1_to_limit > 1.1 * a.l1_to_limit) report.monotone = false;
    }

    // Identify a single varied parameter for the slope fit.
    std::vector<std::string> varied;
    for (const char* name : {"kappa", "eps", "rho", "M"}) {
        for (std::size_t k = 1; k < schedule.size(); ++k) {
            if (detail::param_value(schedule[k], name) != detail::param_value(schedule[0], name)) {
                varied.emplace_back(name);
                break;
            }
        }
    }
    if (varied.size() == 1 && report.complete) {
        report.varied = varied.front();
        std::vector<double> x, y;
        for (const auto& e : report.entries) {
            const double v = detail::param_value(e.params, report.varied);
            const double pv = report.varied == "M" ? 1.0 / v : v;
            if (pv > 0.0 && std::isfinite(pv) && e.l1_to_limit > 0.0) {
                x.push_back(pv);
                y.push_back(e.l1_to_limit);
            }
        }
        if (x.size() >= 2) report.slope = detail::loglog_slope(x, y);
    }
    return report;
}

}  // namespace fracross
