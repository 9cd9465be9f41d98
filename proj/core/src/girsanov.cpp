#include "randctl/girsanov.hpp"

#include "parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace randctl {

IntensityControl IntensityControl::constant(double nu, std::string id) {
    if (!(nu > 0.0) || !std::isfinite(nu)) {
        throw ValidationError("nu", "intensity must be positive and finite");
    }
    IntensityControl c;
    c.kind_ = Kind::constant;
    c.constant_ = nu;
    c.nu_min_ = nu;
    c.nu_max_ = nu;
    c.id_ = id.empty() ? "constant-" + nlohmann::json(nu).dump() : std::move(id);
    return c;
}

IntensityControl IntensityControl::feedback(TimeGrid time, StateGrid grid, std::size_t controls,
                                            std::vector<double> table, std::string id) {
    if (table.size() != time.steps * grid.size() * controls * controls || table.empty()) {
        throw ValidationError("nu", "feedback table has the wrong size");
    }
    IntensityControl c;
    c.kind_ = Kind::feedback;
    c.time_ = time;
    c.grid_ = std::move(grid);
    c.controls_ = controls;
    c.nu_min_ = *std::min_element(table.begin(), table.end());
    c.nu_max_ = *std::max_element(table.begin(), table.end());
    if (!(c.nu_min_ > 0.0) || !std::isfinite(c.nu_max_)) {
        throw ValidationError("nu", "feedback values must lie in (0, inf)");
    }
    c.table_ = std::move(table);
    c.id_ = std::move(id);
    return c;
}

std::size_t IntensityControl::step_of(double t) const noexcept {
    if (kind_ == Kind::constant) {
        return 0;
    }
    const double u = std::floor((t - time_.t0) / time_.dt() + 1e-9);
    return static_cast<std::size_t>(std::clamp(u, 0.0, static_cast<double>(time_.steps - 1)));
}

std::size_t IntensityControl::cell_of(std::span<const double> x) const noexcept {
    return kind_ == Kind::constant ? 0 : grid_.nearest(x);
}

double IntensityControl::at(std::size_t step, std::size_t cell, std::size_t a, std::size_t b) const noexcept {
    if (kind_ == Kind::constant) {
        return constant_;
    }
    return table_[((step * grid_.size() + cell) * controls_ + a) * controls_ + b];
}

double IntensityControl::operator()(double t, std::span<const double> x, std::size_t a, std::size_t b) const noexcept {
    return at(step_of(t), cell_of(x), a, b);
}

double DoleansWeight::kappa() const noexcept { return std::exp(log_kappa_t); }

namespace {

/// int (1 - nu(b)) lambda0(db) for fixed (step, cell, regime).
double deficit_rate(const ProblemSpec& spec, const IntensityControl& nu, std::size_t step, std::size_t cell,
                    std::size_t a) {
    const auto& w = spec.randomization.lambda0_weights;
    double s = 0.0;
    for (std::size_t b = 0; b < w.size(); ++b) {
        s += (1.0 - nu.at(step, cell, a, b)) * w[b];
    }
    return s;
}

} // namespace

DoleansWeight doleans_exponential(const ProblemSpec& spec, const SimulatedPath& path, const IntensityControl& nu,
                                  bool running) {
    DoleansWeight out;
    const auto& sp = path.state;
    if (running) {
        out.log_running.assign(sp.steps + 1, 0.0);
    }
    const auto& events = path.theta.events;
    std::size_t e = 0;
    while (e < events.size() && events[e].time <= sp.t0) {
        ++e;
    }
    double log_kappa = 0.0;
    for (std::size_t k = 0; k < sp.steps; ++k) {
        const double t = sp.time(k);
        const double t1 = k + 1 == sp.steps ? path.theta.horizon : sp.time(k + 1);
        const std::size_t step = nu.step_of(t);
        const std::size_t cell = nu.cell_of(sp.node(k));
        std::size_t a = path.control.regime_at(t);
        double segment_start = t;
        for (; e < events.size() && (events[e].time <= t1 || k + 1 == sp.steps); ++e) {
            const auto& ev = events[e];
            log_kappa += (ev.time - segment_start) * deficit_rate(spec, nu, step, cell, a);
            log_kappa += std::log(nu.at(step, cell, a, ev.control));
            a = ev.control;
            segment_start = ev.time;
        }
        log_kappa += (t1 - segment_start) * deficit_rate(spec, nu, step, cell, a);
        if (running) {
            out.log_running[k + 1] = log_kappa;
        }
    }
    out.log_kappa_t = log_kappa;
    return out;
}

Estimate reweighted_expectation(const ProblemSpec& spec, const PathBundle& bundle, const IntensityControl& nu,
                                const PathPayoff& payoff) {
    if (bundle.paths.empty()) {
        throw Error("reweighted_expectation: empty bundle");
    }
    std::vector<double> samples(bundle.paths.size());
    detail::parallel_for(samples.size(), [&](std::size_t i) {
        const auto& path = bundle.paths[i];
        samples[i] = doleans_exponential(spec, path, nu).kappa() * payoff(path);
    });
    return estimate_of(samples);
}

double path_gain(const ProblemSpec& spec, const SimulatedPath& path) {
    const auto& sp = path.state;
    CompensatedSum sum;
    for (std::size_t k = 0; k < sp.steps; ++k) {
        sum.add(spec.running_reward(sp.time(k), sp.node(k), sp.step_controls[k]) * sp.dt);
    }
    sum.add(spec.terminal(sp.node(sp.steps)));
    return sum.value();
}

SimulatedPath simulate_tilted_path(const ProblemSpec& spec, const IntensityControl& nu, const BundleOptions& options,
                                   std::uint64_t index, std::optional<std::size_t> stop_step) {
    const std::size_t steps = options.n_steps;
    const std::size_t run = std::min(stop_step.value_or(steps), steps);
    const auto n = static_cast<std::size_t>(spec.state_dim());
    const double t0 = options.t0;

    SimulatedPath out;
    out.index = index;
    auto& sp = out.state;
    sp.t0 = t0;
    sp.steps = steps;
    sp.dim = n;
    sp.dt = (spec.horizon - t0) / static_cast<double>(steps);
    sp.states.assign((steps + 1) * n, std::numeric_limits<double>::quiet_NaN());
    sp.step_controls.assign(steps, 0);

    const auto initial = draw_initial_state(spec, options, index);
    out.brownian = draw_brownian(spec, steps, sp.dt, options.seed, index);
    out.pi = simulate_poisson_measure(spec.jump_measure.total_rate, MarkSampler::pi(spec.jump_measure), t0,
                                      spec.horizon, {options.seed, index, Stream::pi_measure});
    out.theta.measure = MeasureId::theta;
    out.theta.start = t0;
    out.theta.horizon = run == steps ? spec.horizon : sp.time(run);

    const std::size_t start_mark = options.start_mark.value_or(spec.randomization.a0_index);
    out.control.switch_times.push_back(t0);
    out.control.regimes.push_back(start_mark);

    const MarkSampler proposals_law = MarkSampler::theta(spec.randomization);
    CounterRng proposals({options.seed, index, Stream::theta_measure});
    CounterRng acceptance({options.seed, index, Stream::theta_acceptance});
    const double dominating = nu.nu_max() * spec.randomization.total_mass();

    const StepIntegrator integrator(spec, sp.dt);
    std::array<double, kMaxState> x{};
    std::copy(initial.begin(), initial.end(), x.begin());
    const std::span<double> state(x.data(), n);
    std::copy(state.begin(), state.end(), sp.states.begin());

    std::size_t regime = start_mark;
    std::size_t e = 0;
    for (std::size_t k = 0; k < run; ++k) {
        const double t = sp.time(k);
        const bool last = k + 1 == steps;
        const double t1 = last ? spec.horizon : sp.time(k + 1);
        const std::size_t a = regime;
        sp.step_controls[k] = a;
        const std::size_t step = nu.step_of(t);
        const std::size_t cell = nu.cell_of(state);

        // Thinning: candidate marks ~ lambda0, accepted with nu / nu_max.
        for (double clock = t + proposals.exponential(dominating); clock <= t1;
             clock += proposals.exponential(dominating)) {
            Event ev;
            ev.time = clock;
            proposals_law.draw(proposals, ev);
            if (acceptance.uniform() * nu.nu_max() < nu.at(step, cell, regime, ev.control)) {
                out.theta.events.push_back(ev);
                out.control.switch_times.push_back(ev.time);
                out.control.regimes.push_back(ev.control);
                regime = ev.control;
            }
        }

        integrator.flow(t, state, a, out.brownian.step(k));
        const double jump_bound = last ? std::numeric_limits<double>::infinity() : t1;
        for (; e < out.pi.events.size() && out.pi.events[e].time <= jump_bound; ++e) {
            const auto& ev = out.pi.events[e];
            integrator.jump(ev.time, state, out.control.regime_before(ev.time), ev.z);
            sp.jump_times.push_back(ev.time);
            sp.jump_states.insert(sp.jump_states.end(), state.begin(), state.end());
        }
        if (!std::all_of(state.begin(), state.end(), [](double v) { return std::isfinite(v); })) {
            sp.overflow = true;
            break;
        }
        std::copy(state.begin(), state.end(), sp.states.begin() + static_cast<std::ptrdiff_t>((k + 1) * n));
    }
    return out;
}

PathBundle simulate_tilted_bundle(const ProblemSpec& spec, const IntensityControl& nu, const BundleOptions& options,
                                  std::optional<std::size_t> stop_step) {
    PathBundle bundle;
    bundle.seed = options.seed;
    bundle.spec_fingerprint = fingerprint(spec);
    bundle.n_steps = options.n_steps;
    bundle.t0 = options.t0;
    bundle.dt = (spec.horizon - options.t0) / static_cast<double>(options.n_steps);
    std::vector<SimulatedPath> all(options.paths);
    detail::parallel_for(options.paths, [&](std::size_t i) {
        all[i] = simulate_tilted_path(spec, nu, options, options.index_offset + i, stop_step);
    });
    for (auto& p : all) {
        if (p.state.overflow) {
            ++bundle.overflow_count;
        } else {
            bundle.paths.push_back(std::move(p));
        }
    }
    return bundle;
}

TiltedTheta simulate_tilted_theta(const ProblemSpec& spec, const IntensityControl& nu, const BundleOptions& options,
                                  std::uint64_t index) {
    auto path = simulate_tilted_path(spec, nu, options, index);
    return {std::move(path.theta), std::move(path.control)};
}

std::string_view to_string(GainMode mode) noexcept { return mode == GainMode::reweight ? "reweight" : "tilted"; }

std::string GainEstimate::to_json() const {
    return nlohmann::json{{"nu_id", nu_id},
                          {"mode", std::string(randctl::to_string(mode))},
                          {"mean", estimate.mean},
                          {"se", estimate.standard_error},
                          {"n_paths", estimate.samples},
                          {"seed", seed}}
        .dump();
}

GainEstimate randomized_gain(const ProblemSpec& spec, const IntensityControl& nu, const GainOptions& options,
                             GainMode mode) {
    if (options.paths == 0) {
        throw Error("randomized_gain: no paths");
    }
    BundleOptions bo;
    bo.paths = options.paths;
    bo.n_steps = options.n_steps;
    bo.seed = options.seed;
    bo.x0 = options.x0;
    std::vector<double> samples(options.paths, std::numeric_limits<double>::quiet_NaN());
    detail::parallel_for(options.paths, [&](std::size_t i) {
        if (mode == GainMode::reweight) {
            const auto path = simulate_path(spec, bo, i);
            if (!path.state.overflow) {
                samples[i] = doleans_exponential(spec, path, nu).kappa() * path_gain(spec, path);
            }
        } else {
            const auto path = simulate_tilted_path(spec, nu, bo, i);
            if (!path.state.overflow) {
                samples[i] = path_gain(spec, path);
            }
        }
    });
    std::erase_if(samples, [](double v) { return std::isnan(v); });
    GainEstimate g;
    g.nu_id = nu.id();
    g.mode = mode;
    g.seed = options.seed;
    g.estimate = estimate_of(samples);
    return g;
}

ModeComparison compare_gain_modes(const ProblemSpec& spec, const IntensityControl& nu, const GainOptions& options,
                                  double se_multiple) {
    ModeComparison c;
    c.reweight = randomized_gain(spec, nu, options, GainMode::reweight);
    GainOptions tilted = options;
    tilted.seed = splitmix64(options.seed ^ 0x74696c746564ULL);
    c.tilted = randomized_gain(spec, nu, tilted, GainMode::tilted);
    c.difference = c.reweight.estimate.mean - c.tilted.estimate.mean;
    c.combined_se = std::hypot(c.reweight.estimate.standard_error, c.tilted.estimate.standard_error);
    c.agree = std::abs(c.difference) <= se_multiple * c.combined_se + 1e-12;
    return c;
}

} // namespace randctl
