#include "randctl/sim.hpp"

#include "parallel.hpp"
#include "randctl/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace randctl {

bool EventLog::well_formed() const noexcept {
    double prev = start;
    for (const auto& e : events) {
        if (!(e.time > prev) || e.time > horizon) {
            return false;
        }
        prev = e.time;
    }
    return true;
}

MarkSampler MarkSampler::pi(const JumpMeasureSpec& jumps) {
    MarkSampler s;
    s.measure_ = MeasureId::pi;
    s.jumps_ = jumps;
    return s;
}

MarkSampler MarkSampler::theta(const RandomizationSpec& randomization) {
    MarkSampler s;
    s.measure_ = MeasureId::theta;
    double total = 0.0;
    for (double w : randomization.lambda0_weights) {
        total += w;
        s.cumulative_.push_back(total);
    }
    for (double& c : s.cumulative_) {
        c /= total;
    }
    return s;
}

namespace {

double param(const JumpMeasureSpec& jumps, std::string_view key, double fallback) {
    const auto it = jumps.mark_parameters.find(key);
    return it == jumps.mark_parameters.end() ? fallback : it->second;
}

} // namespace

void MarkSampler::draw(CounterRng& rng, Event& event) const {
    const double u = rng.uniform();
    if (measure_ == MeasureId::theta) {
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        event.control = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
        return;
    }
    switch (jumps_.mark_law) {
    case MarkLaw::two_point:
        event.z = u < param(jumps_, "p_hi", 0.5) ? param(jumps_, "z_hi", 1.0) : param(jumps_, "z_lo", -1.0);
        break;
    case MarkLaw::uniform_interval: {
        const double lo = param(jumps_, "lo", -1.0);
        event.z = lo + (param(jumps_, "hi", 1.0) - lo) * u;
        break;
    }
    case MarkLaw::exponential:
        event.z = -std::log(u) / param(jumps_, "rate", 1.0);
        break;
    }
}

EventLog simulate_poisson_measure(double rate, const MarkSampler& marks, double t0, double horizon, StreamKey key) {
    EventLog log;
    log.measure = marks.measure();
    log.start = t0;
    log.horizon = horizon;
    if (!(rate > 0.0)) {
        return log;
    }
    CounterRng rng(key);
    double t = t0;
    for (;;) {
        t += rng.exponential(rate);
        if (t > horizon) {
            break;
        }
        Event e;
        e.time = t;
        marks.draw(rng, e);
        log.events.push_back(e);
    }
    return log;
}

std::size_t ControlJumpPath::regime_at(double t) const noexcept {
    const auto it = std::upper_bound(switch_times.begin(), switch_times.end(), t);
    const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - switch_times.begin() - 1, 0));
    return regimes[i];
}

std::size_t ControlJumpPath::regime_before(double t) const noexcept {
    const auto it = std::lower_bound(switch_times.begin(), switch_times.end(), t);
    const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - switch_times.begin() - 1, 0));
    return regimes[i];
}

ControlJumpPath build_control_path(const EventLog& theta, double start_time, std::size_t start_mark) {
    ControlJumpPath path;
    path.switch_times.push_back(start_time);
    path.regimes.push_back(start_mark);
    for (const auto& e : theta.events) {
        if (e.time <= start_time) {
            continue;
        }
        path.switch_times.push_back(e.time);
        path.regimes.push_back(e.control);
    }
    return path;
}

StepIntegrator::StepIntegrator(const ProblemSpec& spec, double dt, int compensator_nodes) : spec_(&spec), dt_(dt) {
    for (int i = 0; i < spec.state_dim(); ++i) {
        decay_.push_back(std::exp(spec.eigenvalue(i) * dt));
    }
    if (spec.jump_measure.total_rate > 0.0) {
        compensator_atoms_ = mark_atoms(spec.jump_measure, compensator_nodes);
    }
}

FrozenStep StepIntegrator::freeze(double t, std::span<const double> state, std::size_t a) const {
    const auto n = static_cast<std::size_t>(spec_->state_dim());
    const auto m = static_cast<std::size_t>(spec_->noise_dim());
    FrozenStep f;
    spec_->drift(t, state, a, std::span<double>(f.drift.data(), n));
    if (!compensator_atoms_.empty()) {
        std::array<double, kMaxState> gamma{};
        const double rate = spec_->jump_measure.total_rate;
        for (const auto& atom : compensator_atoms_) {
            spec_->jump(t, state, a, atom.z, std::span<double>(gamma.data(), n));
            for (std::size_t i = 0; i < n; ++i) {
                f.drift[i] -= rate * atom.weight * gamma[i];
            }
        }
    }
    if (m > 0) {
        spec_->diffusion(t, state, a, std::span<double>(f.sigma.data(), n * m));
        f.has_noise = std::any_of(f.sigma.begin(), f.sigma.begin() + static_cast<std::ptrdiff_t>(n * m),
                                  [](double v) { return v != 0.0; });
    }
    return f;
}

void StepIntegrator::flow(const FrozenStep& frozen, std::span<double> state, std::span<const double> dW) const {
    const auto n = static_cast<std::size_t>(spec_->state_dim());
    const auto m = dW.size();
    for (std::size_t i = 0; i < n; ++i) {
        double inc = frozen.drift[i] * dt_;
        if (frozen.has_noise) {
            for (std::size_t j = 0; j < m; ++j) {
                inc += frozen.sigma[i * m + j] * dW[j];
            }
        }
        state[i] = decay_[i] * (state[i] + inc);
    }
    spec_->update_augmentation(state);
}

void StepIntegrator::flow(double t, std::span<double> state, std::size_t a, std::span<const double> dW) const {
    flow(freeze(t, state, a), state, dW);
}

void StepIntegrator::jump(double t, std::span<double> state, std::size_t a, double z) const {
    const auto n = static_cast<std::size_t>(spec_->state_dim());
    std::array<double, kMaxState> gamma{};
    spec_->jump(t, state, a, z, std::span<double>(gamma.data(), n));
    for (std::size_t i = 0; i < n; ++i) {
        state[i] += gamma[i];
    }
    spec_->update_augmentation(state);
}

ControlSource ControlSource::constant(std::size_t a) {
    ControlSource c;
    c.feedback = [a](std::size_t, double, std::span<const double>) { return a; };
    return c;
}

ControlSource ControlSource::randomized(const ControlJumpPath& path) {
    ControlSource c;
    c.path = &path;
    return c;
}

StatePath integrate_state(const ProblemSpec& spec, const ControlSource& control, const BrownianRecord& brownian,
                          const EventLog& pi, double t0, std::span<const double> initial, std::size_t n_steps) {
    if (n_steps < 1) {
        throw Error("integrate_state: n_steps must be >= 1");
    }
    const auto n = static_cast<std::size_t>(spec.state_dim());
    StatePath path;
    path.t0 = t0;
    path.steps = n_steps;
    path.dim = n;
    path.dt = (spec.horizon - t0) / static_cast<double>(n_steps);
    path.states.assign((n_steps + 1) * n, std::numeric_limits<double>::quiet_NaN());
    path.step_controls.assign(n_steps, 0);

    const StepIntegrator integrator(spec, path.dt);
    std::array<double, kMaxState> x{};
    std::copy(initial.begin(), initial.end(), x.begin());
    const std::span<double> state(x.data(), n);
    std::copy(state.begin(), state.end(), path.states.begin());

    std::size_t e = 0;
    while (e < pi.events.size() && pi.events[e].time <= t0) {
        ++e;
    }
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = path.time(k);
        const bool last = k + 1 == n_steps;
        const double t1 = last ? std::numeric_limits<double>::infinity() : path.time(k + 1);
        const std::size_t a = control.path ? control.path->regime_at(t) : control.feedback(k, t, state);
        path.step_controls[k] = a;
        integrator.flow(t, state, a, brownian.step(k));
        for (; e < pi.events.size() && pi.events[e].time <= t1; ++e) {
            const auto& ev = pi.events[e];
            const std::size_t before = control.path ? control.path->regime_before(ev.time) : a;
            integrator.jump(ev.time, state, before, ev.z);
            path.jump_times.push_back(ev.time);
            path.jump_states.insert(path.jump_states.end(), state.begin(), state.end());
        }
        if (!std::all_of(state.begin(), state.end(), [](double v) { return std::isfinite(v); })) {
            path.overflow = true;
            break;
        }
        std::copy(state.begin(), state.end(), path.states.begin() + static_cast<std::ptrdiff_t>((k + 1) * n));
    }
    return path;
}

std::vector<double> draw_initial_state(const ProblemSpec& spec, const BundleOptions& options, std::uint64_t index) {
    std::vector<double> x0;
    if (options.x0) {
        x0 = *options.x0;
    } else {
        x0 = spec.initial_law.mean;
        if (spec.initial_law.kind == InitialLaw::Kind::gaussian) {
            CounterRng rng({options.seed, index, Stream::initial_state});
            for (std::size_t i = 0; i < x0.size(); ++i) {
                x0[i] += std::sqrt(spec.initial_law.variances[i]) * rng.normal();
            }
        }
    }
    if (x0.size() != static_cast<std::size_t>(spec.dim)) {
        throw ValidationError("x0", "expected " + std::to_string(spec.dim) + " coordinates");
    }
    return spec.initial_state(x0);
}

BrownianRecord draw_brownian(const ProblemSpec& spec, std::size_t n_steps, double dt, std::uint64_t seed,
                             std::uint64_t index) {
    BrownianRecord record;
    record.steps = n_steps;
    record.dim = static_cast<std::size_t>(spec.noise_dim());
    record.increments.resize(n_steps * record.dim);
    CounterRng rng({seed, index, Stream::brownian});
    const double scale = std::sqrt(dt);
    for (double& v : record.increments) {
        v = scale * rng.normal();
    }
    return record;
}

SimulatedPath simulate_path(const ProblemSpec& spec, const BundleOptions& options, std::uint64_t index) {
    SimulatedPath out;
    out.index = index;
    const double t0 = options.t0;
    const double dt = (spec.horizon - t0) / static_cast<double>(options.n_steps);
    const auto initial = draw_initial_state(spec, options, index);
    out.brownian = draw_brownian(spec, options.n_steps, dt, options.seed, index);
    out.pi = simulate_poisson_measure(spec.jump_measure.total_rate, MarkSampler::pi(spec.jump_measure), t0,
                                      spec.horizon, {options.seed, index, Stream::pi_measure});
    if (options.constant_control) {
        out.theta.measure = MeasureId::theta;
        out.theta.start = t0;
        out.theta.horizon = spec.horizon;
        out.control = build_control_path(out.theta, t0, *options.constant_control);
    } else {
        out.theta = simulate_poisson_measure(spec.randomization.total_mass(), MarkSampler::theta(spec.randomization),
                                             t0, spec.horizon, {options.seed, index, Stream::theta_measure});
        out.control = build_control_path(out.theta, t0, options.start_mark.value_or(spec.randomization.a0_index));
    }
    out.state = integrate_state(spec, ControlSource::randomized(out.control), out.brownian, out.pi, t0, initial,
                                options.n_steps);
    return out;
}

PathBundle simulate_bundle(const ProblemSpec& spec, const BundleOptions& options) {
    if (options.n_steps < 1) {
        throw Error("simulate_bundle: n_steps must be >= 1");
    }
    PathBundle bundle;
    bundle.seed = options.seed;
    bundle.spec_fingerprint = fingerprint(spec);
    bundle.n_steps = options.n_steps;
    bundle.t0 = options.t0;
    bundle.dt = (spec.horizon - options.t0) / static_cast<double>(options.n_steps);
    std::vector<SimulatedPath> all(options.paths);
    detail::parallel_for(options.paths, [&](std::size_t i) {
        all[i] = simulate_path(spec, options, options.index_offset + i);
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

namespace {

double core_norm(const ProblemSpec& spec, std::span<const double> state) {
    double s = 0.0;
    for (int i = 0; i < spec.dim; ++i) {
        s += state[static_cast<std::size_t>(i)] * state[static_cast<std::size_t>(i)];
    }
    return std::sqrt(s);
}

} // namespace

MomentReport empirical_moment_check(const ProblemSpec& spec, const PathBundle& bundle, double p,
                                    std::optional<double> cp) {
    if (bundle.paths.empty()) {
        throw Error("no paths");
    }
    MomentReport report;
    report.p = p;
    report.cp = cp.value_or(spec.regularity.moment_cp.value_or(1.0));
    CompensatedSum sup_sum;
    CompensatedSum start_sum;
    for (const auto& path : bundle.paths) {
        const auto& sp = path.state;
        double sup = 0.0;
        for (std::size_t k = 0; k <= sp.steps; ++k) {
            sup = std::max(sup, core_norm(spec, sp.node(k)));
        }
        for (std::size_t j = 0; j < sp.jump_times.size(); ++j) {
            sup = std::max(sup, core_norm(spec, std::span<const double>(sp.jump_states.data() + j * sp.dim, sp.dim)));
        }
        sup_sum.add(std::pow(sup, p));
        start_sum.add(std::pow(core_norm(spec, sp.node(0)), p));
    }
    const double m = static_cast<double>(bundle.paths.size());
    report.sup_moment = sup_sum.value() / m;
    report.bound_ratio = report.sup_moment / (report.cp * (1.0 + start_sum.value() / m));
    return report;
}

double calibrate_moment_constant(const ProblemSpec& spec, double p, std::size_t n_steps, std::size_t paths,
                                 std::uint64_t seed) {
    double cp = 1.0;
    for (int start = 0; start < 2; ++start) {
        BundleOptions opts;
        opts.paths = paths;
        opts.n_steps = n_steps;
        opts.seed = seed;
        opts.x0 = std::vector<double>(static_cast<std::size_t>(spec.dim), 0.0);
        (*opts.x0)[0] = static_cast<double>(start);
        const auto bundle = simulate_bundle(spec, opts);
        const auto report = empirical_moment_check(spec, bundle, p, 1.0);
        cp = std::max(cp, report.bound_ratio);
    }
    return cp;
}

void write_bundle_csv(const ProblemSpec& spec, const PathBundle& bundle, std::ostream& out) {
    csv::Writer w(out);
    std::vector<std::string> header{"path", "step", "t"};
    for (int i = 0; i < spec.dim; ++i) {
        header.push_back("x" + std::to_string(i));
    }
    if (spec.augmentation != Augmentation::none) {
        header.emplace_back("y");
    }
    header.emplace_back("control");
    w.header(header);
    std::vector<std::string> row;
    for (const auto& path : bundle.paths) {
        const auto& sp = path.state;
        for (std::size_t k = 0; k <= sp.steps; ++k) {
            row.clear();
            row.push_back(std::to_string(path.index));
            row.push_back(std::to_string(k));
            row.push_back(csv::format_number(sp.time(k)));
            for (double v : sp.node(k)) {
                row.push_back(csv::format_number(v));
            }
            const std::size_t a = k < sp.steps ? sp.step_controls[k] : path.control.regime_at(sp.time(k));
            row.push_back(std::to_string(a));
            w.row(row);
        }
    }
}

std::string bundle_metadata_json(const ProblemSpec& spec, const PathBundle& bundle) {
    nlohmann::json j = {{"problem", spec.name},
                        {"family", std::string(to_string(spec.coefficients.family))},
                        {"spec_fingerprint", bundle.spec_fingerprint},
                        {"seed", bundle.seed},
                        {"paths", bundle.paths.size()},
                        {"overflow_count", bundle.overflow_count},
                        {"scheme", {{"name", "exponential-euler"}, {"n_steps", bundle.n_steps}, {"t0", bundle.t0}, {"dt", bundle.dt}}}};
    return j.dump(2);
}

} // namespace randctl
