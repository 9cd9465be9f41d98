#include "randctl/dp.hpp"

#include "parallel.hpp"
#include "randctl/csv.hpp"
#include "randctl/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>

namespace randctl {

double DpField::value_at(std::size_t k, std::span<const double> x) const {
    bool clamped = false;
    return grid.interpolate(values[k], x, clamped);
}

DpField solve_dp_grid(const ProblemSpec& spec, const TimeGrid& time, const StateGrid& grid,
                      const KernelOptions& kernel_options, std::uint64_t seed) {
    const TransitionKernel kernel(spec, time, kernel_options, seed);
    const std::size_t steps = time.steps;
    const std::size_t nodes = grid.size();
    const std::size_t controls = spec.control_count();
    const std::size_t n = grid.dims();
    const double dt = time.dt();

    DpField dp;
    dp.time = time;
    dp.grid = grid;
    dp.controls = controls;
    dp.kernel_checksum = kernel.checksum();
    dp.spec_fingerprint = fingerprint(spec);
    dp.values.assign(steps + 1, std::vector<double>(nodes));
    dp.policy.assign(steps, std::vector<std::uint32_t>(nodes, 0));

    std::vector<double> x(n);
    for (std::size_t node = 0; node < nodes; ++node) {
        grid.point(node, x);
        dp.values[steps][node] = spec.terminal(x);
    }
    std::vector<ClampStats> node_clamps(nodes);
    for (std::size_t k = steps; k-- > 0;) {
        const double t = time.time(k);
        const std::span<const double> next(dp.values[k + 1]);
        detail::parallel_for(nodes, [&](std::size_t node) {
            std::array<double, kMaxState> point{};
            const std::span<double> xs(point.data(), n);
            grid.point(node, xs);
            double best = -std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            for (std::size_t a = 0; a < controls; ++a) {
                const double v =
                    kernel.expectation(grid, next, k, xs, a, node, node_clamps[node]) + spec.running_reward(t, xs, a) * dt;
                if (v > best) {
                    best = v;
                    arg = static_cast<std::uint32_t>(a);
                }
            }
            dp.values[k][node] = best;
            dp.policy[k][node] = arg;
        }, 16);
    }
    for (const auto& c : node_clamps) {
        dp.clamps.merge(c);
    }
    return dp;
}

ValueEqualityVerdict value_equality_check(const ProblemSpec& spec, const DpField& dp, const RandomizedValue& randomized,
                                          const Tolerances& tolerances) {
    const auto fp = fingerprint(spec);
    if (dp.spec_fingerprint != fp || randomized.spec_fingerprint != fp) {
        throw SpecMismatch("DP field, randomized value and problem fingerprints differ");
    }
    if (std::abs(dp.time.horizon - randomized.horizon) > 1e-12 || std::abs(spec.horizon - dp.time.horizon) > 1e-12) {
        throw SpecMismatch("horizons differ (" + std::to_string(dp.time.horizon) + " vs " +
                           std::to_string(randomized.horizon) + ")");
    }
    if (randomized.kernel_checksum != 0 && randomized.kernel_checksum != dp.kernel_checksum) {
        throw SpecMismatch("transition kernels differ between the DP and penalized solvers");
    }
    ValueEqualityVerdict v;
    const auto x0 = spec.initial_state(spec.initial_law.mean);
    v.v0_dp = dp.value_at(0, x0);
    v.v0_bsde = randomized.ladder.limit;
    v.bsde_gap = std::abs(v.v0_dp - v.v0_bsde);
    v.bsde_pass = v.bsde_gap <= tolerances.tol_value + tolerances.se_multiple * randomized.ladder.limit_se;
    double previous_gap = std::numeric_limits<double>::infinity();
    double previous_se = 0.0;
    for (const auto& g : randomized.tilt_gains) {
        if (g.mean > v.v0_dp + tolerances.se_multiple * g.standard_error) {
            v.tilt_dominated = false;
        }
        const double gap = v.v0_dp - g.mean;
        if (gap > previous_gap + tolerances.se_multiple * std::hypot(g.standard_error, previous_se)) {
            v.tilt_gap_shrinks = false;
        }
        previous_gap = gap;
        previous_se = g.standard_error;
    }
    v.pass = v.bsde_pass && v.tilt_dominated && v.tilt_gap_shrinks;
    return v;
}

RolloutReport policy_rollout(const ProblemSpec& spec, const DpField& dp, std::size_t paths, std::uint64_t seed,
                             const Tolerances& tolerances) {
    if (dp.spec_fingerprint != fingerprint(spec)) {
        throw SpecMismatch("DP field was solved for a different problem");
    }
    BundleOptions opts;
    opts.n_steps = dp.time.steps;
    opts.t0 = dp.time.t0;
    opts.seed = seed;
    const auto feedback = [&dp](std::size_t k, double, std::span<const double> x) -> std::size_t {
        return dp.policy[std::min(k, dp.policy.size() - 1)][dp.grid.nearest(x)];
    };
    ControlSource control;
    control.feedback = feedback;
    std::vector<double> samples(paths, std::numeric_limits<double>::quiet_NaN());
    detail::parallel_for(paths, [&](std::size_t i) {
        const auto initial = draw_initial_state(spec, opts, i);
        const auto brownian = draw_brownian(spec, opts.n_steps, dp.time.dt(), seed, i);
        const auto pi = simulate_poisson_measure(spec.jump_measure.total_rate, MarkSampler::pi(spec.jump_measure),
                                                 opts.t0, spec.horizon, {seed, i, Stream::pi_measure});
        const auto sp = integrate_state(spec, control, brownian, pi, opts.t0, initial, opts.n_steps);
        if (sp.overflow) {
            return;
        }
        CompensatedSum sum;
        for (std::size_t k = 0; k < sp.steps; ++k) {
            sum.add(spec.running_reward(sp.time(k), sp.node(k), sp.step_controls[k]) * sp.dt);
        }
        sum.add(spec.terminal(sp.node(sp.steps)));
        samples[i] = sum.value();
    });
    std::erase_if(samples, [](double v) { return std::isnan(v); });
    RolloutReport r;
    r.gain = estimate_of(samples);
    r.v0 = dp.value_at(0, spec.initial_state(spec.initial_law.mean));
    const double band = tolerances.se_multiple * r.gain.standard_error;
    r.upper_ok = r.gain.mean <= r.v0 + band + 1e-12;
    r.lower_ok = r.gain.mean >= r.v0 - band - tolerances.tol_value;
    return r;
}

void write_dp_csv(const ProblemSpec& spec, const DpField& dp, std::ostream& out) {
    csv::Writer w(out);
    std::vector<std::string> header{"t"};
    for (int i = 0; i < spec.dim; ++i) {
        header.push_back("x" + std::to_string(i));
    }
    if (spec.augmentation != Augmentation::none) {
        header.emplace_back("y");
    }
    header.insert(header.end(), {"value", "argmax"});
    w.header(header);
    std::vector<double> x(dp.grid.dims());
    std::vector<std::string> row;
    for (std::size_t k = 0; k <= dp.time.steps; ++k) {
        const std::string t = csv::format_number(dp.time.time(k));
        for (std::size_t node = 0; node < dp.grid.size(); ++node) {
            dp.grid.point(node, x);
            row.clear();
            row.push_back(t);
            for (double v : x) {
                row.push_back(csv::format_number(v));
            }
            row.push_back(csv::format_number(dp.values[k][node]));
            row.push_back(k < dp.time.steps ? std::to_string(dp.policy[k][node]) : std::string{});
            w.row(row);
        }
    }
}

} // namespace randctl
