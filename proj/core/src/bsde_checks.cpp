#include "randctl/bsde.hpp"

#include "parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace randctl {

namespace {

ConstraintReport from_penalty_samples(int level_n, const std::vector<double>& penalty) {
    ConstraintReport r;
    r.level_n = level_n;
    r.penalty = estimate_of(penalty);
    r.phi = r.penalty.mean * r.penalty.mean;
    CompensatedSum sq;
    for (double v : penalty) {
        sq.add(v * v);
    }
    r.k_ratio = penalty.empty() ? 0.0 : sq.value() / static_cast<double>(penalty.size());
    return r;
}

} // namespace

ConstraintReport constraint_gap(const BsdeQuintuple& quintuple) {
    return from_penalty_samples(quintuple.level_n, quintuple.penalty_integral);
}

ConstraintReport constraint_gap(const ProblemSpec& spec, const PenalizedField& field, const PathBundle& reference) {
    if (reference.n_steps != field.time.steps) {
        throw SpecMismatch("reference bundle and field use different time grids");
    }
    if (reference.spec_fingerprint != field.spec_fingerprint) {
        throw SpecMismatch("reference bundle and field come from different problems");
    }
    const auto& lambda0 = spec.randomization.lambda0_weights;
    const double dt = field.time.dt();
    std::vector<double> penalty(reference.paths.size(), 0.0);
    detail::parallel_for(reference.paths.size(), [&](std::size_t p) {
        const auto& sp = reference.paths[p].state;
        double total = 0.0;
        for (std::size_t k = 0; k < sp.steps; ++k) {
            const auto x = sp.node(k);
            const std::size_t a = sp.step_controls[k];
            const double own = field.continuation_at(k, x, a);
            double rate = 0.0;
            for (std::size_t b = 0; b < field.controls; ++b) {
                rate += lambda0[b] * std::max(field.continuation_at(k, x, b) - own, 0.0);
            }
            total += rate * dt;
        }
        penalty[p] = total;
    });
    return from_penalty_samples(field.level_n, penalty);
}

double richardson_limit(const std::vector<LadderEntry>& levels) {
    if (levels.size() < 3) {
        throw ValidationError("extrapolation", "need ≥ 3 levels for richardson");
    }
    Eigen::Matrix3d m;
    Eigen::Vector3d v;
    for (int i = 0; i < 3; ++i) {
        const auto& e = levels[levels.size() - 3 + static_cast<std::size_t>(i)];
        const double h = 1.0 / e.level_n;
        m(i, 0) = 1.0;
        m(i, 1) = h;
        m(i, 2) = h * h;
        v(i) = e.value;
    }
    return m.fullPivLu().solve(v)(0);
}

MinimalValueReport minimal_value(const std::vector<LadderEntry>& levels, Extrapolation extrapolation, double tol_mono) {
    if (levels.empty()) {
        throw ValidationError("ladder", "no levels");
    }
    for (std::size_t i = 1; i < levels.size(); ++i) {
        if (levels[i].level_n <= levels[i - 1].level_n) {
            throw ValidationError("ladder", "levels must be strictly increasing");
        }
    }
    MinimalValueReport r;
    r.levels = levels;
    r.extrapolation = extrapolation;
    for (std::size_t i = 1; i < levels.size(); ++i) {
        const double drop = levels[i - 1].value - levels[i].value;
        const double allowed = tol_mono + 3.0 * std::hypot(levels[i - 1].standard_error, levels[i].standard_error);
        r.max_violation = std::max(r.max_violation, std::max(drop, 0.0));
        if (drop > allowed) {
            r.monotone = false;
        }
    }
    if (extrapolation == Extrapolation::richardson) {
        r.limit = richardson_limit(levels);
        // Propagate level errors through the (linear) extrapolation weights.
        Eigen::Matrix3d m;
        for (int i = 0; i < 3; ++i) {
            const double h = 1.0 / levels[levels.size() - 3 + static_cast<std::size_t>(i)].level_n;
            m(i, 0) = 1.0;
            m(i, 1) = h;
            m(i, 2) = h * h;
        }
        const Eigen::Vector3d w = m.transpose().fullPivLu().solve(Eigen::Vector3d(1.0, 0.0, 0.0));
        double var = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double se = levels[levels.size() - 3 + static_cast<std::size_t>(i)].standard_error;
            var += w(i) * w(i) * se * se;
        }
        r.limit_se = std::sqrt(var);
    } else {
        r.limit = levels.back().value;
        r.limit_se = levels.back().standard_error;
    }
    return r;
}

std::vector<LadderEntry> ladder_values(const ProblemSpec& spec, const std::vector<PenalizedField>& fields) {
    const auto x0 = spec.initial_state(spec.initial_law.mean);
    std::vector<LadderEntry> out;
    for (const auto& f : fields) {
        out.push_back({f.level_n, f.value_at(0, x0, spec.randomization.a0_index), 0.0});
    }
    return out;
}

MonotoneReport check_monotone(const std::vector<PenalizedField>& ladder, double tol_mono) {
    MonotoneReport r;
    for (std::size_t i = 1; i < ladder.size(); ++i) {
        const auto& lo = ladder[i - 1];
        const auto& hi = ladder[i];
        if (lo.time.steps != hi.time.steps || lo.grid.size() != hi.grid.size() || lo.level_n >= hi.level_n) {
            throw SpecMismatch("ladder levels must share one lattice and increase in n");
        }
        for (std::size_t k = 0; k < lo.values.size(); ++k) {
            for (std::size_t j = 0; j < lo.values[k].size(); ++j) {
                const double drop = lo.values[k][j] - hi.values[k][j];
                r.max_violation = std::max(r.max_violation, drop);
                ++r.nodes_checked;
            }
        }
    }
    r.pass = r.max_violation <= tol_mono;
    return r;
}

GrowthReport check_growth(const ProblemSpec& spec, const std::vector<PenalizedField>& ladder) {
    GrowthReport r;
    const double pbar = spec.regularity.growth_pbar;
    for (const auto& field : ladder) {
        std::vector<double> x(field.grid.dims());
        double ratio = 0.0;
        for (std::size_t node = 0; node < field.grid.size(); ++node) {
            field.grid.point(node, x);
            double sup = 0.0;
            for (double v : x) {
                sup = std::max(sup, std::abs(v));
            }
            const double denom = 1.0 + std::pow(sup, pbar);
            for (std::size_t k = 0; k < field.values.size(); ++k) {
                for (std::size_t a = 0; a < field.controls; ++a) {
                    ratio = std::max(ratio, std::abs(field.value(k, node, a)) / denom);
                }
            }
        }
        r.ratios.push_back(ratio);
    }
    if (!r.ratios.empty()) {
        r.c_bar = r.ratios.front();
        for (double v : r.ratios) {
            r.pass = r.pass && v <= 2.0 * r.c_bar + 1e-12;
        }
    }
    return r;
}

SpreadReport check_a_spread(const std::vector<PenalizedField>& ladder, double tol_mono) {
    SpreadReport r;
    for (const auto& field : ladder) {
        double spread = 0.0;
        for (std::size_t node = 0; node < field.grid.size(); ++node) {
            if (field.grid.in_band(node, 1)) {
                continue;
            }
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t a = 0; a < field.controls; ++a) {
                lo = std::min(lo, field.value(0, node, a));
                hi = std::max(hi, field.value(0, node, a));
            }
            spread = std::max(spread, hi - lo);
        }
        r.spreads.push_back(spread);
    }
    for (std::size_t i = 1; i < r.spreads.size(); ++i) {
        r.pass = r.pass && r.spreads[i] <= r.spreads[i - 1] + tol_mono;
    }
    return r;
}

DppReport check_randomized_dpp(const ProblemSpec& spec, const PenalizedField& field, double t_prime,
                               std::size_t paths, std::uint64_t seed, double nu_min, const Tolerances& tolerances) {
    if (!(t_prime > field.time.t0) || t_prime > field.time.horizon) {
        throw ValidationError("t_prime", "must lie in (t, T]");
    }
    if (field.spec_fingerprint != fingerprint(spec)) {
        throw SpecMismatch("field was solved for a different problem");
    }
    const double dt = field.time.dt();
    const auto k_prime = static_cast<std::size_t>(
        std::clamp(std::round((t_prime - field.time.t0) / dt), 1.0, static_cast<double>(field.time.steps)));

    DppReport r;
    r.t = field.time.t0;
    r.t_prime = field.time.time(k_prime);
    const auto x0 = spec.initial_state(spec.initial_law.mean);
    r.lhs = field.value_at(0, x0, spec.randomization.a0_index);
    const double n = field.level_n;
    r.strengths = {n / 4.0, n / 2.0, n};

    BundleOptions opts;
    opts.paths = paths;
    opts.n_steps = field.time.steps;
    opts.t0 = field.time.t0;
    opts.seed = seed;
    for (double s : r.strengths) {
        const auto nu = argmax_tilt(field, std::max(s, nu_min), nu_min);
        std::vector<double> samples(paths, std::numeric_limits<double>::quiet_NaN());
        detail::parallel_for(paths, [&](std::size_t i) {
            const auto path = simulate_tilted_path(spec, nu, opts, i, k_prime);
            if (path.state.overflow) {
                return;
            }
            const auto& sp = path.state;
            CompensatedSum sum;
            for (std::size_t k = 0; k < k_prime; ++k) {
                sum.add(spec.running_reward(sp.time(k), sp.node(k), sp.step_controls[k]) * dt);
            }
            const std::size_t regime = path.control.regime_at(sp.time(k_prime));
            sum.add(field.value_at(k_prime, sp.node(k_prime), regime));
            samples[i] = sum.value();
        });
        std::erase_if(samples, [](double v) { return std::isnan(v); });
        r.family.push_back(estimate_of(samples));
    }
    r.rhs = *std::max_element(r.family.begin(), r.family.end(),
                              [](const Estimate& a, const Estimate& b) { return a.mean < b.mean; });
    r.tolerance = tolerances.se_multiple * r.rhs.standard_error + tolerances.tol_grid;
    r.pass = std::abs(r.lhs - r.rhs.mean) <= r.tolerance;
    return r;
}

} // namespace randctl
