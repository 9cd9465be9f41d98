#include "randctl_cli/pipeline.hpp"

#include <randctl/csv.hpp>
#include <randctl/girsanov.hpp>
#include <randctl/hjb.hpp>
#include <randctl/rng.hpp>
#include <randctl/sim.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace randctl::cli {

namespace {

std::string fmt(const char* format, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

CheckResult check(std::string name, bool ok, std::string detail) {
    return {std::move(name), ok ? Verdict::pass : Verdict::fail, std::move(detail)};
}

CheckResult skipped(std::string name, std::string reason) {
    return {std::move(name), Verdict::skipped, std::move(reason)};
}

PathBundle reference_bundle(const RunConfig& config, const Lattice& lattice, std::size_t paths, std::uint64_t salt) {
    BundleOptions opts;
    opts.paths = paths;
    opts.n_steps = lattice.time.steps;
    opts.t0 = lattice.time.t0;
    opts.seed = splitmix64(config.solver.seed ^ salt);
    return simulate_bundle(config.problem, opts);
}

std::vector<CheckResult> martingale_suite(const RunConfig& config, const Lattice& lattice) {
    const auto& spec = config.problem;
    const auto& s = config.solver;
    std::vector<CheckResult> out;

    const int level = std::max(1, s.girsanov_level);
    const auto field = solve_penalized_grid(spec, level, lattice.time, lattice.grid, s.kernel, s.seed);
    std::vector<IntensityControl> controls{IntensityControl::constant(0.5, "const-0.5"),
                                           IntensityControl::constant(1.0, "const-1"),
                                           IntensityControl::constant(2.0, "const-2"),
                                           argmax_tilt(field, std::max<double>(level, s.girsanov_nu_min),
                                                       s.girsanov_nu_min)};

    const auto bundle = reference_bundle(config, lattice, s.paths, 0x6b61707061);
    const PathPayoff one = [](const SimulatedPath&) { return 1.0; };
    for (const auto& nu : controls) {
        const auto e = reweighted_expectation(spec, bundle, nu, one);
        const double band = config.tolerances.se_multiple * e.standard_error;
        out.push_back(check("kappa-mean[" + nu.id() + "]", std::abs(e.mean - 1.0) <= band + 1e-12,
                            fmt("E kappa_T = %.6f, |gap| %.2e <= %.2e", e.mean, std::abs(e.mean - 1.0), band)));
    }
    GainOptions g;
    g.paths = s.paths;
    g.n_steps = lattice.time.steps;
    g.seed = splitmix64(s.seed ^ 0x6761696e);
    for (const auto& nu : controls) {
        const auto cmp = compare_gain_modes(spec, nu, g, config.tolerances.se_multiple);
        out.push_back(check("gain-modes[" + nu.id() + "]", cmp.agree,
                            fmt("reweight %.5f vs tilted %.5f, |diff| %.2e <= %.2e", cmp.reweight.estimate.mean,
                                cmp.tilted.estimate.mean, std::abs(cmp.difference),
                                config.tolerances.se_multiple * cmp.combined_se)));
    }
    return out;
}

std::vector<CheckResult> monotone_suite(const RunConfig& config, const std::vector<PenalizedField>& ladder) {
    const auto& spec = config.problem;
    const auto& tol = config.tolerances;
    std::vector<CheckResult> out;
    const auto mono = check_monotone(ladder, tol.tol_mono);
    out.push_back(check("monotone-nodewise", mono.pass,
                        fmt("max v^n - v^n' = %.3e over %zu nodes, tol %.1e", mono.max_violation, mono.nodes_checked,
                            tol.tol_mono)));
    if (ladder.size() >= 2) {
        const auto mv = minimal_value(ladder_values(spec, ladder), Extrapolation::last, tol.tol_mono);
        out.push_back(check("monotone-v0", mv.monotone, fmt("largest drop %.3e", mv.max_violation)));
    }
    const auto growth = check_growth(spec, ladder);
    std::string ratios;
    for (double r : growth.ratios) {
        ratios += fmt("%s%.4f", ratios.empty() ? "" : ",", r);
    }
    out.push_back(check("growth-bound", growth.pass, "ratios " + ratios + fmt(" <= 2 * %.4f", growth.c_bar)));
    const auto spread = check_a_spread(ladder, tol.tol_mono);
    std::string spreads;
    for (double r : spread.spreads) {
        spreads += fmt("%s%.4g", spreads.empty() ? "" : ",", r);
    }
    out.push_back(check("a-spread", spread.pass, "interior spreads " + spreads));
    return out;
}

std::vector<CheckResult> constraint_suite(const RunConfig& config, const Lattice& lattice,
                                          const std::vector<PenalizedField>& ladder) {
    const auto& spec = config.problem;
    const auto& tol = config.tolerances;
    std::vector<CheckResult> out;
    const auto bundle = reference_bundle(config, lattice, config.solver.paths, 0x7068693a);
    std::vector<ConstraintReport> reports;
    for (const auto& field : ladder) {
        reports.push_back(constraint_gap(spec, field, bundle));
    }
    bool phi_ok = true;
    std::string phis;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        phis += fmt("%s%.3e", phis.empty() ? "" : ",", reports[i].phi);
        if (i > 0) {
            const auto& p = reports[i - 1].penalty;
            const auto& c = reports[i].penalty;
            // Delta method: se(Phi) ~ 2 |E P| se(P).
            const double noise = 2.0 * std::hypot(std::abs(p.mean) * p.standard_error, std::abs(c.mean) * c.standard_error);
            phi_ok = phi_ok && reports[i].phi <= reports[i - 1].phi + tol.se_multiple * noise + tol.tol_mono;
        }
    }
    out.push_back(check("phi-nonincreasing", phi_ok, "Phi " + phis));
    if (reports.size() >= 2) {
        const double first = reports.front().k_ratio;
        const double last = reports.back().k_ratio;
        if (first <= 1e-14) {
            out.push_back(check("k-ratio-decay", last <= 1e-14, fmt("E|K_T|^2/n^2 %.3e -> %.3e (no constraint)", first, last)));
        } else {
            out.push_back(check("k-ratio-decay", last * 2.0 <= first,
                                fmt("E|K_T|^2/n^2 %.3e (n=%d) -> %.3e (n=%d), factor %.2f", first,
                                    reports.front().level_n, last, reports.back().level_n, first / last)));
        }
    }
    return out;
}

std::vector<CheckResult> dpp_suite(const RunConfig& config, const std::vector<PenalizedField>& ladder) {
    const auto& spec = config.problem;
    const auto& field = ladder.back();
    const double t_prime = field.time.t0 + config.solver.dpp_fraction * (field.time.horizon - field.time.t0);
    const auto r = check_randomized_dpp(spec, field, t_prime, config.solver.paths,
                                        splitmix64(config.solver.seed ^ 0x646070), config.solver.nu_min,
                                        config.tolerances);
    return {check("randomized-dpp", r.pass,
                  fmt("n=%d t'=%.3f: v^n %.5f vs sup tilt %.5f (se %.1e), |gap| %.2e <= %.2e", field.level_n, r.t_prime,
                      r.lhs, r.rhs.mean, r.rhs.standard_error, std::abs(r.lhs - r.rhs.mean), r.tolerance))};
}

std::vector<CheckResult> value_equality_suite(const RunConfig& config, const Lattice& lattice,
                                              const std::vector<PenalizedField>& ladder) {
    const auto& spec = config.problem;
    const auto& s = config.solver;
    const auto& tol = config.tolerances;
    std::vector<CheckResult> out;

    const auto dp = solve_dp(config, lattice);
    const auto levels = ladder_values(spec, ladder);
    const auto extrapolation = levels.size() >= 3 ? s.extrapolation : Extrapolation::last;

    RandomizedValue rv;
    rv.spec_fingerprint = fingerprint(spec);
    rv.kernel_checksum = ladder.back().kernel_checksum;
    rv.horizon = ladder.back().time.horizon;
    rv.ladder = minimal_value(levels, extrapolation, tol.tol_mono);
    GainOptions g;
    g.paths = s.paths;
    g.n_steps = lattice.time.steps;
    g.seed = splitmix64(s.seed ^ 0x74696c74);
    for (const auto& field : ladder) {
        const auto nu = argmax_tilt(field, std::max<double>(field.level_n, s.nu_min), s.nu_min);
        rv.tilt_gains.push_back(randomized_gain(spec, nu, g, GainMode::tilted).estimate);
    }
    const auto v = value_equality_check(spec, dp, rv, tol);
    out.push_back(check("dp-vs-penalized", v.bsde_pass,
                        fmt("V0_dp %.5f vs lim v^n %.5f (%s), |gap| %.2e <= %.2e", v.v0_dp, v.v0_bsde,
                            std::string(to_string(extrapolation)).c_str(), v.bsde_gap,
                            tol.tol_value + tol.se_multiple * rv.ladder.limit_se)));
    const auto& best = *std::max_element(rv.tilt_gains.begin(), rv.tilt_gains.end(),
                                         [](const Estimate& a, const Estimate& b) { return a.mean < b.mean; });
    out.push_back(check("tilt-dominated", v.tilt_dominated,
                        fmt("best tilted gain %.5f (se %.1e) vs V0_dp %.5f", best.mean, best.standard_error, v.v0_dp)));
    out.push_back(check("tilt-gap-shrinks", v.tilt_gap_shrinks,
                        fmt("gap at top tilt %.3e", v.v0_dp - rv.tilt_gains.back().mean)));

    const auto rollout = policy_rollout(spec, dp, s.paths, splitmix64(s.seed ^ 0x726f6c6c), tol);
    out.push_back(check("policy-rollout", rollout.upper_ok && rollout.lower_ok,
                        fmt("J(argmax) %.5f (se %.1e) vs v(0,x0) %.5f", rollout.gain.mean,
                            rollout.gain.standard_error, rollout.v0)));

    const auto lsmc = solve_lsmc_ladder(config, lattice);
    for (std::size_t i = 0; i < lsmc.size(); ++i) {
        const double grid = levels[i].value;
        const double band = tol.se_multiple * lsmc[i].standard_error + tol.tol_grid;
        out.push_back(check("feynman-kac[n=" + std::to_string(lsmc[i].level_n) + "]",
                            std::abs(lsmc[i].value - grid) <= band,
                            fmt("LSMC Y0 %.5f (se %.1e) vs grid %.5f, band %.2e", lsmc[i].value, lsmc[i].standard_error,
                                grid, band)));
    }
    return out;
}

std::vector<CheckResult> hjb_suite(const RunConfig& config, const Lattice& lattice,
                                   const std::vector<PenalizedField>& ladder) {
    const auto& spec = config.problem;
    const auto& tol = config.tolerances;
    std::vector<CheckResult> out;
    if (const auto candidate = closed_form_value(spec)) {
        const std::vector<double> times{lattice.time.t0, 0.5 * (lattice.time.t0 + lattice.time.horizon)};
        const auto r = hjb_residual(spec, *candidate, lattice.grid, times, DerivativeMode::exact);
        out.push_back(check("closed-form-residual", r.interior_max_abs <= tol.tol_exact && r.terminal_max_error <= tol.tol_exact,
                            fmt("interior %.2e, terminal %.2e, tol %.1e", r.interior_max_abs, r.terminal_max_error,
                                tol.tol_exact)));
    } else {
        out.push_back(skipped("closed-form-residual", "no closed form for this family"));
    }
    const auto dp = solve_dp(config, lattice);
    const auto dp_cert = residual_certificate(spec, value_table(dp), tol);
    out.push_back(check("dp-certificate", dp_cert.pass,
                        fmt("interior %.3e <= %.1e over %zu samples, terminal %.2e",
                            dp_cert.interior_max_abs_residual, tol.tol_hjb, dp_cert.evaluated,
                            dp_cert.terminal_max_error)));
    const auto pen_cert = residual_certificate(spec, value_table(ladder.back()), tol);
    out.push_back(check("penalized-certificate[n=" + std::to_string(ladder.back().level_n) + "]", pen_cert.pass,
                        fmt("interior %.3e <= %.1e over %zu samples, terminal %.2e",
                            pen_cert.interior_max_abs_residual, tol.tol_hjb, pen_cert.evaluated,
                            pen_cert.terminal_max_error)));
    return out;
}

CheckResult field_file_check(const std::string& path, const std::vector<PenalizedField>& ladder, double tol) {
    try {
        const auto field = read_field_csv(path, ladder.front());
        const auto it = std::find_if(ladder.begin(), ladder.end(),
                                     [&](const PenalizedField& f) { return f.level_n == field.level_n; });
        if (it == ladder.end()) {
            return skipped("field-file", "level " + std::to_string(field.level_n) + " is not on the ladder");
        }
        double worst = 0.0;
        for (std::size_t k = 0; k < field.values.size(); ++k) {
            for (std::size_t j = 0; j < field.values[k].size(); ++j) {
                worst = std::max(worst, std::abs(field.values[k][j] - it->values[k][j]));
            }
        }
        return check("field-file", worst <= tol, fmt("max deviation from recomputed field %.2e", worst));
    } catch (const std::exception& e) {
        return skipped("field-file", std::string("unreadable field file: ") + e.what());
    }
}

} // namespace

std::optional<Suite> parse_suite(std::string_view name) noexcept {
    static const std::map<std::string_view, Suite> names{
        {"all", Suite::all},           {"martingale", Suite::martingale},
        {"monotone", Suite::monotone}, {"constraint", Suite::constraint},
        {"dpp", Suite::dpp},           {"value-equality", Suite::value_equality},
        {"hjb", Suite::hjb}};
    const auto it = names.find(name);
    return it == names.end() ? std::nullopt : std::optional<Suite>(it->second);
}

Lattice make_lattice(const RunConfig& config) {
    const auto& ladder = config.solver.ladder;
    return {ladder_time_grid(config.problem, config.solver, *std::max_element(ladder.begin(), ladder.end())),
            make_state_grid(config.problem, config.solver)};
}

std::vector<PenalizedField> solve_ladder(const RunConfig& config, const Lattice& lattice) {
    std::vector<PenalizedField> out;
    for (int n : config.solver.ladder) {
        out.push_back(solve_penalized_grid(config.problem, n, lattice.time, lattice.grid, config.solver.kernel,
                                           config.solver.seed));
    }
    return out;
}

DpField solve_dp(const RunConfig& config, const Lattice& lattice) {
    return solve_dp_grid(config.problem, lattice.time, lattice.grid, config.solver.kernel, config.solver.seed);
}

std::vector<LadderEntry> solve_lsmc_ladder(const RunConfig& config, const Lattice& lattice) {
    const auto bundle = reference_bundle(config, lattice, config.solver.lsmc_paths, 0x6c736d63);
    LsmcOptions opts;
    opts.degree = config.solver.lsmc_degree;
    opts.ridge = config.solver.ridge;
    opts.record_paths = 0;
    std::vector<LadderEntry> out;
    for (int n : config.solver.ladder) {
        const auto q = solve_penalized_lsmc(config.problem, n, bundle, opts);
        out.push_back({n, q.y0.mean, q.y0.standard_error});
    }
    return out;
}

PenalizedField read_field_csv(const std::string& path, const PenalizedField& like) {
    const auto table = csv::read_file(path);
    const int value_col = table.column("value");
    const int a_col = table.column("a");
    const int level_col = table.column("level");
    if (value_col < 0 || a_col < 0 || level_col < 0) {
        throw ValidationError("field", "missing value, a or level column");
    }
    const std::size_t nodes = like.grid.size();
    const std::size_t per_step = nodes * like.controls;
    if (table.rows.size() != per_step * (like.time.steps + 1)) {
        throw ValidationError("field", "row count does not match the lattice");
    }
    PenalizedField field = like;
    field.level_n = static_cast<int>(csv::to_number(table.rows.front()[static_cast<std::size_t>(level_col)]));
    std::size_t r = 0;
    for (std::size_t k = 0; k <= like.time.steps; ++k) {
        for (std::size_t node = 0; node < nodes; ++node) {
            for (std::size_t a = 0; a < like.controls; ++a, ++r) {
                const auto& row = table.rows[r];
                if (static_cast<std::size_t>(csv::to_number(row[static_cast<std::size_t>(a_col)])) != a) {
                    throw ValidationError("field", "rows out of order");
                }
                const double v = csv::to_number(row[static_cast<std::size_t>(value_col)]);
                if (!std::isfinite(v)) {
                    throw ValidationError("field", "non-finite value");
                }
                field.values[k][a * nodes + node] = v;
            }
        }
    }
    return field;
}

std::vector<CheckResult> run_suite(Suite suite, const RunConfig& config, const std::optional<std::string>& field_path) {
    const auto lattice = make_lattice(config);
    const auto ladder = solve_ladder(config, lattice);
    const bool all = suite == Suite::all;
    std::vector<CheckResult> out;
    auto append = [&out](std::vector<CheckResult> more) {
        out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    };
    if (field_path) {
        out.push_back(field_file_check(*field_path, ladder, config.tolerances.tol_mono));
    }
    if (all || suite == Suite::martingale) {
        append(martingale_suite(config, lattice));
    }
    if (all || suite == Suite::monotone) {
        append(monotone_suite(config, ladder));
    }
    if (all || suite == Suite::constraint) {
        append(constraint_suite(config, lattice, ladder));
    }
    if (all || suite == Suite::dpp) {
        append(dpp_suite(config, ladder));
    }
    if (all || suite == Suite::value_equality) {
        append(value_equality_suite(config, lattice, ladder));
    }
    if (all || suite == Suite::hjb) {
        append(hjb_suite(config, lattice, ladder));
    }
    return out;
}

} // namespace randctl::cli
