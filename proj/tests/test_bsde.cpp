#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <randctl/bsde.hpp>
#include <randctl/csv.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

using namespace randctl;

namespace {

struct Solved {
    RunConfig config;
    std::vector<PenalizedField> ladder;
};

Solved solve(const std::string& name, std::vector<int> levels, const fixtures::Patch& patch = {}) {
    Solved s{fixtures::load(name, patch), {}};
    s.ladder = solve_penalized_ladder(s.config.problem, s.config.solver, levels);
    return s;
}

double v0(const ProblemSpec& spec, const PenalizedField& field, std::size_t a) {
    return field.value_at(0, spec.initial_law.mean, a);
}

PathBundle reference_bundle(const ProblemSpec& spec, const TimeGrid& time, std::size_t paths, std::uint64_t seed) {
    BundleOptions options;
    options.paths = paths;
    options.n_steps = time.steps;
    options.seed = seed;
    return simulate_bundle(spec, options);
}

} // namespace

TEST_CASE("penalty vanishes when coefficients ignore the control") {
    const auto s = solve("uncontrolled_decay", {1, 2, 4});
    const auto& base = s.ladder.front();
    const std::size_t nodes = base.grid.size();
    for (const auto& field : s.ladder) {
        for (std::size_t k = 0; k < field.values.size(); ++k) {
            for (std::size_t a = 0; a < field.controls; ++a) {
                CHECK(std::memcmp(field.values[k].data() + a * nodes, base.values[k].data(), nodes * sizeof(double)) == 0);
            }
        }
    }
    const double expected = std::exp(-1.0);
    CHECK(v0(s.config.problem, base, 0) == doctest::Approx(expected).epsilon(1e-3));
}

TEST_CASE("terminal layer equals g exactly") {
    const auto s = solve("bang_drift", {1, 4});
    const auto& spec = s.config.problem;
    for (const auto& field : s.ladder) {
        std::vector<double> x(field.grid.dims());
        for (std::size_t node = 0; node < field.grid.size(); ++node) {
            field.grid.point(node, x);
            for (std::size_t a = 0; a < field.controls; ++a) {
                CHECK(field.value(field.time.steps, node, a) == spec.terminal(x));
            }
        }
    }
}

TEST_CASE("shared time grid keeps the explicit penalization monotone") {
    const auto config = fixtures::load("bang_drift");
    const auto time = ladder_time_grid(config.problem, config.solver, 16);
    CHECK(16 * time.dt() * config.problem.randomization.total_mass() <= 0.5 + 1e-12);
    const auto s = solve("bang_drift", {1, 16});
    for (const auto& field : s.ladder) {
        CHECK(field.stability <= 0.5 + 1e-12);
        CHECK(field.stability == doctest::Approx(field.level_n * field.time.dt() * 3.0));
    }
    CHECK_THROWS_AS(solve_penalized_grid(config.problem, 0, time, make_state_grid(config.problem, config.solver),
                                         config.solver.kernel, 1),
                    ValidationError);
}

TEST_CASE("bang-drift penalized value approaches x + T at large n") {
    const auto config = fixtures::load("bang_drift");
    const auto& spec = config.problem;
    const int n = 64;
    const auto time = ladder_time_grid(spec, config.solver, n);
    const auto field =
        solve_penalized_grid(spec, n, time, make_state_grid(spec, config.solver), config.solver.kernel, config.solver.seed);
    for (std::size_t a = 0; a < spec.control_count(); ++a) {
        CAPTURE(a);
        CHECK(std::abs(v0(spec, field, a) - 1.0) <= 2e-2);
    }
}

TEST_CASE("jump-reward penalized limit matches the moment-ODE value") {
    const auto s = solve("jump_reward", {4, 8, 16});
    const auto& spec = s.config.problem;
    std::vector<double> controls;
    for (const auto& p : spec.control.points) {
        controls.push_back(p[0]);
    }
    for (double x : {-1.0, 0.0, 1.0}) {
        std::vector<LadderEntry> levels;
        const std::vector<double> at{x};
        for (const auto& f : s.ladder) {
            levels.push_back({f.level_n, f.value_at(0, at, spec.randomization.a0_index), 0.0});
        }
        const double limit = richardson_limit(levels);
        const double expected = oracle::jump_reward_value(x, 0.0, spec.horizon, controls, 0.0, 1.0,
                                                          spec.jump_measure.second_moment, 1.0);
        CAPTURE(x);
        CHECK(std::abs(limit - expected) <= 2e-2);
    }
}

TEST_CASE("ladder diagnostics on bang-drift") {
    const auto s = solve("bang_drift", {1, 2, 4, 8, 16});
    const auto& spec = s.config.problem;
    const auto& tol = s.config.tolerances;

    const auto mono = check_monotone(s.ladder, tol.tol_mono);
    CHECK(mono.pass);
    CHECK(mono.max_violation <= tol.tol_mono);
    CHECK(mono.nodes_checked > 0);

    const auto spread = check_a_spread(s.ladder, tol.tol_mono);
    CHECK(spread.pass);
    REQUIRE(spread.spreads.size() == 5);
    CHECK(spread.spreads.back() < spread.spreads.front());

    const auto growth = check_growth(spec, s.ladder);
    CHECK(growth.pass);
    CHECK(growth.c_bar > 0.0);

    const auto levels = ladder_values(spec, s.ladder);
    const auto report = minimal_value(levels, Extrapolation::richardson, tol.tol_mono);
    CHECK(report.monotone);
    CHECK(std::abs(report.limit - 1.0) <= 2e-2);

    SUBCASE("argmax tilt takes only the two prescribed values") {
        const auto nu = argmax_tilt(s.ladder.back(), 16.0, 0.01);
        CHECK(nu.kind() == IntensityControl::Kind::feedback);
        CHECK(nu.nu_min() == doctest::Approx(0.01));
        CHECK(nu.nu_max() == doctest::Approx(16.0));
        const std::vector<double> x{0.0};
        // Moving up is better than holding at the origin.
        CHECK(nu(0.0, x, 1, 2) == doctest::Approx(16.0));
        CHECK(nu(0.0, x, 2, 0) == doctest::Approx(0.01));
    }
}

TEST_CASE("minimal value bookkeeping") {
    SUBCASE("constant ladder") {
        const double v = std::exp(-1.0);
        const std::vector<LadderEntry> levels{{1, v, 0.0}, {2, v, 0.0}, {4, v, 0.0}};
        for (auto e : {Extrapolation::last, Extrapolation::richardson}) {
            const auto r = minimal_value(levels, e, 1e-6);
            CHECK(r.monotone);
            CHECK(r.limit == doctest::Approx(v).epsilon(1e-12));
        }
    }
    SUBCASE("richardson removes 1/n and 1/n^2 terms") {
        auto f = [](int n) { return 1.0 - 1.0 / n + 0.5 / (n * n); };
        const std::vector<LadderEntry> levels{{4, f(4), 0.0}, {8, f(8), 0.0}, {16, f(16), 0.0}};
        CHECK(richardson_limit(levels) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("a drop beyond tolerance is reported") {
        const std::vector<LadderEntry> levels{{1, 0.5, 0.0}, {2, 0.4, 0.0}, {4, 0.6, 0.0}};
        const auto r = minimal_value(levels, Extrapolation::last, 1e-6);
        CHECK_FALSE(r.monotone);
        CHECK(r.max_violation == doctest::Approx(0.1));
    }
    SUBCASE("richardson needs three levels") {
        const std::vector<LadderEntry> levels{{1, 0.5, 0.0}};
        CHECK_THROWS_WITH_AS(minimal_value(levels, Extrapolation::richardson, 1e-6),
                             doctest::Contains("need ≥ 3 levels"), ValidationError);
    }
    SUBCASE("levels must increase") {
        const std::vector<LadderEntry> levels{{2, 0.5, 0.0}, {1, 0.6, 0.0}};
        CHECK_THROWS_AS(minimal_value(levels, Extrapolation::last, 1e-6), ValidationError);
    }
}

TEST_CASE("LSMC on uncontrolled-decay matches the closed form") {
    const auto config = fixtures::load("uncontrolled_decay");
    const auto& spec = config.problem;
    const auto time = ladder_time_grid(spec, config.solver, 4);
    const auto bundle = reference_bundle(spec, time, 2000, 3);
    const auto q = solve_penalized_lsmc(spec, 4, bundle);
    // The flow is deterministic; what remains is ridge bias of the regressions.
    CHECK(std::abs(q.y0.mean - std::exp(-1.0)) <= 3.0 * q.y0.standard_error + 1e-6);
    CHECK(q.terminal_exact);
    CHECK(q.k_monotone);
    double k_max = 0.0;
    for (double k : q.k_terminal) {
        k_max = std::max(k_max, std::abs(k));
    }
    CHECK(k_max <= 1e-8);
    const auto gap = constraint_gap(q);
    CHECK(gap.phi <= 1e-16);
    CHECK(gap.k_ratio <= 1e-16);
}

TEST_CASE("LSMC input validation") {
    const auto spec = fixtures::problem("bang_drift");
    const auto other = fixtures::problem("uncontrolled_decay");
    BundleOptions options;
    options.paths = 50;
    options.n_steps = 8;
    const auto bundle = simulate_bundle(other, options);
    CHECK_THROWS_AS(solve_penalized_lsmc(spec, 2, bundle), SpecMismatch);
    LsmcOptions bad;
    bad.degree = 0;
    CHECK_THROWS_AS(solve_penalized_lsmc(other, 2, bundle, bad), ValidationError);
    CHECK_THROWS_AS(solve_penalized_lsmc(other, 2, PathBundle{}), Error);
}

TEST_CASE("LSMC agrees with the grid on bang-drift") {
    const auto s = solve("bang_drift", {1, 4});
    const auto& spec = s.config.problem;
    const auto bundle = reference_bundle(spec, s.ladder.front().time, 20000, 17);
    for (const auto& field : s.ladder) {
        const auto q = solve_penalized_lsmc(spec, field.level_n, bundle);
        const double grid = v0(spec, field, spec.randomization.a0_index);
        CAPTURE(field.level_n);
        CHECK(std::abs(q.y0.mean - grid) <= 3.0 * q.y0.standard_error + s.config.tolerances.tol_grid);
        CHECK(q.terminal_exact);
        CHECK(q.k_monotone);
        CHECK(q.tracks.size() == LsmcOptions{}.record_paths);
        CHECK(q.mean_y.size() == q.steps + 1);
        for (const auto& track : q.tracks) {
            CHECK(track.k.front() == 0.0);
            CHECK(track.y.back() == spec.terminal(bundle.paths[track.path].state.node(q.steps)));
        }
    }
}

TEST_CASE("constraint functional decays along the ladder") {
    const auto s = solve("bang_drift", {1, 2, 4, 8});
    const auto& spec = s.config.problem;
    const auto bundle = reference_bundle(spec, s.ladder.front().time, 4000, 29);
    std::vector<ConstraintReport> reports;
    for (const auto& field : s.ladder) {
        reports.push_back(constraint_gap(spec, field, bundle));
    }
    for (std::size_t i = 0; i + 1 < reports.size(); ++i) {
        const auto& a = reports[i];
        const auto& b = reports[i + 1];
        // Delta method: sd(phi) ~ 2 |E penalty| SE(penalty).
        const double noise = 3.0 * 2.0 * (std::abs(a.penalty.mean) * a.penalty.standard_error +
                                          std::abs(b.penalty.mean) * b.penalty.standard_error);
        CHECK(b.phi <= a.phi + noise);
        CHECK(b.k_ratio < a.k_ratio);
    }
    CHECK(reports.back().k_ratio * 2.0 <= reports.front().k_ratio);

    const auto flat = solve("uncontrolled_decay", {1, 2});
    const auto flat_bundle = reference_bundle(flat.config.problem, flat.ladder.front().time, 200, 1);
    const auto zero = constraint_gap(flat.config.problem, flat.ladder.back(), flat_bundle);
    CHECK(zero.phi == 0.0);
    CHECK(zero.k_ratio == 0.0);
}

TEST_CASE("randomized DPP") {
    SUBCASE("uncontrolled-decay holds by the tower property") {
        const auto s = solve("uncontrolled_decay", {2});
        for (double t_prime : {0.5, 1.0}) {
            const auto r = check_randomized_dpp(s.config.problem, s.ladder.back(), t_prime, 500, 4, 0.01,
                                                s.config.tolerances);
            CAPTURE(t_prime);
            CHECK(r.pass);
            CHECK(std::abs(r.lhs - r.rhs.mean) <= 1e-3);
        }
    }
    SUBCASE("t' = T reduces to the value itself") {
        const auto s = solve("bang_drift", {4});
        const auto r = check_randomized_dpp(s.config.problem, s.ladder.back(), 1.0, 4000, 4, 0.01, s.config.tolerances);
        CHECK(r.pass);
        CHECK(std::abs(r.lhs - r.rhs.mean) <= 3.0 * r.rhs.standard_error + s.config.tolerances.tol_grid);
    }
    SUBCASE("t' outside (0, T] is rejected") {
        const auto s = solve("uncontrolled_decay", {1});
        CHECK_THROWS_AS(check_randomized_dpp(s.config.problem, s.ladder.back(), 0.0, 10, 1, 0.01, s.config.tolerances),
                        ValidationError);
    }
}

TEST_CASE("field export") {
    const auto s = solve("bang_drift", {2}, fixtures::grid_1d(-2.0, 2.0, 5));
    const auto& field = s.ladder.front();
    std::ostringstream out;
    write_field_csv(s.config.problem, field, out);
    const auto table = csv::parse(out.str());
    CHECK(table.header == std::vector<std::string>{"t", "x0", "a", "value", "level"});
    CHECK(table.rows.size() == (field.time.steps + 1) * field.grid.size() * field.controls);
    const auto meta = nlohmann::json::parse(field_metadata_json(s.config.problem, field));
    CHECK(meta.at("level_n") == 2);
    CHECK(meta.contains("stability"));
}
