#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <randctl/dp.hpp>
#include <randctl/csv.hpp>

#include <cmath>
#include <sstream>
#include <vector>

using namespace randctl;

namespace {

struct Solved {
    RunConfig config;
    TimeGrid time;
    StateGrid grid;
    DpField dp;
};

Solved solve(const std::string& name, const fixtures::Patch& patch = {}) {
    Solved s;
    s.config = fixtures::load(name, patch);
    const auto& spec = s.config.problem;
    s.time = ladder_time_grid(spec, s.config.solver, s.config.solver.ladder.back());
    s.grid = make_state_grid(spec, s.config.solver);
    s.dp = solve_dp_grid(spec, s.time, s.grid, s.config.solver.kernel, s.config.solver.seed);
    return s;
}

double v0(const Solved& s) {
    return s.dp.value_at(0, s.config.problem.initial_law.mean);
}

} // namespace

TEST_CASE("DP on uncontrolled-decay reproduces the exact value") {
    const auto s = solve("uncontrolled_decay");
    CHECK(std::abs(v0(s) - std::exp(-1.0)) <= 1e-3);
    for (std::size_t node = 0; node < s.grid.size(); ++node) {
        std::vector<double> x(1);
        s.grid.point(node, x);
        CHECK(s.dp.values[s.time.steps][node] == x[0]);
    }
}

TEST_CASE("DP on bang-drift drives up at full speed") {
    const auto s = solve("bang_drift");
    CHECK(std::abs(v0(s) - 1.0) <= 1e-2);
    // Away from the box edges the policy is always the "up" control.
    std::size_t interior = 0;
    std::size_t up = 0;
    for (std::size_t k = 0; k < s.time.steps; ++k) {
        for (std::size_t node = 0; node < s.grid.size(); ++node) {
            if (s.grid.in_band(node, s.grid.nodes(0) / 4)) {
                continue;
            }
            ++interior;
            up += s.dp.policy[k][node] == 2 ? 1 : 0;
        }
    }
    REQUIRE(interior > 0);
    CHECK(up == interior);
}

TEST_CASE("DP on jump-reward matches the moment-ODE oracle") {
    const auto s = solve("jump_reward");
    const auto& spec = s.config.problem;
    std::vector<double> controls;
    for (const auto& p : spec.control.points) {
        controls.push_back(p[0]);
    }
    for (double x : {-1.0, 0.0, 0.5, 1.0}) {
        const std::vector<double> at{x};
        const double expected =
            oracle::jump_reward_value(x, 0.0, spec.horizon, controls, 0.0, 1.0, spec.jump_measure.second_moment, 1.0);
        CAPTURE(x);
        CHECK(std::abs(s.dp.value_at(0, at) - expected) <= 2e-2);
    }
}

TEST_CASE("DP and penalized solvers share one transition kernel") {
    const auto s = solve("bang_drift");
    const auto& spec = s.config.problem;
    const auto field = solve_penalized_grid(spec, 2, s.time, s.grid, s.config.solver.kernel, s.config.solver.seed);
    CHECK(field.kernel_checksum == s.dp.kernel_checksum);
    CHECK(field.spec_fingerprint == s.dp.spec_fingerprint);
    const TransitionKernel kernel(spec, s.time, s.config.solver.kernel, s.config.solver.seed);
    CHECK(kernel.checksum() == s.dp.kernel_checksum);

    auto options = s.config.solver.kernel;
    options.hermite_nodes = 7;
    const TransitionKernel other(spec, s.time, options, s.config.solver.seed);
    CHECK(other.checksum() != kernel.checksum());
}

TEST_CASE("value comparison refuses mismatched artifacts") {
    const auto s = solve("bang_drift");
    const auto& spec = s.config.problem;
    RandomizedValue randomized;
    randomized.spec_fingerprint = s.dp.spec_fingerprint;
    randomized.kernel_checksum = s.dp.kernel_checksum;
    randomized.horizon = spec.horizon;
    randomized.ladder.limit = v0(s);
    randomized.ladder.levels = {{1, v0(s), 0.0}};

    SUBCASE("matching artifacts pass") {
        const auto verdict = value_equality_check(spec, s.dp, randomized, s.config.tolerances);
        CHECK(verdict.bsde_pass);
        CHECK(verdict.bsde_gap == doctest::Approx(0.0));
    }
    SUBCASE("horizon") {
        randomized.horizon = 2.0;
        CHECK_THROWS_AS(value_equality_check(spec, s.dp, randomized, s.config.tolerances), SpecMismatch);
    }
    SUBCASE("problem") {
        randomized.spec_fingerprint ^= 1;
        CHECK_THROWS_AS(value_equality_check(spec, s.dp, randomized, s.config.tolerances), SpecMismatch);
    }
    SUBCASE("kernel") {
        randomized.kernel_checksum ^= 1;
        CHECK_THROWS_AS(value_equality_check(spec, s.dp, randomized, s.config.tolerances), SpecMismatch);
    }
    SUBCASE("a gain above the value is flagged") {
        randomized.tilt_gains = {{v0(s) + 0.5, 0.01, 1000}};
        const auto verdict = value_equality_check(spec, s.dp, randomized, s.config.tolerances);
        CHECK_FALSE(verdict.tilt_dominated);
        CHECK_FALSE(verdict.pass);
    }
}

TEST_CASE("DP value dominates every constant control") {
    const auto s = solve("jump_reward");
    const auto& spec = s.config.problem;
    const double v = v0(s);
    for (std::size_t a = 0; a < spec.control_count(); ++a) {
        BundleOptions options;
        options.paths = 20000;
        options.n_steps = s.time.steps;
        options.constant_control = a;
        options.seed = 100 + a;
        const auto bundle = simulate_bundle(spec, options);
        std::vector<double> gains;
        for (const auto& p : bundle.paths) {
            gains.push_back(path_gain(spec, p));
        }
        const auto e = estimate_of(gains);
        CAPTURE(a);
        CHECK(e.mean <= v + 3.0 * e.standard_error + 1e-3);
    }
}

TEST_CASE("argmax rollout attains the DP value") {
    const auto s = solve("bang_drift");
    const auto r = policy_rollout(s.config.problem, s.dp, 20000, 7, s.config.tolerances);
    CHECK(r.upper_ok);
    CHECK(r.lower_ok);
    CHECK(std::abs(r.gain.mean - r.v0) <= 3.0 * r.gain.standard_error + s.config.tolerances.tol_grid);
}

TEST_CASE("Monte Carlo kernel agrees with quadrature") {
    const auto quad = solve("uncontrolled_decay");
    const auto mc = solve("uncontrolled_decay", [](auto& j) { j["solver"]["kernel"] = {{"mode", "monte-carlo"}}; });
    CHECK(mc.dp.kernel_checksum != quad.dp.kernel_checksum);
    // The decay flow is deterministic so inner sampling adds no noise.
    CHECK(v0(mc) == doctest::Approx(v0(quad)).epsilon(1e-12));

    const auto noisy = solve("bang_drift", [](auto& j) { j["solver"]["kernel"] = {{"mode", "monte-carlo"}}; });
    const auto exact = solve("bang_drift");
    CHECK(std::abs(v0(noisy) - v0(exact)) <= 1e-2);
}

TEST_CASE("DP export") {
    const auto s = solve("bang_drift", fixtures::grid_1d(-3.0, 3.0, 7));
    std::ostringstream out;
    write_dp_csv(s.config.problem, s.dp, out);
    const auto table = csv::parse(out.str());
    CHECK(table.header == std::vector<std::string>{"t", "x0", "value", "argmax"});
    CHECK(table.rows.size() == (s.time.steps + 1) * s.grid.size());
    const int argmax = table.column("argmax");
    REQUIRE(argmax >= 0);
    CHECK(table.rows.front()[static_cast<std::size_t>(argmax)] == std::to_string(s.dp.policy[0][0]));
    CHECK(table.rows.back()[static_cast<std::size_t>(argmax)].empty());
}
