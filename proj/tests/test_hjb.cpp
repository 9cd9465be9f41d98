#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <randctl/csv.hpp>
#include <randctl/hjb.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

using namespace randctl;

namespace {

ValueAccessor quadratic_value() {
    return [](std::span<const double> x) { return -x[0] * x[0]; };
}

std::vector<double> times_of(double horizon, int count) {
    std::vector<double> t;
    for (int i = 0; i < count; ++i) {
        t.push_back(horizon * i / count);
    }
    return t;
}

double max_abs(const HjbResidualField& field) {
    double m = 0.0;
    for (const auto& slice : field.residual) {
        for (double r : slice) {
            if (!std::isnan(r)) {
                m = std::max(m, std::abs(r));
            }
        }
    }
    return m;
}

} // namespace

TEST_CASE("Hamiltonian of the quadratic candidate on jump-reward") {
    const auto spec = fixtures::problem("jump_reward");
    const std::vector<double> x{1.0};
    const std::vector<double> grad{-2.0};
    const std::vector<double> hess{-2.0};
    // Reward a and jump term -a^2 M with M = 1.
    for (std::size_t a = 0; a < spec.control_count(); ++a) {
        const double ctl = spec.control.points[a][0];
        CHECK(hamiltonian(spec, 0.0, x, a, grad, hess, quadratic_value()) ==
              doctest::Approx(ctl - ctl * ctl).epsilon(1e-14));
    }
}

TEST_CASE("Hamiltonian quadrature is exact on quadratics for uniform marks") {
    const auto spec = fixtures::problem("jump_reward", [](auto& j) {
        j["jump_measure"] = {{"total_rate", 2.0},
                             {"mark_law", "uniform-interval"},
                             {"mark_parameters", {{"lo", -1.0}, {"hi", 2.0}}},
                             {"rho_envelope", 2.0},
                             {"second_moment", 2.0}};
        j["regularity"]["lipschitz_l"] = 2.0;
    });
    // E z^2 for U(-1, 2) is (8 + 1) / 9 = 1, times rate 2.
    const double m = 2.0;
    const std::vector<double> x{0.3};
    const std::vector<double> grad{-0.6};
    const std::vector<double> hess{-2.0};
    for (std::size_t a = 0; a < spec.control_count(); ++a) {
        const double ctl = spec.control.points[a][0];
        CHECK(std::abs(hamiltonian(spec, 0.0, x, a, grad, hess, quadratic_value(), 32) - (ctl - ctl * ctl * m)) <=
              1e-10);
    }
}

TEST_CASE("closed forms solve the HJB equation exactly") {
    for (const char* name : {"uncontrolled_decay", "bang_drift", "jump_reward", "lookback_integral"}) {
        CAPTURE(name);
        const auto config = fixtures::load(name);
        const auto& spec = config.problem;
        const auto candidate = closed_form_value(spec);
        REQUIRE(candidate.has_value());
        const auto grid = make_state_grid(spec, config.solver);
        const auto field = hjb_residual(spec, *candidate, grid, times_of(spec.horizon, 8), DerivativeMode::exact);
        CHECK(field.interior_max_abs <= config.tolerances.tol_exact);
        CHECK(field.terminal_max_error <= config.tolerances.tol_exact);
        CHECK(max_abs(field) == doctest::Approx(field.interior_max_abs));
    }
}

TEST_CASE("a wrong candidate is caught") {
    const auto spec = fixtures::problem("uncontrolled_decay");
    AnalyticCandidate zero;
    zero.value = [](double, std::span<const double>) { return 0.0; };
    zero.time_derivative = [](double, std::span<const double>) { return 0.0; };
    zero.gradient = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    zero.hessian = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    const StateGrid grid({-3.0}, {3.0}, {13});
    const auto field = hjb_residual(spec, zero, grid, {0.0, 0.5}, DerivativeMode::exact);
    // g(x) = x, so the terminal mismatch is the largest |x| on the grid.
    CHECK(field.terminal_max_error == doctest::Approx(3.0));
    CHECK(field.interior_max_abs == 0.0);
}

TEST_CASE("stencil residual decays at second order") {
    const auto config = fixtures::load("uncontrolled_decay");
    const auto& spec = config.problem;
    const auto candidate = closed_form_value(spec);
    REQUIRE(candidate.has_value());
    const StateGrid grid({-2.0}, {2.0}, {21});
    std::vector<double> steps;
    std::vector<double> errors;
    for (double h : {0.08, 0.04, 0.02, 0.01}) {
        const auto field = hjb_residual(spec, *candidate, grid, {0.25, 0.5}, DerivativeMode::stencil, h);
        steps.push_back(h);
        errors.push_back(field.interior_max_abs);
    }
    CAPTURE(errors);
    CHECK(oracle::observed_order(steps, errors) == doctest::Approx(2.0).epsilon(0.15));
    CHECK(errors.back() < errors.front());
}

TEST_CASE("residual certificates") {
    SUBCASE("DP table on uncontrolled-decay") {
        const auto config = fixtures::load("uncontrolled_decay");
        const auto& spec = config.problem;
        const auto time = ladder_time_grid(spec, config.solver, 16);
        const auto dp = solve_dp_grid(spec, time, make_state_grid(spec, config.solver), config.solver.kernel, 1);
        const auto cert = residual_certificate(spec, value_table(dp), config.tolerances);
        CHECK(cert.pass);
        CHECK(cert.evaluated > 0);
        CHECK(cert.interior_max_abs_residual <= 1e-2);
    }
    SUBCASE("penalized table on bang-drift") {
        const auto config = fixtures::load("bang_drift");
        const auto& spec = config.problem;
        const auto ladder = solve_penalized_ladder(spec, config.solver, {16});
        const auto table = value_table(ladder.back());
        CHECK(table.level_n == 16);
        CHECK(table.maximizer.size() == table.values.size());
        const auto cert = residual_certificate(spec, table, config.tolerances);
        CHECK(cert.pass);
        CHECK(cert.evaluated > 0);
    }
    SUBCASE("a table of another problem fails") {
        const auto config = fixtures::load("bang_drift");
        const auto other = fixtures::load("uncontrolled_decay");
        const auto time = ladder_time_grid(other.problem, other.solver, 16);
        const auto dp = solve_dp_grid(other.problem, time, make_state_grid(config.problem, config.solver),
                                      other.solver.kernel, 1);
        auto table = value_table(dp);
        table.spec_fingerprint = fingerprint(config.problem);
        const auto cert = residual_certificate(config.problem, table, config.tolerances);
        CHECK_FALSE(cert.pass);
    }
}

TEST_CASE("residual argmax agrees with the DP policy") {
    const auto config = fixtures::load("ou_switch");
    const auto& spec = config.problem;
    const auto time = ladder_time_grid(spec, config.solver, 16);
    const auto grid = make_state_grid(spec, config.solver);
    const auto dp = solve_dp_grid(spec, time, grid, config.solver.kernel, 1);
    ResidualOptions options;
    options.switch_band = -1;
    options.time_stride = 8;
    const auto field = hjb_residual(spec, value_table(dp), options);
    std::size_t compared = 0;
    std::size_t agree = 0;
    for (std::size_t s = 0; s < field.times.size(); ++s) {
        const auto k = static_cast<std::size_t>(std::llround(field.times[s] / time.dt()));
        if (k >= time.steps) {
            continue;
        }
        for (std::size_t node = 0; node < grid.size(); ++node) {
            if (std::isnan(field.residual[s][node])) {
                continue;
            }
            ++compared;
            agree += field.argmax[s][node] == dp.policy[k][node] ? 1 : 0;
        }
    }
    REQUIRE(compared > 0);
    CHECK(static_cast<double>(agree) >= 0.95 * static_cast<double>(compared));
}

TEST_CASE("residual export omits excluded nodes") {
    const auto spec = fixtures::problem("jump_reward");
    const auto candidate = closed_form_value(spec);
    REQUIRE(candidate.has_value());
    const StateGrid grid({-2.0}, {2.0}, {9});
    const auto field = hjb_residual(spec, *candidate, grid, {0.0, 0.5}, DerivativeMode::exact, 0.0, 1);
    std::ostringstream out;
    write_residual_csv(spec, field, out);
    const auto table = csv::parse(out.str());
    CHECK(table.header == std::vector<std::string>{"t", "x0", "residual", "argmax"});
    CHECK(table.rows.size() == 2 * (grid.size() - field.excluded_nodes.size()));
}
