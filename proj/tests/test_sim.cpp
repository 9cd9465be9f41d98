#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <randctl/sim.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <vector>

using namespace randctl;

namespace {

RandomizationSpec two_marks() {
    RandomizationSpec r;
    r.lambda0_weights = {1.0, 1.0};
    r.a0_index = 0;
    return r;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

} // namespace

TEST_CASE("Poisson measure: rate zero gives an empty log") {
    const auto marks = MarkSampler::theta(two_marks());
    const auto log = simulate_poisson_measure(0.0, marks, 0.0, 1.0, {1, 0, Stream::theta_measure});
    CHECK(log.events.empty());
    CHECK(log.well_formed());
}

TEST_CASE("Poisson measure: mean count matches the rate") {
    const auto marks = MarkSampler::theta(two_marks());
    constexpr std::size_t logs = 10000;
    double total = 0.0;
    bool ordered = true;
    for (std::size_t i = 0; i < logs; ++i) {
        const auto log = simulate_poisson_measure(2.0, marks, 0.0, 1.0, {11, i, Stream::theta_measure});
        total += static_cast<double>(log.events.size());
        ordered = ordered && log.well_formed();
        for (const auto& e : log.events) {
            ordered = ordered && e.time > 0.0 && e.time <= 1.0;
        }
    }
    CHECK(ordered);
    CHECK(std::abs(total / logs - 2.0) <= oracle::poisson_band(2.0, logs));
}

TEST_CASE("Poisson measure is a pure function of its key") {
    const auto spec = fixtures::problem("jump_reward");
    const auto marks = MarkSampler::pi(spec.jump_measure);
    const auto a = simulate_poisson_measure(3.0, marks, 0.0, 1.0, {5, 17, Stream::pi_measure});
    const auto b = simulate_poisson_measure(3.0, marks, 0.0, 1.0, {5, 17, Stream::pi_measure});
    const auto c = simulate_poisson_measure(3.0, marks, 0.0, 1.0, {5, 18, Stream::pi_measure});
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        CHECK(a.events[i].time == b.events[i].time);
        CHECK(a.events[i].z == b.events[i].z);
    }
    const bool differs = a.events.size() != c.events.size() ||
                         (!a.events.empty() && a.events.front().time != c.events.front().time);
    CHECK(differs);
}

TEST_CASE("control path from a theta log") {
    SUBCASE("no events keeps the start mark") {
        EventLog empty{MeasureId::theta, 0.0, 1.0, {}};
        const auto path = build_control_path(empty, 0.0, 2);
        CHECK(path.segments() == 1);
        CHECK(path.regime_at(0.0) == 2);
        CHECK(path.regime_at(1.0) == 2);
    }
    SUBCASE("one event switches at its time") {
        EventLog log{MeasureId::theta, 0.0, 1.0, {{0.3, 0.0, 2}}};
        const auto path = build_control_path(log, 0.0, 0);
        CHECK(path.segments() == 2);
        CHECK(path.switch_times.front() == 0.0);
        CHECK(path.regimes.front() == 0);
        CHECK(path.regime_at(0.29) == 0);
        CHECK(path.regime_at(0.3) == 2);
        CHECK(path.regime_before(0.3) == 0);
        CHECK(path.regime_at(1.0) == 2);
    }
}

TEST_CASE("uniform lambda0 marks are equally frequent") {
    const auto marks = MarkSampler::theta(two_marks());
    std::size_t events = 0;
    std::size_t second = 0;
    for (std::uint64_t i = 0; events < 10000; ++i) {
        const auto log = simulate_poisson_measure(2.0, marks, 0.0, 1.0, {23, i, Stream::theta_measure});
        for (const auto& e : log.events) {
            ++events;
            second += e.control == 1 ? 1 : 0;
        }
    }
    const double freq = static_cast<double>(second) / static_cast<double>(events);
    CHECK(std::abs(freq - 0.5) <= oracle::binomial_band(0.5, events));
}

TEST_CASE("exponential Euler is exact on deterministic linear flows") {
    SUBCASE("pure decay") {
        const auto spec = fixtures::problem("uncontrolled_decay");
        const std::vector<double> x0{1.5};
        for (std::size_t n : {1u, 3u, 64u, 257u}) {
            BrownianRecord brownian{n, 0, {}};
            EventLog pi{MeasureId::pi, 0.0, spec.horizon, {}};
            const auto path = integrate_state(spec, ControlSource::constant(0), brownian, pi, 0.0, x0, n);
            for (std::size_t k = 0; k <= n; ++k) {
                CHECK(path.node(k)[0] == doctest::Approx(std::exp(-path.time(k)) * 1.5).epsilon(1e-14));
            }
        }
    }
    SUBCASE("unit drift") {
        const auto spec = fixtures::problem("bang_drift", [](auto& j) { j["parameters"]["sigma"] = 0.0; });
        const std::vector<double> x0{0.25};
        const std::size_t n = 64;
        BrownianRecord brownian{n, 1, std::vector<double>(n, 0.0)};
        EventLog pi{MeasureId::pi, 0.0, spec.horizon, {}};
        const auto path = integrate_state(spec, ControlSource::constant(2), brownian, pi, 0.0, x0, n);
        for (std::size_t k = 0; k <= n; ++k) {
            CHECK(path.node(k)[0] == doctest::Approx(0.25 + path.time(k)).epsilon(1e-15));
        }
    }
}

TEST_CASE("compensated jumps are mean zero") {
    const auto spec = fixtures::problem("jump_reward");
    BundleOptions options;
    options.paths = 100000;
    options.n_steps = 16;
    options.constant_control = 2;
    options.x0 = std::vector<double>{0.5};
    options.seed = 31;
    const auto bundle = simulate_bundle(spec, options);
    std::vector<double> terminal;
    terminal.reserve(bundle.paths.size());
    for (const auto& p : bundle.paths) {
        terminal.push_back(p.state.node(p.state.steps)[0]);
    }
    const auto e = estimate_of(terminal);
    CHECK(e.standard_error > 0.0);
    CHECK(std::abs(e.mean - 0.5) <= 3.0 * e.standard_error);
}

TEST_CASE("bundles are reproducible and seed-addressable") {
    const auto spec = fixtures::problem("ou_switch");
    BundleOptions options;
    options.paths = 50;
    options.n_steps = 32;
    options.seed = 77;
    const auto a = simulate_bundle(spec, options);
    const auto b = simulate_bundle(spec, options);
    REQUIRE(a.paths.size() == b.paths.size());
    for (std::size_t i = 0; i < a.paths.size(); ++i) {
        CHECK(bitwise_equal(a.paths[i].state.states, b.paths[i].state.states));
        CHECK(a.paths[i].control.regimes == b.paths[i].control.regimes);
    }
    const auto single = simulate_path(spec, options, 37);
    CHECK(bitwise_equal(single.state.states, a.paths[37].state.states));

    options.seed = 78;
    const auto c = simulate_bundle(spec, options);
    CHECK_FALSE(bitwise_equal(a.paths[0].state.states, c.paths[0].state.states));

    std::ostringstream csv_a;
    std::ostringstream csv_b;
    write_bundle_csv(spec, a, csv_a);
    write_bundle_csv(spec, b, csv_b);
    CHECK(csv_a.str() == csv_b.str());
    CHECK(bundle_metadata_json(spec, a) == bundle_metadata_json(spec, b));
}

TEST_CASE("states are adapted to their drivers") {
    const auto spec = fixtures::problem("ou_switch");
    BundleOptions options;
    options.paths = 1;
    options.n_steps = 64;
    options.seed = 5;
    const auto path = simulate_path(spec, options, 0);
    const std::size_t k = 32;
    const double t_k = path.state.time(k);
    REQUIRE(t_k == 0.5);

    auto truncated_spec = spec;
    truncated_spec.horizon = t_k;
    BrownianRecord brownian = path.brownian;
    brownian.steps = k;
    brownian.increments.resize(k * brownian.dim);
    EventLog pi = path.pi;
    pi.horizon = t_k;
    std::erase_if(pi.events, [&](const Event& e) { return e.time > t_k; });

    const auto initial = path.state.node(0);
    const auto rerun = integrate_state(truncated_spec, ControlSource::randomized(path.control), brownian, pi, 0.0,
                                       std::vector<double>(initial.begin(), initial.end()), k);
    for (std::size_t j = 0; j <= k; ++j) {
        CHECK(rerun.node(j)[0] == path.state.node(j)[0]);
    }
}

TEST_CASE("pi and theta events never coincide") {
    const auto spec = fixtures::problem("ou_switch");
    BundleOptions options;
    options.paths = 2000;
    options.n_steps = 16;
    options.seed = 9;
    const auto bundle = simulate_bundle(spec, options);
    std::size_t collisions = 0;
    for (const auto& p : bundle.paths) {
        std::set<double> pi_times;
        for (const auto& e : p.pi.events) {
            pi_times.insert(e.time);
        }
        for (const auto& e : p.theta.events) {
            collisions += pi_times.count(e.time);
        }
        CHECK(p.pi.well_formed());
        CHECK(p.theta.well_formed());
        CHECK(p.control.regimes.front() == spec.randomization.a0_index);
    }
    CHECK(collisions == 0);
}

TEST_CASE("empirical moment check") {
    SUBCASE("deterministic decay gives |x0|^p") {
        const auto spec = fixtures::problem("uncontrolled_decay");
        BundleOptions options;
        options.paths = 10;
        options.n_steps = 8;
        options.x0 = std::vector<double>{2.0};
        const auto bundle = simulate_bundle(spec, options);
        const auto report = empirical_moment_check(spec, bundle, 2.0, 1.0);
        CHECK(report.sup_moment == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(report.bound_ratio == doctest::Approx(4.0 / 5.0));
    }
    SUBCASE("the bound ratio stays bounded when x0 doubles") {
        const auto spec = fixtures::problem("bang_drift");
        auto ratio_at = [&](double x0) {
            BundleOptions options;
            options.paths = 4000;
            options.n_steps = 32;
            options.x0 = std::vector<double>{x0};
            options.seed = 3;
            return empirical_moment_check(spec, simulate_bundle(spec, options), 2.0, 1.0).bound_ratio;
        };
        const double r1 = ratio_at(1.0);
        const double r2 = ratio_at(2.0);
        const double r4 = ratio_at(4.0);
        // sup |x0 + drift + noise|^2 / (1 + x0^2) tends to a constant as x0 grows.
        CHECK(r2 / r1 <= 2.0);
        CHECK(r4 / r2 <= 2.0);
        CHECK(r4 <= 4.0);
    }
    SUBCASE("an empty bundle is an error") {
        const auto spec = fixtures::problem("bang_drift");
        PathBundle empty;
        CHECK_THROWS_WITH_AS(empirical_moment_check(spec, empty, 2.0), doctest::Contains("no paths"), Error);
    }
}
