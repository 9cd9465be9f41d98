#include "doctest.h"

#include <randctl/csv.hpp>
#include <randctl/quadrature.hpp>
#include <randctl/rng.hpp>
#include <randctl/stats.hpp>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

using namespace randctl;

TEST_CASE("Philox matches the Random123 known-answer vectors") {
    const auto zero = Philox4x32::bijection({0, 0, 0, 0}, {0, 0});
    CHECK(zero == Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    const auto ones = Philox4x32::bijection({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                            {0xffffffffu, 0xffffffffu});
    CHECK(ones == Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    const auto pi = Philox4x32::bijection({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                          {0xa4093822u, 0x299f31d0u});
    CHECK(pi == Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("substreams are addressable and distinct") {
    CounterRng a({7, 3, Stream::brownian});
    CounterRng b({7, 3, Stream::brownian});
    CounterRng c({7, 4, Stream::brownian});
    CounterRng d({7, 3, Stream::pi_measure});
    bool differs_c = false;
    bool differs_d = false;
    for (int i = 0; i < 16; ++i) {
        const auto x = a();
        CHECK(x == b());
        differs_c = differs_c || x != c();
        differs_d = differs_d || x != d();
    }
    CHECK(differs_c);
    CHECK(differs_d);
}

TEST_CASE("uniform and normal draws have the right moments") {
    CounterRng rng({1, 0, Stream::pilot});
    MeanAccumulator u;
    MeanAccumulator z;
    MeanAccumulator z2;
    MeanAccumulator e;
    constexpr int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform();
        REQUIRE(x > 0.0);
        REQUIRE(x < 1.0);
        u.add(x);
        const double g = rng.normal();
        z.add(g);
        z2.add(g * g);
        e.add(rng.exponential(2.0));
    }
    CHECK(std::abs(u.estimate().mean - 0.5) <= 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(z.estimate().mean) <= 4.0 / std::sqrt(n));
    CHECK(std::abs(z2.estimate().mean - 1.0) <= 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(e.estimate().mean - 0.5) <= 4.0 * 0.5 / std::sqrt(n));
}

TEST_CASE("inverse normal CDF") {
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(inverse_normal_cdf(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-13));
    CHECK(inverse_normal_cdf(0.3) == doctest::Approx(-inverse_normal_cdf(0.7)).epsilon(1e-15));
}

TEST_CASE("quadrature rules integrate polynomials exactly") {
    SUBCASE("Gauss-Legendre on [0, 3]") {
        const auto rule = gauss_legendre(5, 0.0, 3.0);
        double w = 0.0;
        double x9 = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            w += rule.weights[i];
            x9 += rule.weights[i] * std::pow(rule.nodes[i], 9);
        }
        CHECK(w == doctest::Approx(3.0).epsilon(1e-14));
        CHECK(x9 == doctest::Approx(std::pow(3.0, 10) / 10.0).epsilon(1e-12));
    }
    SUBCASE("Gauss-Hermite moments of N(0, 1)") {
        const auto rule = gauss_hermite_normal(9);
        double m2 = 0.0;
        double m4 = 0.0;
        double m3 = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            m2 += rule.weights[i] * std::pow(rule.nodes[i], 2);
            m3 += rule.weights[i] * std::pow(rule.nodes[i], 3);
            m4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
        }
        CHECK(std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(m2 == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(std::abs(m3) <= 1e-13);
        CHECK(m4 == doctest::Approx(3.0).epsilon(1e-13));
    }
    SUBCASE("Gauss-Laguerre moments of Exp(1)") {
        const auto rule = gauss_laguerre(6);
        double m3 = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            m3 += rule.weights[i] * std::pow(rule.nodes[i], 3);
        }
        CHECK(m3 == doctest::Approx(6.0).epsilon(1e-12));
    }
    SUBCASE("non-positive sizes are rejected") {
        CHECK_THROWS(gauss_legendre(0));
    }
}

TEST_CASE("mean accumulator") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0, 5.0};
    const auto e = estimate_of(xs);
    CHECK(e.mean == doctest::Approx(3.0));
    // Sample variance 2.5.
    CHECK(e.standard_error == doctest::Approx(std::sqrt(2.5 / 5.0)));
    CHECK(e.samples == 5);

    MeanAccumulator left;
    MeanAccumulator right;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        (i < 2 ? left : right).add(xs[i]);
    }
    left.merge(right);
    CHECK(left.estimate().mean == doctest::Approx(e.mean).epsilon(1e-15));
    CHECK(left.estimate().standard_error == doctest::Approx(e.standard_error).epsilon(1e-14));

    MeanAccumulator shifted;
    for (int i = 0; i < 1000; ++i) {
        shifted.add(1e9 + (i % 2));
    }
    CHECK(shifted.estimate().standard_error == doctest::Approx(0.5 / std::sqrt(999.0)).epsilon(1e-6));

    CHECK(agree_within({1.0, 0.2, 10}, {1.5, 0.2, 10}, 3.0));
    CHECK_FALSE(agree_within({1.0, 0.01, 10}, {1.5, 0.01, 10}, 3.0));
}

TEST_CASE("compensated summation") {
    CompensatedSum s;
    s.add(1.0);
    for (int i = 0; i < 10; ++i) {
        s.add(1e-16);
    }
    s.add(-1.0);
    CHECK(s.value() == doctest::Approx(1e-15).epsilon(1e-10));
}

TEST_CASE("CSV writer and parser") {
    std::ostringstream out;
    csv::Writer w(out);
    w.header({"a", "b,c", "quote\"d"});
    w.row({"1", "", "x\ny"});
    CHECK(out.str() == "a,\"b,c\",\"quote\"\"d\"\r\n1,,\"x\ny\"\r\n");

    const auto table = csv::parse(out.str());
    CHECK(table.header == std::vector<std::string>{"a", "b,c", "quote\"d"});
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0][2] == "x\ny");
    CHECK(table.column("b,c") == 1);
    CHECK(table.column("missing") == -1);

    CHECK(csv::parse("x,y\n1,2\n").rows.size() == 1);
    CHECK_THROWS_AS(csv::parse("x,y\n1\n"), std::runtime_error);
    CHECK_THROWS_AS(csv::parse("x\n\"open\n"), std::runtime_error);
}

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        CHECK(csv::to_number(csv::format_number(v)) == v);
    }
    CHECK(csv::format_number(0.5) == csv::format_number(0.5));
}
