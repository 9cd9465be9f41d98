#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracle {

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("ks_statistic: empty sample");
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) {
            ++i;
        }
        while (j < b.size() && b[j] == x) {
            ++j;
        }
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double ks_critical_001(std::size_t n, std::size_t m) {
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    return 1.628 * std::sqrt((nn + mm) / (nn * mm));
}

double poisson_band(double mean, std::size_t samples, double k) {
    return k * std::sqrt(mean / static_cast<double>(samples));
}

double binomial_band(double p, std::size_t trials, double k) {
    return k * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

double second_moment_rk4(double lambda, double x, double sigma, double jump_second_moment, double t, double horizon,
                         int steps) {
    const double source = sigma * sigma + jump_second_moment;
    auto rhs = [&](double m) { return 2.0 * lambda * m + source; };
    const double h = (horizon - t) / steps;
    double m = x * x;
    for (int i = 0; i < steps; ++i) {
        const double k1 = rhs(m);
        const double k2 = rhs(m + 0.5 * h * k1);
        const double k3 = rhs(m + 0.5 * h * k2);
        const double k4 = rhs(m + h * k3);
        m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return m;
}

double jump_reward_value(double x, double t, double horizon, const std::vector<double>& controls, double sigma,
                         double scale, double mark_second_moment, double reward, double lambda) {
    double best = -std::numeric_limits<double>::infinity();
    for (double a : controls) {
        const double jump = scale * scale * a * a * mark_second_moment;
        const double m2 = second_moment_rk4(lambda, x, sigma, jump, t, horizon);
        best = std::max(best, -m2 + reward * a * (horizon - t));
    }
    return best;
}

double observed_order(const std::vector<double>& steps, const std::vector<double>& errors) {
    const std::size_t n = steps.size();
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(steps[i]);
        const double ly = std::log(errors[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double nn = static_cast<double>(n);
    return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

} // namespace oracle
