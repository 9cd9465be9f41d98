#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's solvers.

#include <cstddef>
#include <vector>

namespace oracle {

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// Asymptotic two-sample critical value at level 0.01:
/// 1.628 * sqrt((n + m) / (n m)).
double ks_critical_001(std::size_t n, std::size_t m);

/// k standard errors of a sample mean of `samples` Poisson(mean) counts.
double poisson_band(double mean, std::size_t samples, double k = 3.0);

/// k standard deviations of an empirical frequency with success probability p.
double binomial_band(double p, std::size_t trials, double k = 3.0);

/// E[X_T^2] for dX = lambda X dt + sigma dW + (compensated jumps of second
/// moment `jump_second_moment` per unit time), integrated by classical RK4
/// from m2(t) = x^2 on [t, horizon].
double second_moment_rk4(double lambda, double x, double sigma, double jump_second_moment, double t, double horizon,
                         int steps = 2000);

/// Value of the jump-reward problem with g = -x^2 and running reward r a:
/// max over constant controls of -E[X_T^2] + r a (T - t), with the
/// controlled jump term scale^2 a^2 M feeding the second moment.
double jump_reward_value(double x, double t, double horizon, const std::vector<double>& controls, double sigma,
                         double scale, double mark_second_moment, double reward, double lambda = 0.0);

/// Least-squares slope of log(errors) against log(steps).
double observed_order(const std::vector<double>& steps, const std::vector<double>& errors);

} // namespace oracle
