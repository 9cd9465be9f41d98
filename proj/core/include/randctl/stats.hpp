#pragma once

#include <cstddef>
#include <span>

namespace randctl {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + compensation_; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

/// Monte Carlo estimate: sample mean with its standard error.
struct Estimate {
    double mean = 0.0;
    double standard_error = 0.0;
    std::size_t samples = 0;
};

/// Accumulates mean and variance; merge() is associative so per-chunk
/// accumulators can be reduced in any grouping.
class MeanAccumulator {
public:
    void add(double x) noexcept;
    void merge(const MeanAccumulator& other) noexcept;
    std::size_t count() const noexcept { return count_; }
    Estimate estimate() const noexcept;

private:
    std::size_t count_ = 0;
    CompensatedSum sum_;
    CompensatedSum sum_sq_;
    double shift_ = 0.0;
    bool shifted_ = false;
};

Estimate estimate_of(std::span<const double> samples) noexcept;

/// |a - b| <= multiple * sqrt(se_a^2 + se_b^2) + slack
bool agree_within(const Estimate& a, const Estimate& b, double multiple, double slack = 0.0) noexcept;

} // namespace randctl
