#include "randctl/stats.hpp"

#include <cmath>

namespace randctl {

void CompensatedSum::add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
        compensation_ += (sum_ - t) + x;
    } else {
        compensation_ += (x - t) + sum_;
    }
    sum_ = t;
}

void MeanAccumulator::add(double x) noexcept {
    // Shifting by the first sample keeps the variance formula well conditioned.
    if (!shifted_) {
        shift_ = x;
        shifted_ = true;
    }
    const double y = x - shift_;
    sum_.add(y);
    sum_sq_.add(y * y);
    ++count_;
}

void MeanAccumulator::merge(const MeanAccumulator& other) noexcept {
    if (other.count_ == 0) {
        return;
    }
    if (count_ == 0) {
        *this = other;
        return;
    }
    // Re-center the other accumulator onto this shift.
    const double delta = other.shift_ - shift_;
    const double n = static_cast<double>(other.count_);
    const double s1 = other.sum_.value();
    const double s2 = other.sum_sq_.value();
    sum_.add(s1 + n * delta);
    sum_sq_.add(s2 + 2.0 * delta * s1 + n * delta * delta);
    count_ += other.count_;
}

Estimate MeanAccumulator::estimate() const noexcept {
    Estimate e;
    e.samples = count_;
    if (count_ == 0) {
        return e;
    }
    const double n = static_cast<double>(count_);
    const double mean_shifted = sum_.value() / n;
    e.mean = shift_ + mean_shifted;
    if (count_ > 1) {
        const double var = (sum_sq_.value() - n * mean_shifted * mean_shifted) / (n - 1.0);
        e.standard_error = std::sqrt(std::max(var, 0.0) / n);
    }
    return e;
}

Estimate estimate_of(std::span<const double> samples) noexcept {
    MeanAccumulator acc;
    for (double x : samples) {
        acc.add(x);
    }
    return acc.estimate();
}

bool agree_within(const Estimate& a, const Estimate& b, double multiple, double slack) noexcept {
    const double se = std::sqrt(a.standard_error * a.standard_error +
                                b.standard_error * b.standard_error);
    return std::abs(a.mean - b.mean) <= multiple * se + slack;
}

} // namespace randctl
