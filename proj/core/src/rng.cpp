#include "randctl/rng.hpp"

#include <cmath>

namespace randctl {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

} // namespace

Philox4x32::Counter Philox4x32::bijection(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

CounterRng::CounterRng(StreamKey key) noexcept {
    const std::uint64_t mixed = splitmix64(key.seed);
    key_ = {static_cast<std::uint32_t>(mixed), static_cast<std::uint32_t>(mixed >> 32)};
    index_lo_ = static_cast<std::uint32_t>(key.index);
    // High index bits share a word with the stream tag; bundles never exceed 2^24 paths.
    index_hi_stream_ = (static_cast<std::uint32_t>(key.index >> 32) << 8) ^
                       static_cast<std::uint32_t>(key.stream);
}

void CounterRng::refill() noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_),
                                  static_cast<std::uint32_t>(block_ >> 32), index_lo_,
                                  index_hi_stream_};
    buffer_ = Philox4x32::bijection(ctr, key_);
    ++block_;
    cursor_ = 0;
}

CounterRng::result_type CounterRng::operator()() noexcept {
    if (cursor_ > 2) {
        refill();
    }
    const std::uint64_t lo = buffer_[static_cast<std::size_t>(cursor_)];
    const std::uint64_t hi = buffer_[static_cast<std::size_t>(cursor_ + 1)];
    cursor_ += 2;
    return (hi << 32) | lo;
}

double CounterRng::uniform() noexcept {
    // 53 random bits, shifted half an ulp off zero.
    const std::uint64_t bits = (*this)() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() noexcept {
    return inverse_normal_cdf(uniform());
}

double CounterRng::exponential(double rate) noexcept {
    return -std::log(uniform()) / rate;
}

double inverse_normal_cdf(double p) noexcept {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step against the exact CDF.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

} // namespace randctl
