#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace randctl {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A (seed, path, stream) triple addresses an independent substream, so
/// path i of a bundle can be regenerated without touching paths 0..i-1.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter bijection(Counter ctr, Key key) noexcept;
};

/// Substream tags. Values are part of the reproducibility contract.
enum class Stream : std::uint32_t {
    initial_state = 1,
    brownian = 2,
    pi_measure = 3,
    theta_measure = 4,
    theta_acceptance = 5,
    kernel_inner = 6,
    pilot = 7,
    spot_check = 8,
};

struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    Stream stream = Stream::initial_state;
};

/// UniformRandomBitGenerator over one Philox substream.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(StreamKey key) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    /// Standard normal by inversion; one uniform per draw keeps streams aligned.
    double normal() noexcept;
    /// Exponential with the given rate (> 0).
    double exponential(double rate) noexcept;

    std::uint64_t blocks_used() const noexcept { return block_; }

private:
    void refill() noexcept;

    Philox4x32::Key key_{};
    std::uint32_t index_lo_ = 0;
    std::uint32_t index_hi_stream_ = 0;
    std::uint64_t block_ = 0;
    Philox4x32::Counter buffer_{};
    int cursor_ = 4;
};

/// Inverse of the standard normal CDF (Acklam's rational approximation with
/// one Halley refinement step; relative error below 1e-15).
double inverse_normal_cdf(double p) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

} // namespace randctl
