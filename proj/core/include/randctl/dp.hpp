#pragma once

#include "randctl/bsde.hpp"
#include "randctl/config.hpp"
#include "randctl/lattice.hpp"
#include "randctl/problem.hpp"
#include "randctl/stats.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace randctl {

/// Classical dynamic-programming value v(t_k, x) with its argmax policy.
struct DpField {
    TimeGrid time;
    StateGrid grid;
    std::size_t controls = 0;
    /// [k][node]
    std::vector<std::vector<double>> values;
    /// [k][node] for k < steps; ties go to the lowest control index.
    std::vector<std::vector<std::uint32_t>> policy;
    std::uint64_t kernel_checksum = 0;
    std::uint64_t spec_fingerprint = 0;
    ClampStats clamps;

    double value_at(std::size_t k, std::span<const double> x) const;
};

/// v(t_k, x) = max_a { E[v(t_{k+1}, X'^a)] + f(t_k, x, a) dt } through the
/// same TransitionKernel as the penalized solver.
DpField solve_dp_grid(const ProblemSpec& spec, const TimeGrid& time, const StateGrid& grid,
                      const KernelOptions& kernel, std::uint64_t seed);

/// Randomized side of the value comparison.
struct RandomizedValue {
    std::uint64_t spec_fingerprint = 0;
    std::uint64_t kernel_checksum = 0;
    double horizon = 0.0;
    MinimalValueReport ladder;
    /// Tilted gains along a tilt ladder (increasing strength).
    std::vector<Estimate> tilt_gains;
};

struct ValueEqualityVerdict {
    double v0_dp = 0.0;
    double v0_bsde = 0.0;
    double bsde_gap = 0.0;
    bool bsde_pass = false;
    /// Every tilted gain <= v0_dp + se_multiple SE.
    bool tilt_dominated = true;
    /// Gap v0_dp - tilt gain does not grow along the tilt ladder (within noise).
    bool tilt_gap_shrinks = true;
    bool pass = false;
};

/// Throws SpecMismatch when the DP field and the randomized value were
/// produced for different problems or with different transition kernels.
ValueEqualityVerdict value_equality_check(const ProblemSpec& spec, const DpField& dp, const RandomizedValue& randomized,
                                          const Tolerances& tolerances);

struct RolloutReport {
    Estimate gain;
    double v0 = 0.0;
    bool upper_ok = false;
    bool lower_ok = false;
};

/// Simulates the argmax feedback policy (nearest-node lookup) and compares
/// its gain with v(0, x0).
RolloutReport policy_rollout(const ProblemSpec& spec, const DpField& dp, std::size_t paths, std::uint64_t seed,
                             const Tolerances& tolerances);

/// CSV: t, state coordinates, value, argmax.
void write_dp_csv(const ProblemSpec& spec, const DpField& dp, std::ostream& out);

} // namespace randctl
