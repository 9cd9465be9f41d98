#pragma once

#include "randctl/config.hpp"
#include "randctl/problem.hpp"
#include "randctl/sim.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace randctl {

struct TimeGrid {
    double t0 = 0.0;
    double horizon = 1.0;
    std::size_t steps = 1;

    double dt() const noexcept { return (horizon - t0) / static_cast<double>(steps); }
    double time(std::size_t k) const noexcept { return k == steps ? horizon : t0 + static_cast<double>(k) * dt(); }
};

/// Shared grid of a penalization ladder up to level n_max:
/// N = max(ceil(steps_per_unit_time T), ceil(2 n_max lambda0(Lambda) T)),
/// so n dt lambda0(Lambda) <= 1/2 at every level.
TimeGrid ladder_time_grid(const ProblemSpec& spec, const SolverSettings& settings, int n_max);

/// Tensor grid on the full state, row-major with the last coordinate fastest.
class StateGrid {
public:
    StateGrid() = default;
    StateGrid(std::vector<double> lower, std::vector<double> upper, std::vector<int> nodes);

    std::size_t dims() const noexcept { return lower_.size(); }
    std::size_t size() const noexcept { return size_; }
    int nodes(std::size_t i) const noexcept { return nodes_[i]; }
    double lower(std::size_t i) const noexcept { return lower_[i]; }
    double upper(std::size_t i) const noexcept { return upper_[i]; }
    double step(std::size_t i) const noexcept { return step_[i]; }
    const std::vector<double>& lower() const noexcept { return lower_; }
    const std::vector<double>& upper() const noexcept { return upper_; }
    const std::vector<int>& node_counts() const noexcept { return nodes_; }

    double coordinate(std::size_t dim, int index) const noexcept { return lower_[dim] + index * step_[dim]; }
    void point(std::size_t flat, std::span<double> out) const noexcept;
    void multi_index(std::size_t flat, std::span<int> out) const noexcept;
    std::size_t flat_index(std::span<const int> multi) const noexcept;
    /// Nearest node; coordinates outside the box are clamped.
    std::size_t nearest(std::span<const double> x) const noexcept;
    /// True when some coordinate lies within `band` nodes of the box edge.
    bool in_band(std::size_t flat, int band) const noexcept;

    /// Multilinear interpolation of node values, clamped to the box.
    /// Sets `clamped` when x lies outside.
    double interpolate(std::span<const double> values, std::span<const double> x, bool& clamped) const noexcept;

private:
    std::vector<double> lower_;
    std::vector<double> upper_;
    std::vector<int> nodes_;
    std::vector<double> step_;
    std::vector<std::size_t> stride_;
    std::size_t size_ = 0;
};

/// Pilot-based default grid: for every constant control, the envelope of
/// mean +- sd_multiple sd over time, padded by pad_fraction of its width.
StateGrid pilot_state_grid(const ProblemSpec& spec, const SolverSettings& settings);

/// Explicit grid when configured, pilot grid otherwise.
StateGrid make_state_grid(const ProblemSpec& spec, const SolverSettings& settings);

/// Transition mass that fell outside the grid.
struct ClampStats {
    double clamped_weight = 0.0;
    double total_weight = 0.0;
    std::size_t clamped_outcomes = 0;

    void merge(const ClampStats& other) noexcept;
    double fraction() const noexcept { return total_weight > 0.0 ? clamped_weight / total_weight : 0.0; }
    /// More than 1% of the one-step transition mass was clamped.
    bool warn() const noexcept { return fraction() > 0.01; }
};

/// One-step transition law of the exponential-Euler scheme under a frozen
/// control: Gauss-Hermite Brownian nodes, Poisson jump counts up to
/// max_jumps (tail lumped into the last count) and mark atoms; or seeded
/// inner Monte Carlo. Shared verbatim by the DP and penalized solvers.
class TransitionKernel {
public:
    TransitionKernel(const ProblemSpec& spec, const TimeGrid& time, const KernelOptions& options, std::uint64_t seed);

    /// E[ next(X_{t_{k+1}}) | X_{t_k} = x, control a ], `next` given on `grid`.
    double expectation(const StateGrid& grid, std::span<const double> next, std::size_t k, std::span<const double> x,
                       std::size_t a, std::size_t node, ClampStats& clamps) const;

    /// FNV-1a over the kernel's atoms, options and problem fingerprint.
    std::uint64_t checksum() const noexcept { return checksum_; }
    const TimeGrid& time() const noexcept { return time_; }
    std::size_t outcome_count() const noexcept;

private:
    struct JumpTuple {
        double weight;
        std::vector<double> marks;
    };

    double quadrature(const StateGrid& grid, std::span<const double> next, double t, std::span<const double> x,
                      std::size_t a, ClampStats& clamps) const;
    double monte_carlo(const StateGrid& grid, std::span<const double> next, std::size_t k, double t,
                       std::span<const double> x, std::size_t a, std::size_t node, ClampStats& clamps) const;

    const ProblemSpec* spec_;
    TimeGrid time_;
    KernelOptions options_;
    std::uint64_t seed_;
    StepIntegrator integrator_;
    std::vector<double> brownian_weights_;
    /// brownian_weights_.size() x noise_dim increments.
    std::vector<double> brownian_nodes_;
    std::vector<JumpTuple> jumps_;
    std::uint64_t checksum_ = 0;
};

/// Lattice tables are laid out [control][node] so each control's slice can
/// be interpolated directly.
inline double field_at(std::span<const double> values, std::size_t grid_size, std::size_t node, std::size_t a) {
    return values[a * grid_size + node];
}

} // namespace randctl
