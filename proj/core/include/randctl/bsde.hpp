#pragma once

#include "randctl/config.hpp"
#include "randctl/girsanov.hpp"
#include "randctl/lattice.hpp"
#include "randctl/problem.hpp"
#include "randctl/sim.hpp"
#include "randctl/stats.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace randctl {

/// Penalized value v^n on the (time x state grid x Lambda) lattice.
///
/// values[k] and continuation[k] are laid out [control][node];
/// continuation holds v~(t_k, x, a) = E[v^n(t_{k+1}, X', a)] + f dt.
struct PenalizedField {
    int level_n = 1;
    TimeGrid time;
    StateGrid grid;
    std::size_t controls = 0;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> continuation;
    std::uint64_t kernel_checksum = 0;
    std::uint64_t spec_fingerprint = 0;
    /// n dt lambda0(Lambda); the explicit penalization is monotone when <= 1.
    double stability = 0.0;
    ClampStats clamps;

    double value(std::size_t k, std::size_t node, std::size_t a) const noexcept {
        return values[k][a * grid.size() + node];
    }
    /// Clamped multilinear interpolation of v^n(t_k, ., a).
    double value_at(std::size_t k, std::span<const double> x, std::size_t a) const;
    double continuation_at(std::size_t k, std::span<const double> x, std::size_t a) const;
};

/// Backward recursion v~_a = E[v^n_{k+1}(X'^a, a)] + f_a dt, then
/// v^n_k(x, a) = v~_a + n dt sum_b (v~_b - v~_a)^+ lambda0(b).
PenalizedField solve_penalized_grid(const ProblemSpec& spec, int level_n, const TimeGrid& time, const StateGrid& grid,
                                    const KernelOptions& kernel, std::uint64_t seed);

/// Every level of the ladder on one shared time grid and state grid.
std::vector<PenalizedField> solve_penalized_ladder(const ProblemSpec& spec, const SolverSettings& settings,
                                                   const std::vector<int>& ladder);

/// nu(t_k, cell, a, b) = strength where v~(t_k, cell, b) > v~(t_k, cell, a), nu_min elsewhere.
IntensityControl argmax_tilt(const PenalizedField& field, double strength, double nu_min);

struct LsmcOptions {
    int degree = 2;
    double ridge = 1e-8;
    /// Paths whose full (Y, Z, L, R, K) tracks are kept.
    std::size_t record_paths = 8;
};

/// Estimates of (Y, Z, L, R, K) along a reference bundle.
struct BsdeQuintuple {
    struct Track {
        std::uint64_t path = 0;
        std::vector<double> y;
        /// steps x noise_dim
        std::vector<double> z;
        /// steps x jump atoms
        std::vector<double> l;
        /// steps x controls
        std::vector<double> r;
        std::vector<double> k;
    };

    int level_n = 1;
    std::size_t steps = 0;
    double dt = 0.0;
    std::size_t noise_dim = 0;
    std::size_t jump_atoms = 0;
    std::size_t controls = 0;
    Estimate y0;
    /// Per grid time: E[Y_k], E|Z_k|^2, E sum_j L_k(j)^2 lambda_j, E sum_b R_k(b)^+ lambda0(b), E K_k.
    std::vector<double> mean_y;
    std::vector<double> mean_z_sq;
    std::vector<double> mean_l_sq;
    std::vector<double> mean_r_pos;
    std::vector<double> mean_k;
    /// Per path: K_T and int sum_b R^+ lambda0 dt (= K_T / n).
    std::vector<double> k_terminal;
    std::vector<double> penalty_integral;
    std::vector<Track> tracks;
    /// Y_N = g(X_N) held on every path.
    bool terminal_exact = false;
    /// K_0 = 0 and K nondecreasing on every path.
    bool k_monotone = false;
    std::size_t ridge_fallbacks = 0;
    std::size_t sparse_fallbacks = 0;
};

/// Regression scheme on polynomial features of the standardized state,
/// one block per control (equivalent to crossing with a control one-hot).
BsdeQuintuple solve_penalized_lsmc(const ProblemSpec& spec, int level_n, const PathBundle& bundle,
                                   const LsmcOptions& options = {});

struct ConstraintReport {
    int level_n = 1;
    /// (E int sum_b R^+ lambda0 dt)^2
    double phi = 0.0;
    /// E |K_T|^2 / n^2
    double k_ratio = 0.0;
    Estimate penalty;
};

ConstraintReport constraint_gap(const BsdeQuintuple& quintuple);
/// Along reference paths with R read from the field's continuation values.
ConstraintReport constraint_gap(const ProblemSpec& spec, const PenalizedField& field, const PathBundle& reference);

struct LadderEntry {
    int level_n = 1;
    double value = 0.0;
    double standard_error = 0.0;
};

struct MinimalValueReport {
    std::vector<LadderEntry> levels;
    Extrapolation extrapolation = Extrapolation::last;
    bool monotone = true;
    /// Largest drop v^n - v^{n'} between consecutive levels (0 when monotone).
    double max_violation = 0.0;
    double limit = 0.0;
    double limit_se = 0.0;
};

/// Fits v + c1 / n + c2 / n^2 through the last three levels.
double richardson_limit(const std::vector<LadderEntry>& levels);

MinimalValueReport minimal_value(const std::vector<LadderEntry>& levels, Extrapolation extrapolation,
                                 double tol_mono);

/// v^n(0, x0, a0) read from each field.
std::vector<LadderEntry> ladder_values(const ProblemSpec& spec, const std::vector<PenalizedField>& fields);

struct MonotoneReport {
    bool pass = true;
    /// max over nodes of v^n - v^{n'} for consecutive levels.
    double max_violation = 0.0;
    std::size_t nodes_checked = 0;
};

MonotoneReport check_monotone(const std::vector<PenalizedField>& ladder, double tol_mono);

struct GrowthReport {
    /// Calibrated on the first level.
    double c_bar = 0.0;
    std::vector<double> ratios;
    bool pass = true;
};

/// max |v^n| / (1 + |x|_inf^pbar) per level, against 2 C_bar from level 1.
GrowthReport check_growth(const ProblemSpec& spec, const std::vector<PenalizedField>& ladder);

struct SpreadReport {
    std::vector<double> spreads;
    bool pass = true;
};

/// max_a v^n - min_a v^n at t_0 over interior nodes, non-increasing along the ladder.
SpreadReport check_a_spread(const std::vector<PenalizedField>& ladder, double tol_mono);

struct DppReport {
    double t = 0.0;
    double t_prime = 0.0;
    double lhs = 0.0;
    /// Best estimate over the tilt family.
    Estimate rhs;
    std::vector<double> strengths;
    std::vector<Estimate> family;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compares v^n(0, x0, a0) with sup over argmax tilts of strength
/// {n/4, n/2, n} of E^nu[ sum f dt + v^n(t', X_{t'}, I_{t'}) ].
DppReport check_randomized_dpp(const ProblemSpec& spec, const PenalizedField& field, double t_prime,
                               std::size_t paths, std::uint64_t seed, double nu_min, const Tolerances& tolerances);

/// CSV: t, state coordinates, a, value, level.
void write_field_csv(const ProblemSpec& spec, const PenalizedField& field, std::ostream& out);
std::string field_metadata_json(const ProblemSpec& spec, const PenalizedField& field);

} // namespace randctl
