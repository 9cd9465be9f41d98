#pragma once

#include "randctl/lattice.hpp"
#include "randctl/problem.hpp"
#include "randctl/sim.hpp"
#include "randctl/stats.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace randctl {

/// Intensity control nu: theta has compensator nu_t(b) lambda0(db) dt under P^nu.
///
/// The feedback kind is piecewise constant on (time step x state cell x
/// current regime a x candidate mark b); cells are nearest nodes of a StateGrid.
class IntensityControl {
public:
    enum class Kind { constant, feedback };

    static IntensityControl constant(double nu, std::string id = {});
    /// `table` has time.steps x grid.size() x controls x controls entries.
    static IntensityControl feedback(TimeGrid time, StateGrid grid, std::size_t controls, std::vector<double> table,
                                     std::string id);

    Kind kind() const noexcept { return kind_; }
    const std::string& id() const noexcept { return id_; }
    double nu_min() const noexcept { return nu_min_; }
    double nu_max() const noexcept { return nu_max_; }

    std::size_t step_of(double t) const noexcept;
    std::size_t cell_of(std::span<const double> x) const noexcept;
    double at(std::size_t step, std::size_t cell, std::size_t a, std::size_t b) const noexcept;
    /// nu at time t for state x (left end of the step) and regime a.
    double operator()(double t, std::span<const double> x, std::size_t a, std::size_t b) const noexcept;

private:
    Kind kind_ = Kind::constant;
    std::string id_;
    double constant_ = 1.0;
    double nu_min_ = 1.0;
    double nu_max_ = 1.0;
    TimeGrid time_;
    StateGrid grid_;
    std::size_t controls_ = 0;
    std::vector<double> table_;
};

struct DoleansWeight {
    double log_kappa_t = 0.0;
    /// log kappa at every grid node when requested (log kappa_0 = 0).
    std::vector<double> log_running;

    double kappa() const noexcept;
};

/// kappa_T = exp(int_0^T int (1 - nu_s(b)) lambda0(db) ds) prod nu_{T_n}(eta_n),
/// evaluated in log space with exact segment integration.
DoleansWeight doleans_exponential(const ProblemSpec& spec, const SimulatedPath& path, const IntensityControl& nu,
                                  bool running = false);

using PathPayoff = std::function<double(const SimulatedPath&)>;

/// sum_i kappa_T^(i) payoff^(i) / M with its standard error.
Estimate reweighted_expectation(const ProblemSpec& spec, const PathBundle& bundle, const IntensityControl& nu,
                                const PathPayoff& payoff);

/// Discretized gain: sum_k f(t_k, X_k, I_{t_k}) dt + g(X_T).
double path_gain(const ProblemSpec& spec, const SimulatedPath& path);

/// Trajectory simulated directly under P^nu: theta is thinned from a Poisson
/// measure with rate nu_max lambda0(Lambda), with nu read from the current
/// state and regime.
SimulatedPath simulate_tilted_path(const ProblemSpec& spec, const IntensityControl& nu, const BundleOptions& options,
                                   std::uint64_t index, std::optional<std::size_t> stop_step = std::nullopt);

PathBundle simulate_tilted_bundle(const ProblemSpec& spec, const IntensityControl& nu, const BundleOptions& options,
                                  std::optional<std::size_t> stop_step = std::nullopt);

struct TiltedTheta {
    EventLog theta;
    ControlJumpPath control;
};

/// The theta-log and control path of one tilted trajectory.
TiltedTheta simulate_tilted_theta(const ProblemSpec& spec, const IntensityControl& nu, const BundleOptions& options,
                                  std::uint64_t index);

enum class GainMode { reweight, tilted };
std::string_view to_string(GainMode mode) noexcept;

struct GainEstimate {
    std::string nu_id;
    GainMode mode = GainMode::reweight;
    Estimate estimate;
    std::uint64_t seed = 0;

    std::string to_json() const;
};

struct GainOptions {
    std::size_t paths = 20000;
    std::size_t n_steps = 64;
    std::uint64_t seed = 0;
    std::optional<std::vector<double>> x0;
};

GainEstimate randomized_gain(const ProblemSpec& spec, const IntensityControl& nu, const GainOptions& options,
                             GainMode mode);

struct ModeComparison {
    GainEstimate reweight;
    GainEstimate tilted;
    double difference = 0.0;
    double combined_se = 0.0;
    bool agree = false;
};

/// Reweighting and direct tilted simulation on independent seeds.
ModeComparison compare_gain_modes(const ProblemSpec& spec, const IntensityControl& nu, const GainOptions& options,
                                  double se_multiple = 3.0);

} // namespace randctl
