#pragma once

#include "randctl/problem.hpp"
#include "randctl/rng.hpp"
#include "randctl/stats.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace randctl {

/// Largest supported full-state dimension (dim <= 8 plus one augmented coordinate).
inline constexpr std::size_t kMaxState = 9;

enum class MeasureId { pi, theta };

/// One atom of a marked point process. pi-events carry a mark z,
/// theta-events carry a control index.
struct Event {
    double time = 0.0;
    double z = 0.0;
    std::size_t control = 0;
};

struct EventLog {
    MeasureId measure = MeasureId::pi;
    double start = 0.0;
    double horizon = 1.0;
    std::vector<Event> events;

    /// Times strictly increasing inside (start, horizon].
    bool well_formed() const noexcept;
};

/// Exact sampler of the mark law (pi) or of the normalized lambda0 (theta).
class MarkSampler {
public:
    static MarkSampler pi(const JumpMeasureSpec& jumps);
    static MarkSampler theta(const RandomizationSpec& randomization);

    MeasureId measure() const noexcept { return measure_; }
    void draw(CounterRng& rng, Event& event) const;

private:
    MeasureId measure_ = MeasureId::pi;
    JumpMeasureSpec jumps_;
    std::vector<double> cumulative_;
};

/// Homogeneous Poisson process on (t0, horizon] by exponential inter-arrivals,
/// with i.i.d. marks. Deterministic in `key`.
EventLog simulate_poisson_measure(double rate, const MarkSampler& marks, double t0, double horizon, StreamKey key);

/// Piecewise-constant right-continuous control: regimes[i] holds on
/// [switch_times[i], switch_times[i+1]).
struct ControlJumpPath {
    std::vector<double> switch_times;
    std::vector<std::size_t> regimes;

    std::size_t regime_at(double t) const noexcept;
    /// Left limit I_{t-}.
    std::size_t regime_before(double t) const noexcept;
    std::size_t segments() const noexcept { return regimes.size(); }
};

ControlJumpPath build_control_path(const EventLog& theta, double start_time, std::size_t start_mark);

struct BrownianRecord {
    std::size_t steps = 0;
    std::size_t dim = 0;
    /// steps x dim increments, row-major.
    std::vector<double> increments;

    std::span<const double> step(std::size_t k) const noexcept { return {increments.data() + k * dim, dim}; }
};

/// Full-state trajectory on a uniform grid plus post-jump states.
struct StatePath {
    double t0 = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;
    std::size_t dim = 0;
    /// (steps + 1) x dim.
    std::vector<double> states;
    /// Control in force on each step (used by drift and running reward).
    std::vector<std::size_t> step_controls;
    std::vector<double> jump_times;
    /// One full state per pi-event, after the jump.
    std::vector<double> jump_states;
    bool overflow = false;

    double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }
    std::span<const double> node(std::size_t k) const noexcept { return {states.data() + k * dim, dim}; }
};

/// Coefficients frozen at the left end of one step.
struct FrozenStep {
    std::array<double, kMaxState> drift{};
    std::array<double, kMaxState * kMaxState> sigma{};
    bool has_noise = false;
};

/// Exponential-Euler step on the mild form:
///   X <- e^{dt A} [X + b dt + sigma dW - (int gamma dlambda_pi) dt],
/// followed by X <- X + gamma(t, X, I_{tau-}, z) at each pi-event of the step.
class StepIntegrator {
public:
    StepIntegrator(const ProblemSpec& spec, double dt, int compensator_nodes = 32);

    double dt() const noexcept { return dt_; }
    const ProblemSpec& spec() const noexcept { return *spec_; }

    /// Drift net of the jump compensator, and diffusion, at (t, state, a).
    FrozenStep freeze(double t, std::span<const double> state, std::size_t a) const;
    /// Flow part of one step; `dW` has noise_dim() entries.
    void flow(const FrozenStep& frozen, std::span<double> state, std::span<const double> dW) const;
    void flow(double t, std::span<double> state, std::size_t a, std::span<const double> dW) const;
    void jump(double t, std::span<double> state, std::size_t a, double z) const;

private:
    const ProblemSpec* spec_;
    double dt_;
    std::vector<double> decay_;
    std::vector<MarkAtom> compensator_atoms_;
};

/// Which control drives the state.
struct ControlSource {
    /// Randomized control I; the drift uses I_{t_k}, jumps use I_{tau-}.
    const ControlJumpPath* path = nullptr;
    /// Otherwise a schedule or feedback law, constant over each step.
    std::function<std::size_t(std::size_t step, double t, std::span<const double> state)> feedback;

    static ControlSource constant(std::size_t a);
    static ControlSource randomized(const ControlJumpPath& path);
};

/// Integrates from (t0, initial) over n_steps uniform steps to the horizon.
StatePath integrate_state(const ProblemSpec& spec, const ControlSource& control, const BrownianRecord& brownian,
                          const EventLog& pi, double t0, std::span<const double> initial, std::size_t n_steps);

/// One simulated trajectory with all of its drivers.
struct SimulatedPath {
    std::uint64_t index = 0;
    StatePath state;
    ControlJumpPath control;
    EventLog pi;
    EventLog theta;
    BrownianRecord brownian;
};

struct BundleOptions {
    std::size_t paths = 1000;
    std::size_t n_steps = 64;
    double t0 = 0.0;
    /// Unaugmented start; drawn from the initial law when absent.
    std::optional<std::vector<double>> x0;
    /// Initial mark; randomization.a0_index when absent.
    std::optional<std::size_t> start_mark;
    /// Fixed control instead of the randomized control.
    std::optional<std::size_t> constant_control;
    std::uint64_t seed = 0;
    /// Offset added to every path index (disjoint substreams for sub-bundles).
    std::uint64_t index_offset = 0;
};

struct PathBundle {
    std::uint64_t seed = 0;
    std::uint64_t spec_fingerprint = 0;
    std::size_t n_steps = 0;
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<SimulatedPath> paths;
    /// Paths dropped because the state left the floating-point range.
    std::size_t overflow_count = 0;
};

/// Start state of path `index` (full state, augmentation included).
std::vector<double> draw_initial_state(const ProblemSpec& spec, const BundleOptions& options, std::uint64_t index);

/// Drivers of path `index`: Brownian increments and pi-events.
BrownianRecord draw_brownian(const ProblemSpec& spec, std::size_t n_steps, double dt, std::uint64_t seed,
                             std::uint64_t index);

SimulatedPath simulate_path(const ProblemSpec& spec, const BundleOptions& options, std::uint64_t index);
PathBundle simulate_bundle(const ProblemSpec& spec, const BundleOptions& options);

struct MomentReport {
    double p = 1.0;
    /// Mean over paths of sup_k |X_{t_k}|^p (core coordinates).
    double sup_moment = 0.0;
    double cp = 1.0;
    /// sup_moment / (cp (1 + mean |x0|^p)).
    double bound_ratio = 0.0;
};

MomentReport empirical_moment_check(const ProblemSpec& spec, const PathBundle& bundle, double p,
                                    std::optional<double> cp = std::nullopt);

/// Largest sup-moment ratio over pilot runs started at 0 and at e_1, floored at 1.
double calibrate_moment_constant(const ProblemSpec& spec, double p, std::size_t n_steps, std::size_t paths,
                                 std::uint64_t seed);

/// Columnar CSV: path, step, t, state coordinates, control.
void write_bundle_csv(const ProblemSpec& spec, const PathBundle& bundle, std::ostream& out);
std::string bundle_metadata_json(const ProblemSpec& spec, const PathBundle& bundle);

} // namespace randctl
