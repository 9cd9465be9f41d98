#include "randctl/lattice.hpp"

#include "randctl/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace randctl {

TimeGrid ladder_time_grid(const ProblemSpec& spec, const SolverSettings& settings, int n_max) {
    const double horizon = spec.horizon;
    const auto base = static_cast<std::size_t>(std::ceil(settings.steps_per_unit_time * horizon - 1e-9));
    const auto stable = static_cast<std::size_t>(
        std::ceil(2.0 * n_max * spec.randomization.total_mass() * horizon - 1e-9));
    TimeGrid grid;
    grid.t0 = 0.0;
    grid.horizon = horizon;
    grid.steps = std::max<std::size_t>({base, stable, 1});
    return grid;
}

StateGrid::StateGrid(std::vector<double> lower, std::vector<double> upper, std::vector<int> nodes)
    : lower_(std::move(lower)), upper_(std::move(upper)), nodes_(std::move(nodes)) {
    if (lower_.empty() || lower_.size() != upper_.size() || lower_.size() != nodes_.size()) {
        throw ValidationError("grid", "lower, upper and nodes must have equal nonzero length");
    }
    size_ = 1;
    stride_.assign(lower_.size(), 1);
    for (std::size_t i = lower_.size(); i-- > 0;) {
        if (!(lower_[i] < upper_[i]) || nodes_[i] < 2) {
            throw ValidationError("grid", "need lower < upper and at least 2 nodes per coordinate");
        }
        stride_[i] = size_;
        size_ *= static_cast<std::size_t>(nodes_[i]);
    }
    for (std::size_t i = 0; i < lower_.size(); ++i) {
        step_.push_back((upper_[i] - lower_[i]) / (nodes_[i] - 1));
    }
}

void StateGrid::multi_index(std::size_t flat, std::span<int> out) const noexcept {
    for (std::size_t i = 0; i < dims(); ++i) {
        out[i] = static_cast<int>(flat / stride_[i]);
        flat %= stride_[i];
    }
}

void StateGrid::point(std::size_t flat, std::span<double> out) const noexcept {
    for (std::size_t i = 0; i < dims(); ++i) {
        out[i] = coordinate(i, static_cast<int>(flat / stride_[i]));
        flat %= stride_[i];
    }
}

std::size_t StateGrid::flat_index(std::span<const int> multi) const noexcept {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < dims(); ++i) {
        flat += static_cast<std::size_t>(multi[i]) * stride_[i];
    }
    return flat;
}

std::size_t StateGrid::nearest(std::span<const double> x) const noexcept {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < dims(); ++i) {
        const double u = std::round((x[i] - lower_[i]) / step_[i]);
        const int idx = static_cast<int>(std::clamp(u, 0.0, static_cast<double>(nodes_[i] - 1)));
        flat += static_cast<std::size_t>(idx) * stride_[i];
    }
    return flat;
}

bool StateGrid::in_band(std::size_t flat, int band) const noexcept {
    for (std::size_t i = 0; i < dims(); ++i) {
        const int idx = static_cast<int>(flat / stride_[i]);
        flat %= stride_[i];
        if (idx < band || idx > nodes_[i] - 1 - band) {
            return true;
        }
    }
    return false;
}

double StateGrid::interpolate(std::span<const double> values, std::span<const double> x, bool& clamped) const noexcept {
    const std::size_t d = dims();
    std::array<std::size_t, kMaxState> base{};
    std::array<double, kMaxState> frac{};
    clamped = false;
    for (std::size_t i = 0; i < d; ++i) {
        double u = (x[i] - lower_[i]) / step_[i];
        const double top = static_cast<double>(nodes_[i] - 1);
        if (u < 0.0) {
            // Tolerate rounding at the edge.
            clamped = clamped || u < -1e-9;
            u = 0.0;
        } else if (u > top) {
            clamped = clamped || u > top + 1e-9;
            u = top;
        }
        const int i0 = std::min(static_cast<int>(u), nodes_[i] - 2);
        base[i] = static_cast<std::size_t>(i0) * stride_[i];
        frac[i] = u - i0;
    }
    double result = 0.0;
    const std::size_t corners = std::size_t{1} << d;
    for (std::size_t c = 0; c < corners; ++c) {
        double w = 1.0;
        std::size_t flat = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const bool up = (c >> i) & 1U;
            w *= up ? frac[i] : 1.0 - frac[i];
            flat += base[i] + (up ? stride_[i] : 0);
        }
        if (w != 0.0) {
            result += w * values[flat];
        }
    }
    return result;
}

StateGrid pilot_state_grid(const ProblemSpec& spec, const SolverSettings& settings) {
    const auto n = static_cast<std::size_t>(spec.state_dim());
    std::vector<double> lo(n, std::numeric_limits<double>::infinity());
    std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(settings.steps_per_unit_time * spec.horizon)));
    for (std::size_t a = 0; a < spec.control_count(); ++a) {
        BundleOptions opts;
        opts.paths = settings.pilot.paths;
        opts.n_steps = steps;
        opts.seed = splitmix64(settings.seed ^ 0x70696c6f74ULL);
        opts.constant_control = a;
        opts.index_offset = a * settings.pilot.paths;
        const auto bundle = simulate_bundle(spec, opts);
        for (std::size_t k = 0; k <= steps; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                MeanAccumulator acc;
                for (const auto& p : bundle.paths) {
                    acc.add(p.state.node(k)[i]);
                }
                const auto est = acc.estimate();
                const double sd = est.standard_error * std::sqrt(static_cast<double>(std::max<std::size_t>(est.samples, 1)));
                lo[i] = std::min(lo[i], est.mean - settings.pilot.sd_multiple * sd);
                hi[i] = std::max(hi[i], est.mean + settings.pilot.sd_multiple * sd);
            }
        }
    }
    const int nodes = n == 1 ? settings.pilot.nodes_1d : n == 2 ? settings.pilot.nodes_2d : settings.pilot.nodes_3d;
    for (std::size_t i = 0; i < n; ++i) {
        const double pad = std::max(settings.pilot.pad_fraction * (hi[i] - lo[i]), settings.pilot.min_pad);
        lo[i] -= pad;
        hi[i] += pad;
    }
    return StateGrid(lo, hi, std::vector<int>(n, nodes));
}

StateGrid make_state_grid(const ProblemSpec& spec, const SolverSettings& settings) {
    if (settings.grid) {
        if (settings.grid->lower.size() != static_cast<std::size_t>(spec.state_dim())) {
            throw ValidationError("solver.grid", "needs one entry per state coordinate");
        }
        return StateGrid(settings.grid->lower, settings.grid->upper, settings.grid->nodes);
    }
    return pilot_state_grid(spec, settings);
}

void ClampStats::merge(const ClampStats& other) noexcept {
    clamped_weight += other.clamped_weight;
    total_weight += other.total_weight;
    clamped_outcomes += other.clamped_outcomes;
}

namespace {

class Fnv1a {
public:
    void bytes(const void* data, std::size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <class T>
    void value(const T& v) noexcept {
        bytes(&v, sizeof(T));
    }
    std::uint64_t digest() const noexcept { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

double poisson_pmf(int k, double mean) {
    return std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0));
}

} // namespace

TransitionKernel::TransitionKernel(const ProblemSpec& spec, const TimeGrid& time, const KernelOptions& options,
                                   std::uint64_t seed)
    : spec_(&spec), time_(time), options_(options), seed_(seed), integrator_(spec, time.dt()) {
    const double dt = time.dt();
    const auto m = static_cast<std::size_t>(spec.noise_dim());

    // Tensor Gauss-Hermite rule for the Brownian increment.
    const auto rule = gauss_hermite_normal(options.hermite_nodes);
    std::size_t count = 1;
    for (std::size_t j = 0; j < m; ++j) {
        count *= rule.nodes.size();
    }
    for (std::size_t c = 0; c < count; ++c) {
        double w = 1.0;
        std::size_t rest = c;
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t q = rest % rule.nodes.size();
            rest /= rule.nodes.size();
            w *= rule.weights[q];
            brownian_nodes_.push_back(std::sqrt(dt) * rule.nodes[q]);
        }
        brownian_weights_.push_back(w);
    }

    // Jump-count law truncated at max_jumps, tail lumped into the last count.
    const double rate = spec.jump_measure.total_rate;
    const int max_jumps = rate > 0.0 ? options.max_jumps : 0;
    const auto atoms = rate > 0.0 ? mark_atoms(spec.jump_measure, options.mark_nodes) : std::vector<MarkAtom>{};
    double assigned = 0.0;
    for (int j = 0; j <= max_jumps; ++j) {
        const double pj = j < max_jumps ? (rate > 0.0 ? poisson_pmf(j, rate * dt) : 1.0) : 1.0 - assigned;
        assigned += pj;
        std::size_t tuples = 1;
        for (int r = 0; r < j; ++r) {
            tuples *= atoms.size();
        }
        for (std::size_t c = 0; c < tuples; ++c) {
            JumpTuple tuple{pj, {}};
            std::size_t rest = c;
            for (int r = 0; r < j; ++r) {
                const auto& atom = atoms[rest % atoms.size()];
                rest /= atoms.size();
                tuple.weight *= atom.weight;
                tuple.marks.push_back(atom.z);
            }
            if (tuple.weight > 0.0) {
                jumps_.push_back(std::move(tuple));
            }
        }
    }

    Fnv1a h;
    h.value(fingerprint(spec));
    h.value(static_cast<int>(options.mode));
    h.value(time.t0);
    h.value(time.horizon);
    h.value(time.steps);
    if (options.mode == KernelMode::quadrature) {
        h.bytes(brownian_weights_.data(), brownian_weights_.size() * sizeof(double));
        h.bytes(brownian_nodes_.data(), brownian_nodes_.size() * sizeof(double));
        for (const auto& t : jumps_) {
            h.value(t.weight);
            h.bytes(t.marks.data(), t.marks.size() * sizeof(double));
        }
    } else {
        h.value(seed);
        h.value(options.inner_samples);
    }
    checksum_ = h.digest();
}

std::size_t TransitionKernel::outcome_count() const noexcept {
    return options_.mode == KernelMode::quadrature ? brownian_weights_.size() * jumps_.size() : options_.inner_samples;
}

double TransitionKernel::expectation(const StateGrid& grid, std::span<const double> next, std::size_t k,
                                     std::span<const double> x, std::size_t a, std::size_t node,
                                     ClampStats& clamps) const {
    const double t = time_.time(k);
    if (options_.mode == KernelMode::quadrature) {
        return quadrature(grid, next, t, x, a, clamps);
    }
    return monte_carlo(grid, next, k, t, x, a, node, clamps);
}

double TransitionKernel::quadrature(const StateGrid& grid, std::span<const double> next, double t,
                                    std::span<const double> x, std::size_t a, ClampStats& clamps) const {
    const auto n = static_cast<std::size_t>(spec_->state_dim());
    const auto m = static_cast<std::size_t>(spec_->noise_dim());
    const FrozenStep frozen = integrator_.freeze(t, x, a);
    const std::size_t brownian_count = frozen.has_noise ? brownian_weights_.size() : 1;
    const std::vector<double> zeros(m, 0.0);

    std::array<double, kMaxState> flowed{};
    std::array<double, kMaxState> jumped{};
    double result = 0.0;
    for (std::size_t q = 0; q < brownian_count; ++q) {
        const double wq = frozen.has_noise ? brownian_weights_[q] : 1.0;
        const std::span<const double> dW =
            frozen.has_noise ? std::span<const double>(brownian_nodes_.data() + q * m, m) : std::span<const double>(zeros);
        std::copy(x.begin(), x.end(), flowed.begin());
        integrator_.flow(frozen, std::span<double>(flowed.data(), n), dW);
        for (const auto& tuple : jumps_) {
            std::copy(flowed.begin(), flowed.begin() + static_cast<std::ptrdiff_t>(n), jumped.begin());
            for (double z : tuple.marks) {
                integrator_.jump(t, std::span<double>(jumped.data(), n), a, z);
            }
            bool clamped = false;
            const double w = wq * tuple.weight;
            result += w * grid.interpolate(next, std::span<const double>(jumped.data(), n), clamped);
            clamps.total_weight += w;
            if (clamped) {
                clamps.clamped_weight += w;
                ++clamps.clamped_outcomes;
            }
        }
    }
    return result;
}

double TransitionKernel::monte_carlo(const StateGrid& grid, std::span<const double> next, std::size_t k, double t,
                                     std::span<const double> x, std::size_t a, std::size_t node,
                                     ClampStats& clamps) const {
    const auto n = static_cast<std::size_t>(spec_->state_dim());
    const auto m = static_cast<std::size_t>(spec_->noise_dim());
    const double dt = time_.dt();
    const double rate = spec_->jump_measure.total_rate;
    const auto marks = MarkSampler::pi(spec_->jump_measure);
    const FrozenStep frozen = integrator_.freeze(t, x, a);
    CounterRng rng({splitmix64(seed_ + k), node * spec_->control_count() + a, Stream::kernel_inner});

    std::array<double, kMaxState> state{};
    std::array<double, kMaxState> dW{};
    CompensatedSum sum;
    const double w = 1.0 / static_cast<double>(options_.inner_samples);
    for (std::size_t s = 0; s < options_.inner_samples; ++s) {
        for (std::size_t j = 0; j < m; ++j) {
            dW[j] = std::sqrt(dt) * rng.normal();
        }
        std::copy(x.begin(), x.end(), state.begin());
        integrator_.flow(frozen, std::span<double>(state.data(), n), std::span<const double>(dW.data(), m));
        if (rate > 0.0) {
            double clock = rng.exponential(rate);
            while (clock <= dt) {
                Event e;
                marks.draw(rng, e);
                integrator_.jump(t, std::span<double>(state.data(), n), a, e.z);
                clock += rng.exponential(rate);
            }
        }
        bool clamped = false;
        sum.add(grid.interpolate(next, std::span<const double>(state.data(), n), clamped));
        clamps.total_weight += w;
        if (clamped) {
            clamps.clamped_weight += w;
            ++clamps.clamped_outcomes;
        }
    }
    return sum.value() * w;
}

} // namespace randctl
