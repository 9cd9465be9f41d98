#include "randctl/bsde.hpp"

#include "parallel.hpp"
#include "randctl/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <ostream>

namespace randctl {

double PenalizedField::value_at(std::size_t k, std::span<const double> x, std::size_t a) const {
    bool clamped = false;
    return grid.interpolate(std::span<const double>(values[k]).subspan(a * grid.size(), grid.size()), x, clamped);
}

double PenalizedField::continuation_at(std::size_t k, std::span<const double> x, std::size_t a) const {
    bool clamped = false;
    return grid.interpolate(std::span<const double>(continuation[k]).subspan(a * grid.size(), grid.size()), x,
                            clamped);
}

PenalizedField solve_penalized_grid(const ProblemSpec& spec, int level_n, const TimeGrid& time, const StateGrid& grid,
                                    const KernelOptions& kernel_options, std::uint64_t seed) {
    if (level_n < 1) {
        throw ValidationError("level_n", "must be >= 1");
    }
    const TransitionKernel kernel(spec, time, kernel_options, seed);
    const std::size_t steps = time.steps;
    const std::size_t nodes = grid.size();
    const std::size_t controls = spec.control_count();
    const std::size_t n = grid.dims();
    const double dt = time.dt();
    const double penalty = static_cast<double>(level_n) * dt;
    const auto& lambda0 = spec.randomization.lambda0_weights;

    PenalizedField field;
    field.level_n = level_n;
    field.time = time;
    field.grid = grid;
    field.controls = controls;
    field.kernel_checksum = kernel.checksum();
    field.spec_fingerprint = fingerprint(spec);
    field.stability = penalty * spec.randomization.total_mass();
    field.values.assign(steps + 1, std::vector<double>(controls * nodes));
    field.continuation.assign(steps, std::vector<double>(controls * nodes));

    std::vector<double> x(n);
    for (std::size_t node = 0; node < nodes; ++node) {
        grid.point(node, x);
        const double g = spec.terminal(x);
        for (std::size_t a = 0; a < controls; ++a) {
            field.values[steps][a * nodes + node] = g;
        }
    }

    std::vector<ClampStats> node_clamps(nodes);
    for (std::size_t k = steps; k-- > 0;) {
        const double t = time.time(k);
        const std::span<const double> next(field.values[k + 1]);
        auto& cont = field.continuation[k];
        auto& vals = field.values[k];
        detail::parallel_for(nodes, [&](std::size_t node) {
            std::array<double, kMaxState> point{};
            const std::span<double> xs(point.data(), n);
            grid.point(node, xs);
            for (std::size_t a = 0; a < controls; ++a) {
                cont[a * nodes + node] = kernel.expectation(grid, next.subspan(a * nodes, nodes), k, xs, a, node,
                                                            node_clamps[node]) +
                                         spec.running_reward(t, xs, a) * dt;
            }
            for (std::size_t a = 0; a < controls; ++a) {
                const double own = cont[a * nodes + node];
                double gap = 0.0;
                for (std::size_t b = 0; b < controls; ++b) {
                    gap += lambda0[b] * std::max(cont[b * nodes + node] - own, 0.0);
                }
                vals[a * nodes + node] = own + penalty * gap;
            }
        }, 16);
    }
    for (const auto& c : node_clamps) {
        field.clamps.merge(c);
    }
    return field;
}

std::vector<PenalizedField> solve_penalized_ladder(const ProblemSpec& spec, const SolverSettings& settings,
                                                   const std::vector<int>& ladder) {
    if (ladder.empty()) {
        throw ValidationError("ladder", "must be nonempty");
    }
    const TimeGrid time = ladder_time_grid(spec, settings, *std::max_element(ladder.begin(), ladder.end()));
    const StateGrid grid = make_state_grid(spec, settings);
    std::vector<PenalizedField> fields;
    fields.reserve(ladder.size());
    for (int n : ladder) {
        fields.push_back(solve_penalized_grid(spec, n, time, grid, settings.kernel, settings.seed));
    }
    return fields;
}

IntensityControl argmax_tilt(const PenalizedField& field, double strength, double nu_min) {
    const std::size_t steps = field.time.steps;
    const std::size_t nodes = field.grid.size();
    const std::size_t controls = field.controls;
    std::vector<double> table(steps * nodes * controls * controls, nu_min);
    for (std::size_t k = 0; k < steps; ++k) {
        const auto& cont = field.continuation[k];
        for (std::size_t cell = 0; cell < nodes; ++cell) {
            for (std::size_t a = 0; a < controls; ++a) {
                const double own = cont[a * nodes + cell];
                const double margin = 1e-12 * (1.0 + std::abs(own));
                for (std::size_t b = 0; b < controls; ++b) {
                    if (cont[b * nodes + cell] > own + margin) {
                        table[((k * nodes + cell) * controls + a) * controls + b] = strength;
                    }
                }
            }
        }
    }
    return IntensityControl::feedback(field.time, field.grid, controls, std::move(table),
                                      "argmax-n" + std::to_string(field.level_n) + "-s" +
                                          nlohmann::json(strength).dump() + "-min" + nlohmann::json(nu_min).dump());
}

void write_field_csv(const ProblemSpec& spec, const PenalizedField& field, std::ostream& out) {
    csv::Writer w(out);
    std::vector<std::string> header{"t"};
    for (int i = 0; i < spec.dim; ++i) {
        header.push_back("x" + std::to_string(i));
    }
    if (spec.augmentation != Augmentation::none) {
        header.emplace_back("y");
    }
    header.insert(header.end(), {"a", "value", "level"});
    w.header(header);
    const std::size_t nodes = field.grid.size();
    std::vector<double> x(field.grid.dims());
    std::vector<std::string> row;
    for (std::size_t k = 0; k <= field.time.steps; ++k) {
        const std::string t = csv::format_number(field.time.time(k));
        for (std::size_t node = 0; node < nodes; ++node) {
            field.grid.point(node, x);
            for (std::size_t a = 0; a < field.controls; ++a) {
                row.clear();
                row.push_back(t);
                for (double v : x) {
                    row.push_back(csv::format_number(v));
                }
                row.push_back(std::to_string(a));
                row.push_back(csv::format_number(field.value(k, node, a)));
                row.push_back(std::to_string(field.level_n));
                w.row(row);
            }
        }
    }
}

std::string field_metadata_json(const ProblemSpec& spec, const PenalizedField& field) {
    nlohmann::json j = {{"problem", spec.name},
                        {"spec_fingerprint", field.spec_fingerprint},
                        {"level_n", field.level_n},
                        {"time", {{"t0", field.time.t0}, {"horizon", field.time.horizon}, {"steps", field.time.steps}}},
                        {"grid",
                         {{"lower", field.grid.lower()}, {"upper", field.grid.upper()}, {"nodes", field.grid.node_counts()}}},
                        {"controls", field.controls},
                        {"stability", field.stability},
                        {"kernel_checksum", field.kernel_checksum},
                        {"clamped_fraction", field.clamps.fraction()},
                        {"clamp_warning", field.clamps.warn()}};
    return j.dump(2);
}

} // namespace randctl
