#include "randctl/hjb.hpp"

#include "parallel.hpp"
#include "randctl/csv.hpp"
#include "randctl/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>

namespace randctl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct PointBuffers {
    std::array<double, kMaxState> b{};
    std::array<double, kMaxState * kMaxState> sigma{};
    std::array<double, kMaxState> gamma{};
    std::array<double, kMaxState> shifted{};
};

double hamiltonian_with_atoms(const ProblemSpec& spec, const std::vector<MarkAtom>& atoms, double t,
                              std::span<const double> x, std::size_t a, std::span<const double> gradient,
                              std::span<const double> hessian, const ValueAccessor& value) {
    const std::size_t n = x.size();
    const std::size_t m = static_cast<std::size_t>(spec.noise_dim());
    PointBuffers buf;
    const std::span<double> b(buf.b.data(), n);
    const std::span<double> sigma(buf.sigma.data(), n * m);
    spec.drift(t, x, a, b);
    spec.diffusion(t, x, a, sigma);

    double h = spec.running_reward(t, x, a);
    for (std::size_t i = 0; i < n; ++i) {
        h += b[i] * gradient[i];
    }
    // 1/2 Tr(sigma sigma^T D2v) = 1/2 sum_ij (sigma sigma^T)_ij H_ij
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double cov = 0.0;
            for (std::size_t l = 0; l < m; ++l) {
                cov += sigma[i * m + l] * sigma[j * m + l];
            }
            trace += cov * hessian[i * n + j];
        }
    }
    h += 0.5 * trace;

    const double rate = spec.jump_measure.total_rate;
    if (rate > 0.0) {
        const double v0 = value(x);
        const std::span<double> gamma(buf.gamma.data(), n);
        const std::span<double> shifted(buf.shifted.data(), n);
        CompensatedSum nonlocal;
        for (const auto& atom : atoms) {
            spec.jump(t, x, a, atom.z, gamma);
            double linear = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                shifted[i] = x[i] + gamma[i];
                linear += gradient[i] * gamma[i];
            }
            spec.update_augmentation(shifted);
            nonlocal.add(atom.weight * (value(shifted) - v0 - linear));
        }
        h += rate * nonlocal.value();
    }
    return h;
}

/// <Ax, Dv> + max_a H, with the maximizer.
std::pair<double, std::uint32_t> spatial_part(const ProblemSpec& spec, const std::vector<MarkAtom>& atoms, double t,
                                              std::span<const double> x, std::span<const double> gradient,
                                              std::span<const double> hessian, const ValueAccessor& value) {
    double drift = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        drift += spec.eigenvalue(static_cast<int>(i)) * x[i] * gradient[i];
    }
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t a = 0; a < spec.control_count(); ++a) {
        const double h = hamiltonian_with_atoms(spec, atoms, t, x, a, gradient, hessian, value);
        if (h > best) {
            best = h;
            arg = static_cast<std::uint32_t>(a);
        }
    }
    return {drift + best, arg};
}

bool inside_box(const StateGrid& grid, std::span<const double> x, double fraction) {
    for (std::size_t i = 0; i < grid.dims(); ++i) {
        const double center = 0.5 * (grid.lower(i) + grid.upper(i));
        const double half = 0.5 * fraction * (grid.upper(i) - grid.lower(i));
        if (std::abs(x[i] - center) > half + 1e-12) {
            return false;
        }
    }
    return true;
}

void finish(HjbResidualField& out) {
    out.interior_max_abs = 0.0;
    for (const auto& row : out.residual) {
        for (double r : row) {
            if (!std::isnan(r)) {
                out.interior_max_abs = std::max(out.interior_max_abs, std::abs(r));
            }
        }
    }
}

// Marks (slice, node) when any used neighbour within `band[i]` nodes, on this or an
// adjacent evaluated slice, maximizes with a different control.
void mask_switching(HjbResidualField& out, const std::vector<bool>& use, const std::vector<int>& band) {
    const StateGrid& grid = out.grid;
    const std::size_t n = grid.dims();
    const std::size_t slices = out.residual.size();
    std::vector<std::vector<bool>> drop(slices, std::vector<bool>(grid.size(), false));
    std::vector<int> multi(n);
    std::vector<int> offset(n);
    std::vector<int> neighbor(n);
    for (std::size_t ti = 0; ti < slices; ++ti) {
        const std::size_t t_lo = ti == 0 ? 0 : ti - 1;
        const std::size_t t_hi = std::min(ti + 1, slices - 1);
        for (std::size_t node = 0; node < grid.size(); ++node) {
            if (!use[node]) {
                continue;
            }
            grid.multi_index(node, multi);
            const std::uint32_t own = out.argmax[ti][node];
            for (std::size_t i = 0; i < n; ++i) {
                offset[i] = -band[i];
            }
            bool mixed = false;
            while (!mixed) {
                bool inside = true;
                for (std::size_t i = 0; i < n; ++i) {
                    neighbor[i] = multi[i] + offset[i];
                    inside = inside && neighbor[i] >= 0 && neighbor[i] < grid.nodes(i);
                }
                if (inside) {
                    const std::size_t other = grid.flat_index(neighbor);
                    for (std::size_t tj = t_lo; tj <= t_hi && !mixed; ++tj) {
                        mixed = use[other] && out.argmax[tj][other] != own;
                    }
                }
                std::size_t i = 0;
                while (i < n && ++offset[i] > band[i]) {
                    offset[i] = -band[i];
                    ++i;
                }
                if (i == n) {
                    break;
                }
            }
            drop[ti][node] = mixed;
        }
    }
    for (std::size_t ti = 0; ti < slices; ++ti) {
        for (std::size_t node = 0; node < grid.size(); ++node) {
            if (drop[ti][node]) {
                out.residual[ti][node] = kNaN;
                ++out.switching_masked;
            }
        }
    }
}

// True when the finite-difference stencil at (k, node) mixes branches of
// max_a v^n, i.e. the table is only Lipschitz there.
bool straddles_maximizer_change(const ValueTable& table, std::size_t k, std::span<const int> multi,
                                std::span<int> neighbor) {
    const StateGrid& grid = table.grid;
    const std::size_t n = grid.dims();
    const std::size_t node = grid.flat_index(multi);
    const std::uint32_t own = table.maximizer[k][node];
    if (table.maximizer[k + 1][node] != own || (k > 0 && table.maximizer[k - 1][node] != own)) {
        return true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            for (int di : {-1, 1}) {
                for (int dj : {-1, 1}) {
                    std::copy(multi.begin(), multi.end(), neighbor.begin());
                    neighbor[i] += di;
                    if (j != i) {
                        neighbor[j] += dj;
                    }
                    if (table.maximizer[k][grid.flat_index(neighbor)] != own) {
                        return true;
                    }
                }
            }
        }
    }
    return false;
}

std::vector<int> switch_bands(const ProblemSpec& spec, const ValueTable& table, const std::vector<bool>& use,
                              int band) {
    const StateGrid& grid = table.grid;
    const std::size_t n = grid.dims();
    std::vector<int> out(n, band);
    const double lambda = spec.randomization.total_mass();
    if (table.level_n <= 0 || !(lambda > 0.0)) {
        return out;
    }
    const std::size_t noise = static_cast<std::size_t>(spec.noise_dim());
    std::vector<double> x(n);
    std::vector<double> sigma(n * noise);
    double sigma_bar = 0.0;
    for (std::size_t node = 0; node < grid.size(); ++node) {
        if (!use[node]) {
            continue;
        }
        grid.point(node, x);
        for (std::size_t a = 0; a < spec.control_count(); ++a) {
            spec.diffusion(0.0, x, a, sigma);
            for (std::size_t i = 0; i < n; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < noise; ++j) {
                    row += sigma[i * noise + j] * sigma[i * noise + j];
                }
                sigma_bar = std::max(sigma_bar, std::sqrt(row));
            }
        }
    }
    const double radius = 2.0 * sigma_bar / std::sqrt(table.level_n * lambda);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::max(band, static_cast<int>(std::ceil(radius / grid.step(i))));
    }
    return out;
}

} // namespace

double hamiltonian(const ProblemSpec& spec, double t, std::span<const double> x, std::size_t a,
                   std::span<const double> gradient, std::span<const double> hessian, const ValueAccessor& value,
                   int mark_nodes) {
    const auto atoms = spec.jump_measure.total_rate > 0.0 ? mark_atoms(spec.jump_measure, mark_nodes)
                                                          : std::vector<MarkAtom>{};
    return hamiltonian_with_atoms(spec, atoms, t, x, a, gradient, hessian, value);
}

HjbResidualField hjb_residual(const ProblemSpec& spec, const AnalyticCandidate& candidate, const StateGrid& grid,
                              const std::vector<double>& times, DerivativeMode mode, double h, int band) {
    if (mode == DerivativeMode::stencil && !(h > 0.0)) {
        throw ValidationError("h", "stencil step must be positive");
    }
    const std::size_t n = grid.dims();
    const std::size_t nodes = grid.size();
    const auto atoms = mark_atoms(spec.jump_measure, 32);

    HjbResidualField out;
    out.times = times;
    out.grid = grid;
    out.stencil = mode == DerivativeMode::exact ? "exact" : "central";
    out.step = h;
    out.residual.assign(times.size(), std::vector<double>(nodes, kNaN));
    out.argmax.assign(times.size(), std::vector<std::uint32_t>(nodes, 0));
    for (std::size_t node = 0; node < nodes; ++node) {
        if (band > 0 && grid.in_band(node, band)) {
            out.excluded_nodes.push_back(node);
        }
    }

    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        const double t = times[ti];
        const ValueAccessor value = [&candidate, t](std::span<const double> y) { return candidate.value(t, y); };
        detail::parallel_for(nodes, [&](std::size_t node) {
            if (band > 0 && grid.in_band(node, band)) {
                return;
            }
            std::array<double, kMaxState> xs{};
            std::array<double, kMaxState> grad{};
            std::array<double, kMaxState * kMaxState> hess{};
            const std::span<double> x(xs.data(), n);
            grid.point(node, x);
            double vt = 0.0;
            if (mode == DerivativeMode::exact) {
                vt = candidate.time_derivative(t, x);
                candidate.gradient(t, x, std::span<double>(grad.data(), n));
                candidate.hessian(t, x, std::span<double>(hess.data(), n * n));
            } else {
                vt = (candidate.value(t + h, x) - candidate.value(t - h, x)) / (2.0 * h);
                std::array<double, kMaxState> p{};
                const std::span<double> y(p.data(), n);
                const double v0 = candidate.value(t, x);
                auto shifted = [&](std::size_t i, double di, std::size_t j, double dj) {
                    std::copy(x.begin(), x.end(), y.begin());
                    y[i] += di;
                    y[j] += dj;
                    return candidate.value(t, y);
                };
                for (std::size_t i = 0; i < n; ++i) {
                    const double up = shifted(i, h, i, 0.0);
                    const double down = shifted(i, -h, i, 0.0);
                    grad[i] = (up - down) / (2.0 * h);
                    hess[i * n + i] = (up - 2.0 * v0 + down) / (h * h);
                    for (std::size_t j = i + 1; j < n; ++j) {
                        const double cross = (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) +
                                              shifted(i, -h, j, -h)) /
                                             (4.0 * h * h);
                        hess[i * n + j] = cross;
                        hess[j * n + i] = cross;
                    }
                }
            }
            const auto [space, arg] = spatial_part(spec, atoms, t, x, std::span<const double>(grad.data(), n),
                                                   std::span<const double>(hess.data(), n * n), value);
            out.residual[ti][node] = vt + space;
            out.argmax[ti][node] = arg;
        });
    }
    finish(out);

    std::vector<double> x(n);
    for (std::size_t node = 0; node < nodes; ++node) {
        grid.point(node, x);
        out.terminal_max_error =
            std::max(out.terminal_max_error, std::abs(candidate.value(spec.horizon, x) - spec.terminal(x)));
    }
    return out;
}

ValueTable value_table(const PenalizedField& field) {
    ValueTable t;
    t.time = field.time;
    t.grid = field.grid;
    t.spec_fingerprint = field.spec_fingerprint;
    t.level_n = field.level_n;
    const std::size_t nodes = field.grid.size();
    t.values.assign(field.values.size(), std::vector<double>(nodes));
    t.maximizer.assign(field.values.size(), std::vector<std::uint32_t>(nodes, 0));
    for (std::size_t k = 0; k < field.values.size(); ++k) {
        for (std::size_t node = 0; node < nodes; ++node) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < field.controls; ++a) {
                if (const double v = field.value(k, node, a); v > best) {
                    best = v;
                    t.maximizer[k][node] = static_cast<std::uint32_t>(a);
                }
            }
            t.values[k][node] = best;
        }
    }
    return t;
}

ValueTable value_table(const DpField& dp) {
    return {dp.time, dp.grid, dp.values, dp.spec_fingerprint, 0, {}};
}

HjbResidualField hjb_residual(const ProblemSpec& spec, const ValueTable& table, const ResidualOptions& options) {
    const StateGrid& grid = table.grid;
    const std::size_t n = grid.dims();
    const std::size_t nodes = grid.size();
    const std::size_t steps = table.time.steps;
    const double dt = table.time.dt();
    const auto atoms = mark_atoms(spec.jump_measure, 32);
    const std::size_t stride = std::max<std::size_t>(options.time_stride, 1);

    HjbResidualField out;
    out.grid = grid;
    out.stencil = "central";
    out.step = grid.step(0);
    std::vector<double> point(n);
    // Residuals are computed off the boundary band so the switching mask can
    // see past the box edge, then trimmed to the box.
    std::vector<bool> use(nodes, false);
    std::vector<bool> in_box(nodes, false);
    for (std::size_t node = 0; node < nodes; ++node) {
        grid.point(node, point);
        use[node] = !grid.in_band(node, options.band);
        in_box[node] = use[node] && inside_box(grid, point, options.box_fraction);
        if (!in_box[node]) {
            out.excluded_nodes.push_back(node);
        }
    }

    std::vector<std::size_t> ks;
    for (std::size_t k = 0; k < steps; k += stride) {
        ks.push_back(k);
    }
    out.times.reserve(ks.size());
    for (std::size_t k : ks) {
        out.times.push_back(table.time.time(k));
    }
    out.residual.assign(ks.size(), std::vector<double>(nodes, kNaN));
    out.argmax.assign(ks.size(), std::vector<std::uint32_t>(nodes, 0));

    for (std::size_t ti = 0; ti < ks.size(); ++ti) {
        const std::size_t k = ks[ti];
        const double t = table.time.time(k);
        const auto& slice = table.values[k];
        const ValueAccessor value = [&grid, &slice](std::span<const double> y) {
            bool clamped = false;
            return grid.interpolate(slice, y, clamped);
        };
        detail::parallel_for(nodes, [&](std::size_t node) {
            if (!use[node]) {
                return;
            }
            std::array<double, kMaxState> xs{};
            std::array<double, kMaxState> grad{};
            std::array<double, kMaxState * kMaxState> hess{};
            std::array<int, kMaxState> idx{};
            std::array<int, kMaxState> nb{};
            const std::span<double> x(xs.data(), n);
            const std::span<int> multi(idx.data(), n);
            const std::span<int> neighbor(nb.data(), n);
            grid.point(node, x);
            grid.multi_index(node, multi);
            auto at = [&](std::size_t i, int di, std::size_t j, int dj) {
                std::copy(multi.begin(), multi.end(), neighbor.begin());
                neighbor[i] += di;
                neighbor[j] += dj;
                return slice[grid.flat_index(neighbor)];
            };
            const double v0 = slice[node];
            if (!table.maximizer.empty() && straddles_maximizer_change(table, k, multi, neighbor)) {
                return;
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double hi = grid.step(i);
                const double up = at(i, 1, i, 0);
                const double down = at(i, -1, i, 0);
                grad[i] = (up - down) / (2.0 * hi);
                hess[i * n + i] = (up - 2.0 * v0 + down) / (hi * hi);
                for (std::size_t j = i + 1; j < n; ++j) {
                    const double cross =
                        (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) / (4.0 * hi * grid.step(j));
                    hess[i * n + j] = cross;
                    hess[j * n + i] = cross;
                }
            }
            const double vt = k == 0 ? (table.values[1][node] - v0) / dt
                                     : (table.values[k + 1][node] - table.values[k - 1][node]) / (2.0 * dt);
            const auto [space, arg] = spatial_part(spec, atoms, t, x, std::span<const double>(grad.data(), n),
                                                   std::span<const double>(hess.data(), n * n), value);
            out.residual[ti][node] = vt + space;
            out.argmax[ti][node] = arg;
        });
    }
    if (options.switch_band >= 0) {
        mask_switching(out, use, switch_bands(spec, table, in_box, options.switch_band));
    }
    for (auto& row : out.residual) {
        for (std::size_t node = 0; node < nodes; ++node) {
            if (!in_box[node]) {
                row[node] = kNaN;
            }
        }
    }
    if (options.switch_band >= 0) {
        mask_switching(out, use, switch_bands(spec, table, in_box, options.switch_band));
    }
    for (auto& row : out.residual) {
        for (std::size_t node = 0; node < nodes; ++node) {
            if (!in_box[node]) {
                row[node] = kNaN;
            }
        }
    }
    finish(out);

    for (std::size_t node = 0; node < nodes; ++node) {
        grid.point(node, point);
        out.terminal_max_error = std::max(out.terminal_max_error, std::abs(table.values[steps][node] - spec.terminal(point)));
    }
    return out;
}

ResidualCertificate residual_certificate(const ProblemSpec& spec, const ValueTable& table, const Tolerances& tolerances,
                                         const ResidualOptions& options) {
    const auto field = hjb_residual(spec, table, options);
    ResidualCertificate c;
    c.interior_max_abs_residual = field.interior_max_abs;
    c.terminal_max_error = field.terminal_max_error;
    c.interior_nodes = field.grid.size() - field.excluded_nodes.size();
    for (const auto& row : field.residual) {
        c.evaluated += static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](double r) { return !std::isnan(r); }));
    }
    c.pass = c.evaluated > 0 && c.interior_max_abs_residual <= tolerances.tol_hjb &&
             c.terminal_max_error <= tolerances.tol_value;
    return c;
}

void write_residual_csv(const ProblemSpec& spec, const HjbResidualField& field, std::ostream& out) {
    csv::Writer w(out);
    std::vector<std::string> header{"t"};
    for (int i = 0; i < spec.dim; ++i) {
        header.push_back("x" + std::to_string(i));
    }
    if (field.grid.dims() > static_cast<std::size_t>(spec.dim)) {
        header.emplace_back("y");
    }
    header.insert(header.end(), {"residual", "argmax"});
    w.header(header);
    std::vector<double> x(field.grid.dims());
    std::vector<std::string> row;
    for (std::size_t ti = 0; ti < field.times.size(); ++ti) {
        const std::string t = csv::format_number(field.times[ti]);
        for (std::size_t node = 0; node < field.grid.size(); ++node) {
            const double r = field.residual[ti][node];
            if (std::isnan(r)) {
                continue;
            }
            field.grid.point(node, x);
            row.clear();
            row.push_back(t);
            for (double v : x) {
                row.push_back(csv::format_number(v));
            }
            row.push_back(csv::format_number(r));
            row.push_back(std::to_string(field.argmax[ti][node]));
            w.row(row);
        }
    }
}

} // namespace randctl
