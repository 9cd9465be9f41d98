#include "randctl/bsde.hpp"

#include "parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>

namespace randctl {

namespace {

/// Total-degree monomials of the standardized state.
std::vector<std::vector<int>> monomials(std::size_t dims, int degree) {
    std::vector<std::vector<int>> out;
    // Enumerate exponent vectors with sum <= degree in graded order.
    for (int total = 0; total <= degree; ++total) {
        std::vector<int> e(dims, 0);
        auto recurse = [&](auto&& self, std::size_t i, int remaining) -> void {
            if (i + 1 == dims) {
                e[i] = remaining;
                out.push_back(e);
                return;
            }
            for (int v = remaining; v >= 0; --v) {
                e[i] = v;
                self(self, i + 1, remaining - v);
            }
        };
        recurse(recurse, 0, total);
    }
    return out;
}

/// Least-squares fit in the standardization of one time step.
struct Regression {
    std::vector<double> mean;
    std::vector<double> scale;
    Eigen::MatrixXd beta;

    void features(std::span<const double> x, const std::vector<std::vector<int>>& basis, Eigen::VectorXd& out) const {
        std::array<double, kMaxState> z{};
        for (std::size_t i = 0; i < mean.size(); ++i) {
            z[i] = scale[i] > 0.0 ? (x[i] - mean[i]) / scale[i] : 0.0;
        }
        out.resize(static_cast<Eigen::Index>(basis.size()));
        for (std::size_t f = 0; f < basis.size(); ++f) {
            double v = 1.0;
            for (std::size_t i = 0; i < mean.size(); ++i) {
                for (int p = 0; p < basis[f][i]; ++p) {
                    v *= z[i];
                }
            }
            out[static_cast<Eigen::Index>(f)] = v;
        }
    }
};

struct JumpAtoms {
    std::vector<double> z;
    std::vector<double> rate;
    bool aggregate = false;
};

JumpAtoms jump_atoms_of(const ProblemSpec& spec) {
    JumpAtoms atoms;
    const auto& jm = spec.jump_measure;
    if (!(jm.total_rate > 0.0)) {
        return atoms;
    }
    if (jm.mark_law == MarkLaw::two_point) {
        for (const auto& a : mark_atoms(jm, 2)) {
            if (a.weight > 0.0) {
                atoms.z.push_back(a.z);
                atoms.rate.push_back(jm.total_rate * a.weight);
            }
        }
    } else {
        atoms.aggregate = true;
        atoms.z.push_back(0.0);
        atoms.rate.push_back(jm.total_rate);
    }
    return atoms;
}

} // namespace

BsdeQuintuple solve_penalized_lsmc(const ProblemSpec& spec, int level_n, const PathBundle& bundle,
                                   const LsmcOptions& options) {
    if (bundle.paths.empty()) {
        throw Error("solve_penalized_lsmc: empty bundle");
    }
    if (options.degree < 1) {
        throw ValidationError("degree", "must be >= 1");
    }
    if (bundle.spec_fingerprint != fingerprint(spec)) {
        throw SpecMismatch("bundle was simulated for a different problem");
    }
    const std::size_t P = bundle.paths.size();
    const std::size_t N = bundle.n_steps;
    const std::size_t C = spec.control_count();
    const auto m = static_cast<std::size_t>(spec.noise_dim());
    const auto n = static_cast<std::size_t>(spec.state_dim());
    const double dt = bundle.dt;
    const double pen = static_cast<double>(level_n) * dt;
    const auto& lambda0 = spec.randomization.lambda0_weights;
    const JumpAtoms atoms = jump_atoms_of(spec);
    const std::size_t J = atoms.z.size();
    const auto basis = monomials(n, options.degree);
    const auto F = static_cast<Eigen::Index>(basis.size());
    const std::size_t outputs = 1 + m + J;
    const std::size_t min_rows = 4 * basis.size();

    BsdeQuintuple q;
    q.level_n = level_n;
    q.steps = N;
    q.dt = dt;
    q.noise_dim = m;
    q.jump_atoms = J;
    q.controls = C;
    q.mean_y.assign(N + 1, 0.0);
    q.mean_z_sq.assign(N, 0.0);
    q.mean_l_sq.assign(N, 0.0);
    q.mean_r_pos.assign(N, 0.0);
    q.mean_k.assign(N + 1, 0.0);
    q.k_terminal.assign(P, 0.0);
    q.penalty_integral.assign(P, 0.0);
    q.terminal_exact = true;
    q.k_monotone = true;

    const std::size_t recorded = std::min(options.record_paths, P);
    q.tracks.resize(recorded);
    for (std::size_t r = 0; r < recorded; ++r) {
        auto& tr = q.tracks[r];
        tr.path = bundle.paths[r].index;
        tr.y.assign(N + 1, 0.0);
        tr.z.assign(N * m, 0.0);
        tr.l.assign(N * J, 0.0);
        tr.r.assign(N * C, 0.0);
        tr.k.assign(N + 1, 0.0);
    }

    // Per-path pi counts per step and atom.
    auto count_jumps = [&](const SimulatedPath& path, std::size_t k, std::vector<double>& counts) {
        std::fill(counts.begin(), counts.end(), 0.0);
        const double lo = path.state.time(k);
        const double hi = k + 1 == N ? std::numeric_limits<double>::infinity() : path.state.time(k + 1);
        const auto& ev = path.pi.events;
        auto it = std::upper_bound(ev.begin(), ev.end(), lo, [](double t, const Event& e) { return t < e.time; });
        for (; it != ev.end() && it->time <= hi; ++it) {
            if (atoms.aggregate) {
                counts[0] += 1.0;
            } else {
                for (std::size_t j = 0; j < J; ++j) {
                    if (it->z == atoms.z[j]) {
                        counts[j] += 1.0;
                    }
                }
            }
        }
    };

    std::vector<double> Y(P);
    std::vector<double> correction(P, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
        const auto x = bundle.paths[p].state.node(N);
        Y[p] = spec.terminal(x);
        q.terminal_exact = q.terminal_exact && Y[p] == spec.terminal(x);
    }
    for (std::size_t r = 0; r < recorded; ++r) {
        q.tracks[r].y[N] = Y[r];
    }
    {
        CompensatedSum s;
        for (double y : Y) {
            s.add(y);
        }
        q.mean_y[N] = s.value() / static_cast<double>(P);
    }

    std::vector<std::optional<Regression>> last_good(C);
    std::vector<double> increments_mean(N, 0.0);
    std::vector<double> target(P);

    for (std::size_t k = N; k-- > 0;) {
        const double t = bundle.t0 + static_cast<double>(k) * dt;
        for (std::size_t p = 0; p < P; ++p) {
            target[p] = Y[p] - correction[p];
        }

        // Standardization of X_k over all paths.
        std::vector<double> mean(n, 0.0);
        std::vector<double> scale(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            MeanAccumulator acc;
            for (const auto& path : bundle.paths) {
                acc.add(path.state.node(k)[i]);
            }
            const auto est = acc.estimate();
            mean[i] = est.mean;
            const double sd = est.standard_error * std::sqrt(static_cast<double>(P));
            scale[i] = sd > 1e-12 * (1.0 + std::abs(est.mean)) ? sd : 0.0;
        }

        std::vector<std::vector<std::size_t>> rows(C);
        for (std::size_t p = 0; p < P; ++p) {
            rows[bundle.paths[p].state.step_controls[k]].push_back(p);
        }

        std::vector<std::optional<Regression>> fits(C);
        std::vector<double> counts(J);
        for (std::size_t b = 0; b < C; ++b) {
            if (rows[b].size() < min_rows) {
                continue;
            }
            Regression reg{mean, scale, {}};
            const auto R = static_cast<Eigen::Index>(rows[b].size());
            Eigen::MatrixXd phi(R, F);
            Eigen::MatrixXd resp(R, static_cast<Eigen::Index>(outputs));
            Eigen::VectorXd feat;
            for (Eigen::Index r = 0; r < R; ++r) {
                const auto p = rows[b][static_cast<std::size_t>(r)];
                const auto& path = bundle.paths[p];
                reg.features(path.state.node(k), basis, feat);
                phi.row(r) = feat.transpose();
                const double y = target[p];
                resp(r, 0) = y;
                const auto dW = path.brownian.step(k);
                for (std::size_t j = 0; j < m; ++j) {
                    resp(r, static_cast<Eigen::Index>(1 + j)) = y * dW[j] / dt;
                }
                if (J > 0) {
                    count_jumps(path, k, counts);
                    for (std::size_t j = 0; j < J; ++j) {
                        const double comp = atoms.rate[j] * dt;
                        resp(r, static_cast<Eigen::Index>(1 + m + j)) = y * (counts[j] - comp) / comp;
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(R);
            Eigen::MatrixXd gram = (phi.transpose() * phi) * inv;
            const Eigen::MatrixXd rhs = (phi.transpose() * resp) * inv;
            Eigen::LLT<Eigen::MatrixXd> llt(gram);
            bool ok = llt.info() == Eigen::Success;
            if (ok) {
                const double min_pivot = llt.matrixL().toDenseMatrix().diagonal().minCoeff();
                ok = min_pivot > 1e-7;
            }
            if (!ok) {
                gram.diagonal().array() += options.ridge;
                llt.compute(gram);
                ++q.ridge_fallbacks;
            }
            reg.beta = llt.solve(rhs);
            fits[b] = std::move(reg);
            last_good[b] = fits[b];
        }
        for (std::size_t b = 0; b < C; ++b) {
            if (!fits[b] && last_good[b]) {
                fits[b] = last_good[b];
                ++q.sparse_fallbacks;
            }
        }

        // Pathwise update.
        std::vector<double> next_correction(P, 0.0);
        std::vector<double> inc(P, 0.0);
        std::vector<double> z_sq(P, 0.0);
        std::vector<double> l_sq(P, 0.0);
        std::vector<double> r_pos(P, 0.0);
        detail::parallel_for(P, [&](std::size_t p) {
            const auto& path = bundle.paths[p];
            const auto x = path.state.node(k);
            const std::size_t a = path.state.step_controls[k];
            thread_local std::vector<double> vt;
            thread_local Eigen::VectorXd feat;
            vt.assign(C, 0.0);
            Eigen::VectorXd own_out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(outputs));
            for (std::size_t b = 0; b < C; ++b) {
                double cont = 0.0;
                if (fits[b]) {
                    fits[b]->features(x, basis, feat);
                    const Eigen::VectorXd out = fits[b]->beta.transpose() * feat;
                    cont = out[0];
                    if (b == a) {
                        own_out = out;
                    }
                } else {
                    // No data yet for this control: E[Y_{k+1} | x, b] ~ own continuation.
                    cont = target[p];
                }
                vt[b] = cont + spec.running_reward(t, x, b) * dt;
            }
            double penalty_rate = 0.0;
            for (std::size_t b = 0; b < C; ++b) {
                penalty_rate += lambda0[b] * std::max(vt[b] - vt[a], 0.0);
            }
            // Y is propagated through the regressed value. Subtracting the
            // estimated Z dW, L dN~ pathwise would correlate in-sample fits with
            // their own increments and bias Y downwards by O(features / rows) per step.
            // At t_0 the pathwise average keeps a usable standard error.
            const double y = k == 0 ? target[p] + spec.running_reward(t, x, a) * dt + pen * penalty_rate
                                    : vt[a] + pen * penalty_rate;
            double zz = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double zj = own_out[static_cast<Eigen::Index>(1 + j)];
                zz += zj * zj;
            }
            double ll = 0.0;
            for (std::size_t j = 0; j < J; ++j) {
                const double lj = own_out[static_cast<Eigen::Index>(1 + m + j)];
                ll += lj * lj * atoms.rate[j];
            }
            Y[p] = y;
            inc[p] = pen * penalty_rate;
            z_sq[p] = zz;
            l_sq[p] = ll;
            r_pos[p] = penalty_rate;
            q.penalty_integral[p] += penalty_rate * dt;
            q.k_terminal[p] += pen * penalty_rate;
            // Jump of the penalized value when I switched on (t_{k-1}, t_k].
            if (k > 0) {
                const std::size_t prev = path.state.step_controls[k - 1];
                if (prev != a) {
                    auto u = [&](std::size_t c) {
                        double g = 0.0;
                        for (std::size_t b = 0; b < C; ++b) {
                            g += lambda0[b] * std::max(vt[b] - vt[c], 0.0);
                        }
                        return vt[c] + pen * g;
                    };
                    next_correction[p] = u(a) - u(prev);
                }
            }
            if (p < recorded) {
                auto& tr = q.tracks[p];
                tr.y[k] = y;
                for (std::size_t j = 0; j < m; ++j) {
                    tr.z[k * m + j] = own_out[static_cast<Eigen::Index>(1 + j)];
                }
                for (std::size_t j = 0; j < J; ++j) {
                    tr.l[k * J + j] = own_out[static_cast<Eigen::Index>(1 + m + j)];
                }
                for (std::size_t b = 0; b < C; ++b) {
                    tr.r[k * C + b] = vt[b] - vt[a];
                }
            }
        }, 256);
        correction.swap(next_correction);

        CompensatedSum sy, sz, sl, sr, si;
        for (std::size_t p = 0; p < P; ++p) {
            sy.add(Y[p]);
            sz.add(z_sq[p]);
            sl.add(l_sq[p]);
            sr.add(r_pos[p]);
            si.add(inc[p]);
            if (inc[p] < 0.0) {
                q.k_monotone = false;
            }
        }
        const double inv = 1.0 / static_cast<double>(P);
        q.mean_y[k] = sy.value() * inv;
        q.mean_z_sq[k] = sz.value() * inv;
        q.mean_l_sq[k] = sl.value() * inv;
        q.mean_r_pos[k] = sr.value() * inv;
        increments_mean[k] = si.value() * inv;
        for (std::size_t r = 0; r < recorded; ++r) {
            // Stash the increment; converted to running K below.
            q.tracks[r].k[k + 1] = inc[r];
        }
    }

    for (std::size_t k = 0; k < N; ++k) {
        q.mean_k[k + 1] = q.mean_k[k] + increments_mean[k];
    }
    for (auto& tr : q.tracks) {
        tr.k[0] = 0.0;
        for (std::size_t k = 1; k <= N; ++k) {
            tr.k[k] += tr.k[k - 1];
        }
    }
    q.y0 = estimate_of(Y);
    return q;
}

} // namespace randctl
