#pragma once

#include "randctl/bsde.hpp"
#include "randctl/dp.hpp"
#include "randctl/lattice.hpp"
#include "randctl/problem.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace randctl {

/// Values of v(t, .) at arbitrary (possibly shifted) points.
using ValueAccessor = std::function<double(std::span<const double>)>;

/// 1/2 Tr(sigma sigma^T D2v) + <b, Dv> + f
///   + sum over mark atoms of lambda_bar w (v(x + gamma) - v(x) - Dv . gamma).
/// Continuous mark laws use `mark_nodes` quadrature nodes.
double hamiltonian(const ProblemSpec& spec, double t, std::span<const double> x, std::size_t a,
                   std::span<const double> gradient, std::span<const double> hessian, const ValueAccessor& value,
                   int mark_nodes = 32);

enum class DerivativeMode { exact, stencil };

struct HjbResidualField {
    /// Times at which residuals were evaluated.
    std::vector<double> times;
    StateGrid grid;
    /// [time][node]; NaN on excluded nodes.
    std::vector<std::vector<double>> residual;
    /// Maximizing control per [time][node].
    std::vector<std::vector<std::uint32_t>> argmax;
    /// Nodes skipped because they lie in the boundary band or outside the evaluation box.
    std::vector<std::size_t> excluded_nodes;
    /// (time, node) pairs dropped near switching surfaces.
    std::size_t switching_masked = 0;
    std::string stencil;
    double step = 0.0;
    double interior_max_abs = 0.0;
    /// max |v(T, .) - g| over all grid nodes.
    double terminal_max_error = 0.0;
};

/// Residual of a smooth candidate. `exact` uses the candidate's derivatives;
/// `stencil` differentiates its value with central differences of step h in t and x.
HjbResidualField hjb_residual(const ProblemSpec& spec, const AnalyticCandidate& candidate, const StateGrid& grid,
                              const std::vector<double>& times, DerivativeMode mode, double h = 0.0, int band = 1);

/// A solved value table v(t_k, node) on a lattice.
struct ValueTable {
    TimeGrid time;
    StateGrid grid;
    /// [k][node]
    std::vector<std::vector<double>> values;
    std::uint64_t spec_fingerprint = 0;
    /// Penalization level for max_a v^n tables, 0 otherwise.
    int level_n = 0;
    /// [k][node] index attaining max_a v^n; empty for DP tables.
    std::vector<std::vector<std::uint32_t>> maximizer;
};

/// max_a v^n(t_k, x, a).
ValueTable value_table(const PenalizedField& field);
ValueTable value_table(const DpField& dp);

struct ResidualOptions {
    /// Fraction of each coordinate range (centered) where residuals are taken.
    double box_fraction = 0.5;
    int band = 1;
    /// Evaluate every `time_stride`-th step.
    std::size_t time_stride = 1;
    /// Drop (time, node) pairs whose neighbourhood of `switch_band` nodes and one
    /// evaluated slice either side sees more than one maximizing control. The
    /// value is not C^2 across a switching surface, so differences there measure
    /// the kink rather than the scheme. Negative disables the mask. Penalized
    /// tables widen it to 2 sigma_bar / sqrt(n Lambda), the distance over which
    /// max_a v^n smooths the switch. Stencils that straddle a change of the
    /// table's own maximizer are dropped as well.
    int switch_band = 2;
};

/// Residual of an interpolated table: central differences with the grid steps in
/// space and the time step in t (one-sided at the ends).
HjbResidualField hjb_residual(const ProblemSpec& spec, const ValueTable& table, const ResidualOptions& options = {});

struct ResidualCertificate {
    double interior_max_abs_residual = 0.0;
    double terminal_max_error = 0.0;
    std::size_t interior_nodes = 0;
    /// (time, node) residuals that survived both masks.
    std::size_t evaluated = 0;
    bool pass = false;
};

/// Consistency certificate on smooth regions: pass iff the interior residual is
/// within tol_hjb and the terminal mismatch within tol_value.
ResidualCertificate residual_certificate(const ProblemSpec& spec, const ValueTable& table, const Tolerances& tolerances,
                                         const ResidualOptions& options = {});

/// Heat-map CSV: t, state coordinates, residual, argmax (excluded nodes omitted).
void write_residual_csv(const ProblemSpec& spec, const HjbResidualField& field, std::ostream& out);

} // namespace randctl
