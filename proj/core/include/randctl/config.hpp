#pragma once

#include "randctl/problem.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace randctl {

/// Explicit state grid; one entry per full-state coordinate.
struct GridOverride {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<int> nodes;
};

/// Pilot simulation that sizes the default state grid.
struct PilotOptions {
    std::size_t paths = 2000;
    double sd_multiple = 5.0;
    double pad_fraction = 0.5;
    double min_pad = 0.5;
    int nodes_1d = 161;
    int nodes_2d = 61;
    int nodes_3d = 25;
};

enum class KernelMode { quadrature, monte_carlo };

struct KernelOptions {
    KernelMode mode = KernelMode::quadrature;
    int hermite_nodes = 9;
    /// Quadrature atoms for continuous mark laws.
    int mark_nodes = 8;
    /// Jump counts above this are lumped into the last one.
    int max_jumps = 2;
    /// Draws per (time, node, control) in monte_carlo mode.
    std::size_t inner_samples = 256;
};

enum class Extrapolation { last, richardson };

std::string_view to_string(KernelMode mode) noexcept;
std::string_view to_string(Extrapolation e) noexcept;
std::optional<Extrapolation> parse_extrapolation(std::string_view name) noexcept;

struct SolverSettings {
    double steps_per_unit_time = 64.0;
    std::vector<int> ladder{1, 2, 4, 8, 16};
    Extrapolation extrapolation = Extrapolation::last;
    std::optional<GridOverride> grid;
    PilotOptions pilot;
    KernelOptions kernel;
    std::size_t paths = 20000;
    std::size_t lsmc_paths = 100000;
    int lsmc_degree = 2;
    double ridge = 1e-8;
    /// Floor of the argmax tilt used for the randomized DPP and value checks.
    double nu_min = 0.01;
    /// Level and floor of the feedback tilt used by the Girsanov suite.
    int girsanov_level = 2;
    double girsanov_nu_min = 0.5;
    /// Intermediate time of the DPP check as a fraction of the horizon.
    double dpp_fraction = 0.5;
    std::uint64_t seed = 20240611;
};

struct Tolerances {
    double tol_value = 2e-2;
    double tol_grid = 2e-2;
    double tol_mono = 1e-6;
    double tol_hjb = 5e-2;
    /// HJB residual of closed-form candidates with exact derivatives.
    double tol_exact = 1e-10;
    double se_multiple = 3.0;
};

/// A problem document together with its optional "solver" and
/// "tolerances" sections.
struct RunConfig {
    ProblemSpec problem;
    SolverSettings solver;
    Tolerances tolerances;
};

RunConfig load_config(std::string_view json_text, const LoadOptions& options = {});
RunConfig load_config_file(const std::string& path, const LoadOptions& options = {});

std::string to_json(const SolverSettings& settings);
std::string to_json(const Tolerances& tolerances);

} // namespace randctl
