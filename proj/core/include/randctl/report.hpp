#pragma once

#include "randctl/stats.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace randctl {

enum class Verdict { pass, fail, skipped };

std::string_view to_string(Verdict v) noexcept;

struct CheckResult {
    std::string name;
    Verdict verdict = Verdict::skipped;
    /// Measured quantity vs threshold, or the reason for skipping.
    std::string detail;
};

/// Worst verdict wins: fail > pass > skipped.
Verdict combine(const std::vector<CheckResult>& checks) noexcept;

/// One problem valued by every available method, side by side.
struct ValueReport {
    std::string problem;
    std::optional<double> v0_dp;
    /// (level n, value, standard error) for the penalized solvers.
    struct Level {
        int n = 0;
        double value = 0.0;
        double standard_error = 0.0;
    };
    std::vector<Level> v0_bsde;
    std::optional<double> v0_bsde_limit;
    std::optional<Estimate> v0_tilt_best;
    std::vector<CheckResult> checks;

    std::string to_json() const;
};

struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> grid_overrides;
    std::string output_directory;
    std::string tool_version;
    double wall_clock_seconds = 0.0;
    std::vector<std::string> outputs;
    std::vector<CheckResult> verdicts;

    std::string to_json() const;
};

} // namespace randctl
