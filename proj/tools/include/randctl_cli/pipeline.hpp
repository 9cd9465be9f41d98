#pragma once

#include <randctl/bsde.hpp>
#include <randctl/config.hpp>
#include <randctl/dp.hpp>
#include <randctl/report.hpp>

#include <optional>
#include <string>
#include <vector>

namespace randctl::cli {

enum class Suite { all, martingale, monotone, constraint, dpp, value_equality, hjb };

std::optional<Suite> parse_suite(std::string_view name) noexcept;

/// Lattice shared by every solver of one run.
struct Lattice {
    TimeGrid time;
    StateGrid grid;
};

Lattice make_lattice(const RunConfig& config);

std::vector<PenalizedField> solve_ladder(const RunConfig& config, const Lattice& lattice);
DpField solve_dp(const RunConfig& config, const Lattice& lattice);

/// Y_0 of the penalized BSDE per ladder level, one shared reference bundle.
std::vector<LadderEntry> solve_lsmc_ladder(const RunConfig& config, const Lattice& lattice);

/// A field read back from CSV; throws csv or validation errors when malformed.
PenalizedField read_field_csv(const std::string& path, const PenalizedField& like);

std::vector<CheckResult> run_suite(Suite suite, const RunConfig& config, const std::optional<std::string>& field_path);

} // namespace randctl::cli
