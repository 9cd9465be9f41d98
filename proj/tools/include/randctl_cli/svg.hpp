#pragma once

#include <randctl/csv.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace randctl::cli {

enum class PlotKind { value_ladder, residual_heatmap, path_fan };

std::optional<PlotKind> parse_plot_kind(std::string_view name) noexcept;

/// SVG 1.1 document for a CSV table. Throws ValidationError when the table is
/// empty or lacks the columns the plot needs:
///   value-ladder      n, value
///   residual-heatmap  t, x0, residual
///   path-fan          path, t, x0
std::string render_svg(PlotKind kind, const csv::Table& table);

} // namespace randctl::cli
