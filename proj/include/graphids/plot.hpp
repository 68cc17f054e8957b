#pragma once

// Static SVG figures (with CSV data alongside) from an evaluation report.

#include <filesystem>
#include <string>

#include "graphids/detection.hpp"

namespace graphids {

enum class PlotKind { PrCurve, ScoreHistogram };

PlotKind parse_plot_kind(std::string_view s);  // "pr" | "score-hist"

std::string pr_curve_svg(const EvalReport& report);
// Per-type score densities on a log axis with the decision threshold marked.
std::string score_histogram_svg(const EvalReport& report);
std::string score_histogram_csv(const EvalReport& report);
std::string pr_curve_csv(const EvalReport& report);

// Writes <stem>.svg and <stem>.csv; returns the SVG path.
std::filesystem::path write_plot(const EvalReport& report, PlotKind kind, const std::filesystem::path& stem);

}  // namespace graphids
