#pragma once

#include "wb2flow/diagnostics.hpp"

#include <string>

namespace wb2flow {

/// Seventeen significant digits, so values round-trip exactly.
std::string format_double(double v);

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// One row per cell: index, centre coordinates, density.
std::string density_csv(const DiscreteMeasure& mu);
void write_density_csv(const std::string& path, const DiscreteMeasure& mu);
/// Rebuilds the grid from the centres unless `grid` is given.
DiscreteMeasure read_density_csv(const std::string& path, GridPtr grid = nullptr);

/// src_index, dst_index, mass; the reservoir is index -1.
std::string plan_csv(const TransportPlan& plan);

std::string report_json(const DiagnosticsReport& rep);
std::string report_csv(const DiagnosticsReport& rep);

}  // namespace wb2flow
