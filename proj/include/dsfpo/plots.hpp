#pragma once
#include <string>
#include <vector>

#include "dsfpo/metrics.hpp"

namespace dsfpo {

struct PlotReport {
  int logs = 0;
  int skipped_lines = 0;       // malformed record lines across all logs
  int truncated_to = 0;        // common iteration count used
  bool truncated = false;      // lengths differed
  std::vector<std::string> files;  // everything written
  std::vector<std::string> warnings;
};

// Training curves (per-algorithm mean with a +-1 std band across logs) as SVG
// plus companion CSVs with the plotted numbers. When usage_json_path names an
// eval summary, also renders the per-terrain skill-usage heatmap.
PlotReport emit_plots(const std::vector<std::string>& log_paths, const std::string& out_dir,
                      const std::string& usage_json_path = "");

}  // namespace dsfpo
