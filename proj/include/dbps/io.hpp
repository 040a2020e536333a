#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dbps/sampler.hpp"

namespace dbps {

/// Trace CSV: header `iter,logpi,kind,x_1,...,x_d`, one row per iteration with
/// kind in {A,B,R,S}. Position columns are filled only on thinned rows.
void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace);

/// Segments CSV: `start_iter,end_iter,dot`.
void write_segments_csv(const std::filesystem::path& path, const ChainTrace& trace);

/// Rebuilds a trace from its CSV files. Without a segments file the trace has
/// no segments. Evaluation counts are not stored and read back as zero.
ChainTrace read_trace_csv(const std::filesystem::path& trace_path,
                          const std::filesystem::path& segments_path = {});

void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal form of x.
std::string format_double(double x);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool lines = true;
};

struct PlotPanel {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Grid of line/scatter panels as a standalone SVG document. Non-finite
/// points (and non-positive ones on log axes) are skipped.
std::string render_svg(const std::vector<PlotPanel>& panels, int columns = 3);

}  // namespace dbps
