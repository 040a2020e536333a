#include "dbps/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dbps {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("bad number '" + s + "' on line " + std::to_string(line_no));
  }
  return v;
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace) {
  auto out = open_out(path);
  out << "iter,logpi,kind";
  for (Index i = 0; i < trace.dim; ++i) out << ",x_" << (i + 1);
  out << '\n';
  std::string row;
  for (std::size_t it = 1; it <= trace.n_iters(); ++it) {
    row.clear();
    row += std::to_string(it);
    row += ',';
    row += format_double(trace.log_pi[it - 1]);
    row += ',';
    row += kind_code(trace.kinds[it - 1]);
    if (it % trace.thin == 0) {
      const Index c = static_cast<Index>(it / trace.thin - 1);
      for (Index i = 0; i < trace.dim; ++i) {
        row += ',';
        row += format_double(trace.positions(i, c));
      }
    } else {
      row.append(static_cast<std::size_t>(trace.dim), ',');
    }
    row += '\n';
    out << row;
  }
}

void write_segments_csv(const std::filesystem::path& path, const ChainTrace& trace) {
  auto out = open_out(path);
  out << "start_iter,end_iter,dot\n";
  for (const auto& s : trace.segments) {
    out << s.start_iter << ',' << s.end_iter << ',' << format_double(s.dot) << '\n';
  }
}

ChainTrace read_trace_csv(const std::filesystem::path& trace_path,
                          const std::filesystem::path& segments_path) {
  std::ifstream in(trace_path);
  if (!in) throw std::runtime_error("cannot open trace " + trace_path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file");
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "iter" || header[1] != "logpi" || header[2] != "kind") {
    throw std::runtime_error("trace header must start with iter,logpi,kind");
  }
  ChainTrace trace;
  trace.dim = static_cast<Index>(header.size() - 3);
  std::vector<std::vector<double>> cols;
  std::vector<std::size_t> pos_iters;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("wrong column count on line " + std::to_string(line_no));
    }
    const std::size_t it = std::stoull(cells[0]);
    if (it != trace.kinds.size() + 1) {
      throw std::runtime_error("iterations not consecutive on line " + std::to_string(line_no));
    }
    trace.log_pi.push_back(parse_double(cells[1], line_no));
    if (cells[2].size() != 1) throw std::runtime_error("bad kind on line " + std::to_string(line_no));
    trace.kinds.push_back(kind_from_code(cells[2][0]));
    if (trace.dim > 0 && !cells[3].empty()) {
      std::vector<double> x(static_cast<std::size_t>(trace.dim));
      for (Index i = 0; i < trace.dim; ++i) {
        x[static_cast<std::size_t>(i)] = parse_double(cells[3 + static_cast<std::size_t>(i)], line_no);
      }
      cols.push_back(std::move(x));
      pos_iters.push_back(it);
    }
  }
  if (trace.kinds.empty()) throw std::runtime_error("trace has no rows");
  trace.thin = pos_iters.empty() ? trace.kinds.size() + 1 : pos_iters.front();
  for (std::size_t k = 0; k < pos_iters.size(); ++k) {
    if (pos_iters[k] != (k + 1) * trace.thin) {
      throw std::runtime_error("position rows are not evenly thinned");
    }
  }
  trace.positions.resize(trace.dim, static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (Index i = 0; i < trace.dim; ++i) {
      trace.positions(i, static_cast<Index>(c)) = cols[c][static_cast<std::size_t>(i)];
    }
  }
  for (std::size_t it = 1; it <= trace.kinds.size(); ++it) {
    if (is_dr_event(trace.kinds[it - 1])) trace.dr_events.push_back(it);
  }
  if (!segments_path.empty()) {
    std::ifstream sin(segments_path);
    if (!sin) throw std::runtime_error("cannot open segments " + segments_path.string());
    std::getline(sin, line);
    std::size_t sline = 1;
    while (std::getline(sin, line)) {
      ++sline;
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != 3) throw std::runtime_error("bad segments line " + std::to_string(sline));
      SegmentRecord seg;
      seg.start_iter = std::stoull(cells[0]);
      seg.end_iter = std::stoull(cells[1]);
      seg.dot = parse_double(cells[2], sline);
      trace.segments.push_back(seg);
    }
  }
  return trace;
}

namespace {

constexpr double kPanelW = 360.0;
constexpr double kPanelH = 260.0;
constexpr double kLeft = 62.0;
constexpr double kRight = 14.0;
constexpr double kTop = 28.0;
constexpr double kBottom = 44.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double e = std::ceil(lo - 1e-9); e <= hi + 1e-9; e += 1.0) t.push_back(std::pow(10.0, e));
      return t;
    }
    for (int k = 0; k <= 4; ++k) t.push_back(lo + (hi - lo) * k / 4.0);
    return t;
  }
};

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }

Axis make_axis(const std::vector<const std::vector<double>*>& data, bool log) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* d : data) {
    for (double v : *d) {
      if (!usable(v, log)) continue;
      const double w = log ? std::log10(v) : v;
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
  }
  Axis a;
  a.log = log;
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  a.lo = lo - pad;
  a.hi = hi + pad;
  return a;
}

}  // namespace

std::string render_svg(const std::vector<PlotPanel>& panels, int columns) {
  if (columns < 1) columns = 1;
  const int n = static_cast<int>(panels.size());
  const int cols = std::max(1, std::min(columns, n));
  const int rows = n == 0 ? 1 : (n + cols - 1) / cols;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(cols * kPanelW, 0)
      << "\" height=\"" << fixed(rows * kPanelH, 0) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int p = 0; p < n; ++p) {
    const PlotPanel& panel = panels[static_cast<std::size_t>(p)];
    const double ox = (p % cols) * kPanelW;
    const double oy = (p / cols) * kPanelH;
    const double x0 = ox + kLeft;
    const double x1 = ox + kPanelW - kRight;
    const double y0 = oy + kPanelH - kBottom;
    const double y1 = oy + kTop;

    std::vector<const std::vector<double>*> xs;
    std::vector<const std::vector<double>*> ys;
    for (const auto& s : panel.series) {
      xs.push_back(&s.x);
      ys.push_back(&s.y);
    }
    const Axis ax = make_axis(xs, panel.log_x);
    const Axis ay = make_axis(ys, panel.log_y);

    svg << "<g>\n";
    svg << "<text x=\"" << fixed(ox + kPanelW / 2) << "\" y=\"" << fixed(oy + 16)
        << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(panel.title) << "</text>\n";
    svg << "<rect x=\"" << fixed(x0) << "\" y=\"" << fixed(y1) << "\" width=\"" << fixed(x1 - x0)
        << "\" height=\"" << fixed(y0 - y1) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : ax.ticks()) {
      const double px = ax.map(t, x0, x1);
      svg << "<line x1=\"" << fixed(px) << "\" y1=\"" << fixed(y0) << "\" x2=\"" << fixed(px)
          << "\" y2=\"" << fixed(y0 + 4) << "\" stroke=\"black\"/>"
          << "<text x=\"" << fixed(px) << "\" y=\"" << fixed(y0 + 16)
          << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
    }
    for (double t : ay.ticks()) {
      const double py = ay.map(t, y0, y1);
      svg << "<line x1=\"" << fixed(x0 - 4) << "\" y1=\"" << fixed(py) << "\" x2=\"" << fixed(x0)
          << "\" y2=\"" << fixed(py) << "\" stroke=\"black\"/>"
          << "<text x=\"" << fixed(x0 - 6) << "\" y=\"" << fixed(py + 4)
          << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
    }
    svg << "<text x=\"" << fixed((x0 + x1) / 2) << "\" y=\"" << fixed(oy + kPanelH - 8)
        << "\" text-anchor=\"middle\">" << escape(panel.x_label) << "</text>\n";
    svg << "<text transform=\"translate(" << fixed(ox + 14) << "," << fixed((y0 + y1) / 2)
        << ") rotate(-90)\" text-anchor=\"middle\">" << escape(panel.y_label) << "</text>\n";

    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const PlotSeries& s = panel.series[si];
      const char* color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
      std::string points;
      for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
        if (!usable(s.x[k], panel.log_x) || !usable(s.y[k], panel.log_y)) continue;
        const double px = ax.map(s.x[k], x0, x1);
        const double py = ay.map(s.y[k], y0, y1);
        svg << "<circle cx=\"" << fixed(px) << "\" cy=\"" << fixed(py) << "\" r=\"2.5\" fill=\""
            << color << "\"/>\n";
        points += fixed(px) + "," + fixed(py) + " ";
      }
      if (s.lines && !points.empty()) {
        points.pop_back();
        svg << "<polyline points=\"" << points << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.2\"/>\n";
      }
      if (!s.label.empty()) {
        const double ly = y1 + 12.0 + 13.0 * static_cast<double>(si);
        svg << "<text x=\"" << fixed(x1 - 4) << "\" y=\"" << fixed(ly) << "\" text-anchor=\"end\" fill=\""
            << color << "\">" << escape(s.label) << "</text>\n";
      }
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dbps
