// dbps: command-line front end for the experiment recipes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbps/diagnostics.hpp"
#include "dbps/experiments.hpp"
#include "dbps/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dbps;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool paper_scale = false;
  std::size_t workers = 0;
  // diag
  std::string trace;
  std::string segments;
  std::size_t burn_in = 0;
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t resolve_workers(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("DBPS_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("DBPS_WORKERS must be a positive integer, got '") + env + "'");
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

ExperimentConfig load(const Options& o, const std::string& command) {
  if (o.config.empty()) throw ConfigError("--config is required for '" + command + "'");
  std::ifstream in(o.config);
  if (!in) throw ConfigError("cannot open config file " + o.config);
  json j = json::parse(in);  // parse_error is a config error
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (o.seed) j["seed"] = *o.seed;
  return parse_config(j, command, o.paper_scale, fs::path(o.config).parent_path());
}

fs::path prepare_dir(const Options& o, const ExperimentConfig& cfg) {
  const fs::path dir = fs::path(o.out) / config_hash(cfg);
  fs::create_directories(dir);
  write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
  return dir;
}

double per_million(double ess, std::uint64_t evaluations) {
  return evaluations > 0 ? ess * 1e6 / static_cast<double>(evaluations) : 0.0;
}

json replicate_json(const ReplicateResult& r) {
  json j = to_json(r.summary);
  j["replicate"] = r.replicate;
  j["seed"] = r.seed;
  j["x0"] = std::vector<double>(r.x0.data(), r.x0.data() + r.x0.size());
  return j;
}

int cmd_run(const Options& o) {
  const ExperimentConfig cfg = load(o, "run");
  const TargetSetup setup = make_target(cfg.target, cfg.paper_scale, cfg.base_dir);
  const fs::path dir = prepare_dir(o, cfg);
  const auto results = run_replicates(cfg, setup, resolve_workers(o.workers), true);
  json all = json::array();
  for (const auto& r : results) {
    const std::string stem = "replicate_" + std::to_string(r.replicate + 1);
    write_trace_csv(dir / (stem + "_trace.csv"), *r.trace);
    write_segments_csv(dir / (stem + "_segments.csv"), *r.trace);
    const json j = replicate_json(r);
    write_text(dir / (stem + "_summary.json"), j.dump(2) + "\n");
    all.push_back(j);
    std::cout << "replicate " << r.replicate + 1 << ": f_b " << r.summary.f_b << " f_r " << r.summary.f_r
              << " ess_min " << r.summary.ess_min << " ess_lp " << r.summary.ess_lp << "\n";
  }
  write_text(dir / "summary.json", all.dump(2) + "\n");
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}

bool log_axis(const std::string& axis) { return axis == "delta" || axis == "kappa"; }

int cmd_sweep(const Options& o) {
  const ExperimentConfig cfg = load(o, "sweep");
  if (!cfg.sweep) throw ConfigError("'sweep' needs a sweep section with axis and grid");
  const TargetSetup setup = make_target(cfg.target, cfg.paper_scale, cfg.base_dir);
  const fs::path dir = prepare_dir(o, cfg);
  const SweepSpec& sw = *cfg.sweep;
  const auto rows = run_sweep(cfg, setup, resolve_workers(o.workers));

  std::ostringstream csv;
  csv << "axis,value,replicate,seed,f_b,f_r,c_rms,ess_min,ess_lp,evaluations,"
         "ess_min_per_1e6_evals,ess_lp_per_1e6_evals,efficiency\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    csv << sw.axis << ',' << format_double(sw.grid[r.grid]) << ',' << r.replicate + 1 << ',' << r.seed << ','
        << format_double(s.f_b) << ',' << format_double(s.f_r) << ','
        << (s.c_rms ? format_double(*s.c_rms) : std::string("NA")) << ',' << format_double(s.ess_min) << ','
        << format_double(s.ess_lp) << ',' << s.evaluations << ','
        << format_double(per_million(s.ess_min, s.evaluations)) << ','
        << format_double(per_million(s.ess_lp, s.evaluations)) << ','
        << format_double(efficiency_ratio(s.f_b, s.f_r, cfg.omega)) << '\n';
  }
  write_text(dir / "sweep.csv", csv.str());

  struct Stat {
    const char* name;
    bool log_y;
    double (*get)(const DiagnosticsSummary&);
  };
  const Stat stats[] = {
      {"f_b", false, [](const DiagnosticsSummary& s) { return s.f_b; }},
      {"f_r", false, [](const DiagnosticsSummary& s) { return s.f_r; }},
      {"c_rms", false, [](const DiagnosticsSummary& s) { return s.c_rms.value_or(std::nan("")); }},
      {"ess_min", true, [](const DiagnosticsSummary& s) { return s.ess_min; }},
      {"ess_lp", true, [](const DiagnosticsSummary& s) { return s.ess_lp; }},
      {"ess_min per 1e6 evals", true,
       [](const DiagnosticsSummary& s) { return per_million(s.ess_min, s.evaluations); }},
  };
  std::vector<PlotPanel> panels;
  for (const Stat& st : stats) {
    PlotPanel p;
    p.title = std::string(st.name) + " against " + sw.axis;
    p.x_label = sw.axis;
    p.y_label = st.name;
    p.log_x = log_axis(sw.axis);
    p.log_y = st.log_y;
    for (std::size_t rep = 0; rep < cfg.replicates; ++rep) {
      PlotSeries s;
      s.label = "replicate " + std::to_string(rep + 1);
      for (const auto& r : rows) {
        if (r.replicate != rep) continue;
        s.x.push_back(sw.grid[r.grid]);
        s.y.push_back(st.get(r.summary));
      }
      p.series.push_back(std::move(s));
    }
    panels.push_back(std::move(p));
  }
  write_text(dir / "sweep.svg", render_svg(panels));
  std::cout << "wrote " << dir.string() << " (" << rows.size() << " runs)\n";
  return 0;
}

int cmd_converge(const Options& o) {
  const ExperimentConfig cfg = load(o, "converge");
  const TargetSetup setup = make_target(cfg.target, cfg.paper_scale, cfg.base_dir);
  const fs::path dir = prepare_dir(o, cfg);
  const ConvergenceResult res = run_convergence(cfg, setup, resolve_workers(o.workers));

  std::ostringstream csv;
  csv << "phi,replicate,seed,n_cvg,converged\n";
  PlotPanel p;
  p.title = "iterations to reach the median log pi";
  p.x_label = "phi";
  p.y_label = "n_cvg";
  p.log_x = p.log_y = true;
  PlotSeries capped{"capped (at cap)", {}, {}, false};
  for (std::size_t rep = 0; rep < cfg.replicates; ++rep)
    p.series.push_back({"replicate " + std::to_string(rep + 1), {}, {}, true});
  json rows = json::array();
  for (const auto& r : res.rows) {
    csv << format_double(r.phi) << ',' << r.replicate + 1 << ',' << r.seed << ','
        << (r.n_cvg ? std::to_string(*r.n_cvg) : std::string("NA")) << ',' << (r.n_cvg ? "true" : "false")
        << '\n';
    if (r.n_cvg) {
      p.series[r.replicate].x.push_back(r.phi);
      p.series[r.replicate].y.push_back(static_cast<double>(std::max<std::size_t>(*r.n_cvg, 1)));
    } else {
      capped.x.push_back(r.phi);
      capped.y.push_back(static_cast<double>(cfg.converge.cap));
      std::cout << "not converged: phi " << r.phi << " replicate " << r.replicate + 1 << "\n";
    }
    rows.push_back({{"phi", r.phi},
                    {"replicate", r.replicate + 1},
                    {"seed", r.seed},
                    {"n_cvg", r.n_cvg ? json(*r.n_cvg) : json(nullptr)}});
  }
  if (!capped.x.empty()) p.series.push_back(std::move(capped));
  write_text(dir / "converge.csv", csv.str());
  write_text(dir / "converge.svg", render_svg({p}, 1));
  const json summary{{"m_pi", res.m_pi}, {"slope", res.slope}, {"any_capped", res.any_capped}, {"rows", rows}};
  write_text(dir / "converge.json", summary.dump(2) + "\n");
  std::cout << "m_pi " << res.m_pi << " slope " << res.slope << (res.any_capped ? " (some rows capped)" : "")
            << "\nwrote " << dir.string() << "\n";
  return 0;
}

int cmd_mmpp(const Options& o) {
  const ExperimentConfig cfg = load(o, "mmpp");
  const TargetSetup setup = make_target(cfg.target, cfg.paper_scale, cfg.base_dir);
  if (!setup.mmpp) throw ConfigError("'mmpp' needs an mmpp target");
  const fs::path dir = prepare_dir(o, cfg);
  write_mmpp_data(dir / "events.txt", MmppData{setup.mmpp->t_end, setup.mmpp->events});
  const MmppStudyResult res = run_mmpp_study(cfg, setup, resolve_workers(o.workers));

  // Timings go to their own file so the other outputs are reproducible byte for byte.
  json summary{{"n_events", res.n_events}, {"t_end", res.t_end}};
  json timing{{"surrogate_fit_cpu_seconds", res.fit_cpu_seconds}};
  if (res.surrogate) {
    const auto& s = *res.surrogate;
    summary["surrogate"] = {{"mode", std::vector<double>(s.mode.data(), s.mode.data() + s.mode.size())},
                            {"condition_number", s.condition_number},
                            {"regularized", s.regularized},
                            {"optimizer_iterations", s.optimizer_iterations},
                            {"warnings", s.warnings}};
  } else {
    summary["surrogate"] = {{"error", res.surrogate_error}};
  }
  summary["variants"] = json::array();
  timing["variants"] = json::array();
  for (const auto& v : res.variants) {
    json j{{"name", v.name}, {"ok", v.ok}};
    if (v.ok) j["summary"] = to_json(v.summary);
    else j["error"] = v.error;
    summary["variants"].push_back(j);
    timing["variants"].push_back({{"name", v.name},
                                  {"cpu_seconds", v.cpu_seconds},
                                  {"ess_per_cpu_second", v.ess_per_cpu_second},
                                  {"ess_lp_per_cpu_second", v.ess_lp_per_cpu_second}});
    std::cout << v.name << ": ";
    if (v.ok)
      std::cout << "f_b " << v.summary.f_b << " f_r " << v.summary.f_r << " ess_min " << v.summary.ess_min
                << " ess_lp " << v.summary.ess_lp << " cpu " << v.cpu_seconds << " s\n";
    else
      std::cout << "failed: " << v.error << "\n";
  }
  write_text(dir / "mmpp.json", summary.dump(2) + "\n");
  write_text(dir / "timing.json", timing.dump(2) + "\n");
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_precondition(const Options& o) {
  const ExperimentConfig cfg = load(o, "precondition");
  const TargetSetup setup = make_target(cfg.target, cfg.paper_scale, cfg.base_dir);
  const fs::path dir = prepare_dir(o, cfg);
  const PreconditionResult res = run_precondition_demo(cfg, setup, resolve_workers(o.workers));
  json plain = json::array(), pre = json::array();
  for (const auto& r : res.plain) plain.push_back(replicate_json(r));
  for (const auto& r : res.preconditioned) pre.push_back(replicate_json(r));
  const json summary{{"equivalence_deviation", res.equivalence_deviation},
                     {"step_deviation", res.step_deviation},
                     {"ess_min_ratio", res.ess_min_ratio},
                     {"plain", plain},
                     {"preconditioned", pre}};
  write_text(dir / "precondition.json", summary.dump(2) + "\n");
  std::cout << "ess_min ratio " << res.ess_min_ratio << " equivalence deviation " << res.equivalence_deviation
            << " step deviation " << res.step_deviation << "\nwrote " << dir.string() << "\n";
  return 0;
}

int cmd_diag(const Options& o) {
  ChainTrace trace;
  try {
    trace = read_trace_csv(o.trace, o.segments.empty() ? fs::path() : fs::path(o.segments));
  } catch (const std::exception& e) {
    throw RuntimeFailure(e.what());
  }
  std::cout << to_json(summarize(trace, o.burn_in)).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete bouncy particle sampler experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file");
    sub->add_option("--seed", o.seed, "override the master seed");
    sub->add_option("--out", o.out, "output root (files go to <out>/<config hash>)");
    sub->add_flag("--paper-scale", o.paper_scale, "use the full-size defaults");
    sub->add_option("--workers", o.workers, "worker threads (default DBPS_WORKERS or all cores)");
  };
  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Entry entries[] = {
      {"run", "seeded replicate runs", cmd_run},
      {"sweep", "parameter sweep", cmd_sweep},
      {"converge", "tail convergence study", cmd_converge},
      {"mmpp", "MMPP gradient comparison", cmd_mmpp},
      {"precondition", "plain against preconditioned sampler", cmd_precondition},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    common(sub);
    sub->callback([&chosen, fn = e.fn] { chosen = fn; });
  }
  CLI::App* diag = app.add_subcommand("diag", "diagnostics of an existing trace CSV");
  diag->add_option("trace", o.trace, "trace CSV")->required();
  diag->add_option("segments", o.segments, "segments CSV");
  diag->add_option("--burn-in", o.burn_in, "iterations dropped from the ESS series");
  diag->callback([&chosen] { chosen = cmd_diag; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return chosen(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
