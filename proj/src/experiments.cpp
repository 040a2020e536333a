#include "dbps/experiments.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <random>

#include "dbps/parallel.hpp"

namespace dbps {

using nlohmann::json;

namespace {

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 1e18) return static_cast<std::size_t>(d);
  }
  throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
}

Vec get_vector(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + " must be a non-empty array");
  Vec v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + " must hold numbers");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

Mat get_matrix(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + " must be a non-empty array of rows");
  const std::size_t n = j.size();
  Mat m(static_cast<Index>(n), static_cast<Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const Vec row = get_vector(j[r], what);
    if (static_cast<std::size_t>(row.size()) != n) throw ConfigError(std::string(what) + " must be square");
    m.row(static_cast<Index>(r)) = row.transpose();
  }
  return m;
}

json to_json_vec(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Index get_dim(const json& spec) {
  const std::size_t d = get_count(spec, "d", 0);
  if (d < 1) throw ConfigError("target: 'd' must be >= 1");
  return static_cast<Index>(d);
}

}  // namespace

Vec TargetSetup::draw_start(Rng& rng) const {
  std::normal_distribution<double> normal;
  Vec z(model.dim);
  for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return start_mean + start_factor * z;
}

TargetSetup make_target(const json& spec_in, bool paper_scale, const std::filesystem::path& base_dir) {
  if (!spec_in.is_object() || !spec_in.contains("name") || !spec_in.at("name").is_string()) {
    throw ConfigError("target must be an object with a string 'name'");
  }
  json spec = spec_in;
  const std::string name = spec.at("name").get<std::string>();
  TargetSetup s;
  if (name == "quartic") {
    Vec lambdas;
    const json lam = spec.contains("lambda") ? spec.at("lambda") : json("index");
    if (lam.is_array()) {
      lambdas = get_vector(lam, "target.lambda");
    } else {
      const Index d = get_dim(spec);
      if (lam.is_string() && lam.get<std::string>() == "index") {
        lambdas = Vec::LinSpaced(d, 1.0, static_cast<double>(d));
      } else if (lam.is_number()) {
        lambdas = Vec::Constant(d, lam.get<double>());
      } else {
        throw ConfigError("target.lambda must be \"index\", a number or an array");
      }
    }
    if ((lambdas.array() <= 0.0).any()) throw ConfigError("target.lambda must be positive");
    spec["lambda"] = to_json_vec(lambdas);
    spec["d"] = lambdas.size();
    s.model = quartic_target(lambdas);
    s.natural_scales = lambdas;
  } else if (name == "logistic") {
    const Index d = get_dim(spec);
    s.model = logistic_target(d);
    s.natural_scales = Vec::LinSpaced(d, 1.0, static_cast<double>(d));
  } else if (name == "gaussian") {
    Vec mean;
    Mat cov;
    if (spec.contains("covariance")) {
      cov = get_matrix(spec.at("covariance"), "target.covariance");
    } else if (spec.contains("scales")) {
      cov = get_vector(spec.at("scales"), "target.scales").array().square().matrix().asDiagonal();
    } else {
      cov = Mat::Identity(get_dim(spec), get_dim(spec));
    }
    mean = spec.contains("mean") ? get_vector(spec.at("mean"), "target.mean") : Vec::Zero(cov.rows());
    if (mean.size() != cov.rows()) throw ConfigError("target: mean and covariance sizes differ");
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("target.covariance is not positive definite");
    s.model = gaussian_target(mean, cov);
    s.start_mean = mean;
    s.start_factor = llt.matrixL();
    s.natural_scales = cov.diagonal().cwiseSqrt();
  } else if (name == "mmpp") {
    MmppModel m;
    m.k = 4;
    m.free_rates = cyclic_pattern(4);
    m.prior_sd = get_number(spec, "prior_sd", 2.0);
    if (spec.contains("data") && !spec.at("data").is_null()) {
      std::filesystem::path p = spec.at("data").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      const MmppData data = read_mmpp_data(p);
      m.t_end = data.t_end;
      m.events = data.events;
    } else {
      m.t_end = get_number(spec, "t_end", paper_scale ? 250.0 : 25.0);
      const auto data_seed = static_cast<std::uint64_t>(get_count(spec, "data_seed", 1));
      Rng rng(data_seed);
      m.events = simulate_mmpp(reference_mmpp_rates(), m.t_end, rng);
      spec["t_end"] = m.t_end;
      spec["data_seed"] = data_seed;
    }
    spec["prior_sd"] = m.prior_sd;
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    s.model = mmpp_target(m);
    s.start_factor = Mat::Identity(m.dim(), m.dim()) * m.prior_sd;
    s.natural_scales = Vec::Ones(m.dim());
    s.mmpp = std::move(m);
  } else {
    throw ConfigError("unknown target '" + name + "'");
  }
  const Index d = s.model.dim;
  if (s.start_mean.size() == 0) s.start_mean = Vec::Zero(d);
  if (s.start_factor.size() == 0) s.start_factor = s.natural_scales.asDiagonal();
  s.spec = std::move(spec);
  return s;
}

SamplerConfig make_sampler(const json& j, const TargetSetup& setup) {
  if (!j.is_object()) throw ConfigError("sampler must be an object");
  SamplerConfig c;
  if (j.contains("delta") && j.contains("log10_delta")) {
    throw ConfigError("sampler: give delta or log10_delta, not both");
  }
  if (j.contains("kappa") && j.contains("log10_kappa")) {
    throw ConfigError("sampler: give kappa or log10_kappa, not both");
  }
  c.delta = j.contains("log10_delta") ? std::pow(10.0, get_number(j, "log10_delta", 0.0))
                                      : get_number(j, "delta", 1.0);
  c.kappa = j.contains("log10_kappa") ? std::pow(10.0, get_number(j, "log10_kappa", 0.0))
                                      : get_number(j, "kappa", 0.0);
  c.eps = get_number(j, "eps", 0.0);
  if (j.contains("n_cpt") && !j.at("n_cpt").is_null()) {
    c.n_cpt = static_cast<int>(get_count(j, "n_cpt", 0));
  }
  try {
    c.gradient_mode = gradient_mode_from_string(j.value("gradient", std::string("analytic")));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const Index d = setup.model.dim;
  if (j.contains("metric")) {
    const json& m = j.at("metric");
    try {
      if (m.is_string()) {
        const std::string kind = m.get<std::string>();
        if (kind == "target_scales") {
          c.metric = Metric::from_scales(setup.natural_scales);
        } else if (kind != "none") {
          throw ConfigError("sampler.metric: unknown value '" + kind + "'");
        }
      } else if (m.is_object() && m.contains("scales")) {
        c.metric = Metric::from_scales(get_vector(m.at("scales"), "sampler.metric.scales"));
      } else if (m.is_object() && m.contains("gamma")) {
        c.metric = Metric::from_gamma(get_matrix(m.at("gamma"), "sampler.metric.gamma"));
      } else if (!m.is_null()) {
        throw ConfigError("sampler.metric must be \"none\", \"target_scales\", {scales} or {gamma}");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.gradient_mode == GradientMode::analytic && !setup.model.has_gradient()) {
    throw ConfigError("target '" + setup.model.name + "' has no analytic gradient");
  }
  // the surrogate itself is fitted by the caller
  if (c.gradient_mode != GradientMode::surrogate) {
    try {
      c.validate(d);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return c;
}

json with_axis(json sampler, const std::string& axis, double value) {
  if (axis == "delta" || axis == "log10_delta") {
    sampler.erase("delta");
    sampler.erase("log10_delta");
  } else if (axis == "kappa" || axis == "log10_kappa") {
    sampler.erase("kappa");
    sampler.erase("log10_kappa");
  } else if (axis != "eps" && axis != "n_cpt") {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  if (axis == "n_cpt") {
    if (value != std::floor(value) || value < 0.0) throw ConfigError("n_cpt grid values must be integers");
    sampler["n_cpt"] = static_cast<int>(value);
  } else {
    sampler[axis] = value;
  }
  return sampler;
}

json ExperimentConfig::to_json() const {
  json j;
  j["command"] = command;
  j["target"] = target;
  j["seed"] = seed;
  j["sampler"] = sampler;
  j["n_iters"] = n_iters;
  j["thin"] = thin;
  j["replicates"] = replicates;
  j["burn_in"] = burn_in;
  j["omega"] = omega;
  j["paper_scale"] = paper_scale;
  if (sweep) j["sweep"] = {{"axis", sweep->axis}, {"grid", sweep->grid}};
  if (command == "converge") {
    j["converge"] = {{"multipliers", converge.multipliers},
                     {"cap", converge.cap},
                     {"reference_iters", converge.reference_iters}};
  }
  if (command == "precondition") {
    j["preconditioned"] = preconditioned;
    j["equivalence_iters"] = equivalence_iters;
  }
  return j;
}

std::size_t ExperimentConfig::burn_in_iters() const {
  return static_cast<std::size_t>(std::floor(burn_in * static_cast<double>(n_iters)));
}

ExperimentConfig parse_config(const json& j, const std::string& command, bool paper_scale,
                              const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  if (!j.contains("target")) throw ConfigError("configuration needs a 'target'");
  const bool seed_ok = j.contains("seed") && (j.at("seed").is_number_unsigned() ||
                                               (j.at("seed").is_number_integer() &&
                                                j.at("seed").get<std::int64_t>() >= 0));
  if (!seed_ok) throw ConfigError("configuration needs a non-negative integer 'seed'");
  ExperimentConfig c;
  c.command = command;
  c.paper_scale = paper_scale;
  c.base_dir = base_dir;
  c.seed = j.at("seed").get<std::uint64_t>();

  const bool mmpp = command == "mmpp";
  const std::size_t default_iters = mmpp ? (paper_scale ? 100'000 : 10'000)
                                         : (paper_scale ? 1'000'000 : 100'000);
  c.n_iters = get_count(j, "n_iters", default_iters);
  c.thin = get_count(j, "thin", mmpp ? 1 : 10);
  const bool multi =
      command == "sweep" || command == "converge" || command == "precondition" || mmpp;
  c.replicates = get_count(j, "replicates", multi ? 3 : 1);
  c.burn_in = get_number(j, "burn_in", 0.1);
  c.omega = get_number(j, "omega", 10.0);
  if (c.n_iters < 1) throw ConfigError("n_iters must be >= 1");
  if (c.thin < 1) throw ConfigError("thin must be >= 1");
  if (c.replicates < 1) throw ConfigError("replicates must be >= 1");
  if (!(c.burn_in >= 0.0 && c.burn_in < 1.0)) throw ConfigError("burn_in must lie in [0,1)");
  if (!(c.omega >= 0.0)) throw ConfigError("omega must be >= 0");

  // resolves the target section and catches target errors early
  c.target = make_target(j.at("target"), paper_scale, base_dir).spec;

  if (command == "precondition") {
    c.sampler = j.value("sampler", json{{"log10_delta", 0.5}, {"log10_kappa", -1.5}});
    c.preconditioned = j.value("preconditioned", json{{"log10_delta", -0.2},
                                                      {"eps", 0.0},
                                                      {"kappa", 1.0},
                                                      {"metric", "target_scales"}});
    c.equivalence_iters = get_count(j, "equivalence_iters", 10'000);
  } else if (mmpp) {
    c.sampler = j.value("sampler", json{{"delta", 0.2}, {"kappa", 1.0}, {"n_cpt", 3}});
  } else {
    c.sampler = j.value("sampler", json::object());
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    if (!s.is_object() || !s.contains("axis") || !s.contains("grid")) {
      throw ConfigError("sweep needs 'axis' and 'grid'");
    }
    SweepSpec sw;
    sw.axis = s.at("axis").get<std::string>();
    const Vec g = get_vector(s.at("grid"), "sweep.grid");
    sw.grid.assign(g.data(), g.data() + g.size());
    with_axis(c.sampler, sw.axis, sw.grid.front());  // validates the axis name
    c.sweep = std::move(sw);
  } else if (command == "sweep") {
    throw ConfigError("the sweep command needs a 'sweep' section");
  }

  if (j.contains("converge")) {
    const json& cv = j.at("converge");
    if (cv.contains("multipliers")) {
      const Vec m = get_vector(cv.at("multipliers"), "converge.multipliers");
      if ((m.array() <= 0.0).any()) throw ConfigError("converge.multipliers must be positive");
      c.converge.multipliers.assign(m.data(), m.data() + m.size());
    }
    c.converge.cap = get_count(cv, "cap", c.converge.cap);
    c.converge.reference_iters = get_count(cv, "reference_iters", c.converge.reference_iters);
    if (c.converge.cap < 1 || c.converge.reference_iters < 10) {
      throw ConfigError("converge: cap must be >= 1 and reference_iters >= 10");
    }
  }

  // fail on bad sampler settings before any work starts
  const TargetSetup setup = make_target(c.target, paper_scale, base_dir);
  if (c.sweep) {
    for (double v : c.sweep->grid) make_sampler(with_axis(c.sampler, c.sweep->axis, v), setup);
  } else if (mmpp) {
    json check = c.sampler;
    check["gradient"] = "central";
    make_sampler(check, setup);
  } else {
    make_sampler(c.sampler, setup);
  }
  if (command == "precondition") make_sampler(c.preconditioned, setup);
  if (mmpp && !setup.mmpp) throw ConfigError("the mmpp command needs an mmpp target");
  return c;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = cfg.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ReplicateResult run_replicate(const TargetSetup& setup, SamplerConfig sampler, std::size_t n_iters,
                              std::size_t thin, std::size_t burn_in, std::uint64_t seed,
                              bool keep_trace) {
  ReplicateResult r;
  r.seed = seed;
  Rng rng(seed);
  r.x0 = setup.draw_start(rng);
  sampler.seed = rng();
  PhaseState init;
  init.x = r.x0;
  const double t0 = thread_cpu_seconds();
  auto trace = std::make_shared<ChainTrace>(run_chain(init, n_iters, thin, sampler, setup.model));
  r.cpu_seconds = thread_cpu_seconds() - t0;
  r.summary = summarize(*trace, burn_in);
  if (keep_trace) r.trace = std::move(trace);
  return r;
}

std::vector<ReplicateResult> run_replicates(const ExperimentConfig& cfg, const TargetSetup& setup,
                                            std::size_t workers, bool keep_traces) {
  const SamplerConfig sampler = make_sampler(cfg.sampler, setup);
  std::vector<ReplicateResult> out(cfg.replicates);
  parallel_for(cfg.replicates, workers, [&](std::size_t r) {
    out[r] = run_replicate(setup, sampler, cfg.n_iters, cfg.thin, cfg.burn_in_iters(),
                           derive_seed(cfg.seed, r, 0), keep_traces);
    out[r].replicate = r;
  });
  return out;
}

std::vector<ReplicateResult> run_sweep(const ExperimentConfig& cfg, const TargetSetup& setup,
                                       std::size_t workers) {
  if (!cfg.sweep) throw ConfigError("run_sweep: no sweep section");
  const std::size_t n_grid = cfg.sweep->grid.size();
  std::vector<SamplerConfig> samplers;
  for (double v : cfg.sweep->grid) {
    samplers.push_back(make_sampler(with_axis(cfg.sampler, cfg.sweep->axis, v), setup));
  }
  std::vector<ReplicateResult> out(n_grid * cfg.replicates);
  parallel_for(out.size(), workers, [&](std::size_t k) {
    const std::size_t g = k / cfg.replicates;
    const std::size_t r = k % cfg.replicates;
    // the replicate seed ignores g so every grid point sees the same starts
    out[k] = run_replicate(setup, samplers[g], cfg.n_iters, cfg.thin, cfg.burn_in_iters(),
                           derive_seed(cfg.seed, r, 0), false);
    out[k].grid = g;
    out[k].replicate = r;
  });
  return out;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_slope: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_slope: x values are all equal");
  return sxy / sxx;
}

ConvergenceResult run_convergence(const ExperimentConfig& cfg, const TargetSetup& setup,
                                  std::size_t workers) {
  const SamplerConfig sampler = make_sampler(cfg.sampler, setup);
  ConvergenceResult res;

  // reference run: median of log pi and a pool of approximate draws
  const std::size_t ref_iters = cfg.converge.reference_iters;
  const std::size_t ref_burn = static_cast<std::size_t>(cfg.burn_in * static_cast<double>(ref_iters));
  Rng ref_rng(derive_seed(cfg.seed, 0, 0xFFFF));
  SamplerConfig ref_cfg = sampler;
  PhaseState ref_init;
  ref_init.x = setup.draw_start(ref_rng);
  ref_cfg.seed = ref_rng();
  const ChainTrace ref = run_chain(ref_init, ref_iters, cfg.thin, ref_cfg, setup.model);
  res.m_pi = median(std::vector<double>(ref.log_pi.begin() + static_cast<std::ptrdiff_t>(ref_burn),
                                        ref.log_pi.end()));
  const Index first_col = static_cast<Index>((ref_burn + cfg.thin - 1) / cfg.thin);
  const Index pool_size = ref.positions.cols() - first_col;
  if (pool_size < 1) throw ConfigError("converge: reference run too short for its burn-in");

  const std::size_t n_phi = cfg.converge.multipliers.size();
  res.rows.resize(n_phi * cfg.replicates);
  parallel_for(res.rows.size(), workers, [&](std::size_t k) {
    const std::size_t g = k / cfg.replicates;
    const std::size_t r = k % cfg.replicates;
    ConvergenceRow row;
    row.phi = cfg.converge.multipliers[g];
    row.replicate = r;
    row.seed = derive_seed(cfg.seed, r, g);
    Rng rng(row.seed);
    std::uniform_int_distribution<Index> pick(0, pool_size - 1);
    PhaseState init;
    init.x = row.phi * ref.positions.col(first_col + pick(rng));
    SamplerConfig c = sampler;
    c.seed = rng();
    Chain chain(setup.model, c, init);
    std::size_t n = 0;
    while (!(chain.state().log_pi > res.m_pi) && n < cfg.converge.cap) {
      chain.step();
      ++n;
    }
    if (chain.state().log_pi > res.m_pi) row.n_cvg = n;
    res.rows[k] = row;
  });

  std::vector<double> lx;
  std::vector<double> ly;
  for (const auto& row : res.rows) {
    const double n = row.n_cvg ? static_cast<double>(*row.n_cvg) : static_cast<double>(cfg.converge.cap);
    if (!row.n_cvg) res.any_capped = true;
    lx.push_back(std::log10(row.phi));
    ly.push_back(std::log10(std::max(n, 1.0)));
  }
  res.slope = n_phi >= 2 ? fit_slope(lx, ly) : std::numeric_limits<double>::quiet_NaN();
  return res;
}

MmppStudyResult run_mmpp_study(const ExperimentConfig& cfg, const TargetSetup& setup,
                               std::size_t workers) {
  if (!setup.mmpp) throw ConfigError("mmpp study needs an mmpp target");
  MmppStudyResult res;
  res.n_events = setup.mmpp->events.size();
  res.t_end = setup.mmpp->t_end;

  json base = cfg.sampler;
  const int n_cpt = static_cast<int>(get_count(base, "n_cpt", 3));
  base.erase("n_cpt");
  base.erase("gradient");

  const double t0 = thread_cpu_seconds();
  try {
    res.surrogate = fit_gaussian_surrogate(setup.model, Vec::Zero(setup.model.dim));
  } catch (const std::exception& e) {
    res.surrogate_error = e.what();
  }
  res.fit_cpu_seconds = thread_cpu_seconds() - t0;

  struct Variant {
    std::string name;
    json sampler;
  };
  std::vector<Variant> variants;
  json full = base;
  full["gradient"] = "central";
  json part = full;
  part["n_cpt"] = n_cpt;
  json surr = base;
  surr["gradient"] = "surrogate";
  variants.push_back({"full", full});
  variants.push_back({"n_cpt", part});
  variants.push_back({"surrogate", surr});

  auto shared_surrogate =
      res.surrogate ? std::make_shared<const GaussianSurrogate>(*res.surrogate) : nullptr;
  res.variants.resize(variants.size() * cfg.replicates);
  parallel_for(res.variants.size(), workers, [&](std::size_t k) {
    const std::size_t v = k / cfg.replicates;
    const std::size_t r = k % cfg.replicates;
    MmppVariantResult& out = res.variants[k];
    out.name = variants[v].name;
    try {
      SamplerConfig sc = make_sampler(variants[v].sampler, setup);
      if (sc.gradient_mode == GradientMode::surrogate) {
        if (!shared_surrogate) throw std::runtime_error("surrogate fit failed: " + res.surrogate_error);
        sc.surrogate = shared_surrogate;
      }
      const ReplicateResult rr = run_replicate(setup, sc, cfg.n_iters, cfg.thin, cfg.burn_in_iters(),
                                               derive_seed(cfg.seed, r, 0), false);
      out.summary = rr.summary;
      out.cpu_seconds = rr.cpu_seconds;
      const double t = std::max(rr.cpu_seconds, 1e-9);
      for (double e : rr.summary.ess) out.ess_per_cpu_second.push_back(e / t);
      out.ess_lp_per_cpu_second = rr.summary.ess_lp / t;
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
  });
  return res;
}

PreconditionResult run_precondition_demo(const ExperimentConfig& cfg, const TargetSetup& setup,
                                         std::size_t workers) {
  const SamplerConfig plain = make_sampler(cfg.sampler, setup);
  const SamplerConfig pre = make_sampler(cfg.preconditioned, setup);
  if (!pre.metric) throw ConfigError("precondition: the preconditioned sampler needs a metric");
  PreconditionResult res;
  res.plain.resize(cfg.replicates);
  res.preconditioned.resize(cfg.replicates);
  parallel_for(2 * cfg.replicates, workers, [&](std::size_t k) {
    const std::size_t r = k % cfg.replicates;
    const bool is_pre = k >= cfg.replicates;
    ReplicateResult rr = run_replicate(setup, is_pre ? pre : plain, cfg.n_iters, cfg.thin,
                                       cfg.burn_in_iters(), derive_seed(cfg.seed, r, 0), false);
    rr.grid = is_pre ? 1 : 0;
    rr.replicate = r;
    (is_pre ? res.preconditioned : res.plain)[r] = std::move(rr);
  });
  double a = 0.0;
  double b = 0.0;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    a += res.preconditioned[r].summary.ess_min;
    b += res.plain[r].summary.ess_min;
  }
  res.ess_min_ratio = a / b;

  Rng rng(derive_seed(cfg.seed, 0, 1));
  const Vec x0 = setup.draw_start(rng);
  SamplerConfig eq = pre;
  eq.seed = rng();
  res.equivalence_deviation =
      precondition_equivalence_check(setup.model, *pre.metric, eq, cfg.equivalence_iters, x0);
  res.step_deviation =
      precondition_step_deviation(setup.model, *pre.metric, eq, cfg.equivalence_iters, x0);
  return res;
}

}  // namespace dbps
