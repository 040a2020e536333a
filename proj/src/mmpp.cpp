#include "dbps/mmpp.hpp"

#include <Eigen/LU>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dbps {

Mat matexp(const Mat& a) {
  if (a.rows() != a.cols()) throw DimensionError("matexp: matrix must be square");
  if (!a.allFinite()) throw std::invalid_argument("matexp: non-finite entries");
  return a.exp();
}

void MmppModel::validate() const {
  if (k < 1) throw std::invalid_argument("mmpp: k must be >= 1");
  for (const auto& [i, j] : free_rates) {
    if (i < 0 || j < 0 || i >= k || j >= k || i == j) {
      throw std::invalid_argument("mmpp: free rate index out of range or on the diagonal");
    }
  }
  if (!(t_end > 0.0)) throw std::invalid_argument("mmpp: t_end must be positive");
  if (!(prior_sd > 0.0)) throw std::invalid_argument("mmpp: prior_sd must be positive");
  double prev = -std::numeric_limits<double>::infinity();
  for (double t : events) {
    if (!(t > prev) || t < 0.0 || t > t_end) {
      throw std::invalid_argument("mmpp: events must be strictly increasing within [0, t_end]");
    }
    prev = t;
  }
}

Mat make_generator(int k, const std::vector<std::pair<int, int>>& free_rates,
                   const std::vector<double>& values) {
  if (values.size() != free_rates.size()) {
    throw DimensionError("make_generator: one value per free rate required");
  }
  Mat q = Mat::Zero(k, k);
  for (std::size_t r = 0; r < free_rates.size(); ++r) {
    q(free_rates[r].first, free_rates[r].second) = values[r];
  }
  for (int i = 0; i < k; ++i) q(i, i) = -(q.row(i).sum() - q(i, i));
  return q;
}

MmppRates rates_from_theta(const MmppModel& model, const Vec& theta) {
  require_same_size(theta.size(), model.dim(), "mmpp theta");
  MmppRates r;
  r.lambda = theta.head(model.k).array().exp().matrix();
  std::vector<double> q_values(model.free_rates.size());
  for (std::size_t i = 0; i < q_values.size(); ++i) {
    q_values[i] = std::exp(theta[model.k + static_cast<Index>(i)]);
  }
  r.q = make_generator(model.k, model.free_rates, q_values);
  return r;
}

Vec theta_from_rates(const MmppModel& model, const MmppRates& rates) {
  Vec theta(model.dim());
  theta.head(model.k) = rates.lambda.array().log().matrix();
  for (std::size_t i = 0; i < model.free_rates.size(); ++i) {
    const auto [a, b] = model.free_rates[i];
    theta[model.k + static_cast<Index>(i)] = std::log(rates.q(a, b));
  }
  return theta;
}

std::vector<std::pair<int, int>> cyclic_pattern(int k) {
  std::vector<std::pair<int, int>> p;
  if (k < 2) return p;
  for (int i = 0; i < k; ++i) p.emplace_back(i, (i + 1) % k);
  return p;
}

MmppRates reference_mmpp_rates() {
  MmppRates r;
  r.q = make_generator(4, cyclic_pattern(4), {2.0, 1.0, 0.5, 0.5});
  r.lambda = Vec(4);
  r.lambda << 15.0, 5.0, 1.0, 10.0;
  return r;
}

double mmpp_log_likelihood(const MmppRates& rates, const std::vector<double>& events,
                           double t_end) {
  const Index k = rates.lambda.size();
  const Mat generator = rates.q - Mat(rates.lambda.asDiagonal());
  Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(k);
  p[0] = 1.0;
  double log_scale = 0.0;
  auto renormalize = [&]() {
    const double s = p.sum();  // entries are non-negative, so this is the 1-norm
    if (!(s > 0.0) || !std::isfinite(s)) return false;
    p /= s;
    log_scale += std::log(s);
    return true;
  };
  double t_prev = 0.0;
  for (double t : events) {
    p = p * matexp(generator * (t - t_prev));
    if (!renormalize()) return -std::numeric_limits<double>::infinity();
    p = p.cwiseProduct(rates.lambda.transpose());
    if (!renormalize()) return -std::numeric_limits<double>::infinity();
    t_prev = t;
  }
  p = p * matexp(generator * (t_end - t_prev));
  if (!renormalize()) return -std::numeric_limits<double>::infinity();
  return log_scale;
}

double mmpp_log_likelihood(const MmppModel& model, const Vec& theta) {
  if (!theta.allFinite()) throw std::invalid_argument("mmpp: theta must be finite");
  return mmpp_log_likelihood(rates_from_theta(model, theta), model.events, model.t_end);
}

double mmpp_log_posterior(const MmppModel& model, const Vec& theta) {
  const double s2 = model.prior_sd * model.prior_sd;
  return mmpp_log_likelihood(model, theta) - theta.squaredNorm() / (2.0 * s2);
}

TargetModel mmpp_target(const MmppModel& model) {
  model.validate();
  TargetModel t;
  t.name = "mmpp";
  t.dim = model.dim();
  t.log_density = [model](const Vec& theta) { return mmpp_log_posterior(model, theta); };
  return t;
}

std::vector<double> simulate_mmpp(const MmppRates& rates, double t_end, Rng& rng) {
  const Index k = rates.lambda.size();
  if (rates.q.rows() != k || rates.q.cols() != k) {
    throw DimensionError("simulate_mmpp: generator and rate sizes differ");
  }
  if (!(t_end > 0.0)) throw std::invalid_argument("simulate_mmpp: t_end must be positive");
  std::vector<double> events;
  std::exponential_distribution<double> unit_exp(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Index state = 0;
  double t = 0.0;
  while (t < t_end) {
    const double leave = -rates.q(state, state);
    const double sojourn = leave > 0.0 ? unit_exp(rng) / leave
                                       : std::numeric_limits<double>::infinity();
    const double stop = std::min(t + sojourn, t_end);
    const double rate = rates.lambda[state];
    if (rate > 0.0) {
      double s = t + unit_exp(rng) / rate;
      while (s < stop) {
        events.push_back(s);
        s += unit_exp(rng) / rate;
      }
    }
    t = stop;
    if (t >= t_end) break;
    double target = unif(rng) * leave;
    Index next = state;
    for (Index j = 0; j < k; ++j) {
      if (j == state) continue;
      target -= rates.q(state, j);
      next = j;
      if (target < 0.0) break;
    }
    state = next;
  }
  return events;
}

Vec stationary_distribution(const Mat& q) {
  const Index k = q.rows();
  // replace one balance equation by the normalization constraint
  Mat a = q.transpose();
  a.row(k - 1).setOnes();
  Vec rhs = Vec::Zero(k);
  rhs[k - 1] = 1.0;
  return a.fullPivLu().solve(rhs);
}

MmppData parse_mmpp_data(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  MmppData data;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!have_header) {
      const std::string key = "t_end=";
      if (line.rfind(key, 0) != 0) {
        throw std::invalid_argument("mmpp data: first line must be 't_end=<seconds>'");
      }
      data.t_end = std::stod(line.substr(key.size()));
      if (!(data.t_end > 0.0)) throw std::invalid_argument("mmpp data: t_end must be positive");
      have_header = true;
      continue;
    }
    std::size_t used = 0;
    const double t = std::stod(line, &used);
    if (line.find_first_not_of(" \t", used) != std::string::npos) {
      throw std::invalid_argument("mmpp data: trailing characters on line " +
                                  std::to_string(line_no));
    }
    if (t < 0.0 || t > data.t_end) {
      throw std::invalid_argument("mmpp data: event time out of range on line " +
                                  std::to_string(line_no));
    }
    if (!data.events.empty() && !(t > data.events.back())) {
      throw std::invalid_argument("mmpp data: event times not strictly increasing on line " +
                                  std::to_string(line_no));
    }
    data.events.push_back(t);
  }
  if (!have_header) throw std::invalid_argument("mmpp data: missing 't_end=' header");
  return data;
}

MmppData read_mmpp_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open MMPP data file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_mmpp_data(buf.str());
}

void write_mmpp_data(const std::filesystem::path& path, const MmppData& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write MMPP data file " + path.string());
  out << std::setprecision(17) << "t_end=" << data.t_end << '\n';
  for (double t : data.events) out << t << '\n';
}

}  // namespace dbps
