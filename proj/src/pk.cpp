#include "gmr/pk.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "gmr/nelder_mead.hpp"
#include "gmr/parallel.hpp"
#include "gmr/stats.hpp"

namespace gmr::pk {

ModelParams PkParams::model() const {
  ModelParams p;
  p.x0 = initial_concentration();
  p.a = 0.0;
  p.b = elimination;
  p.sigma = sigma;
  p.beta = beta;
  return p;
}

void PkParams::validate() const {
  if (!(dose > 0.0)) throw ValidationError("pk: dose A0 must be > 0");
  if (!(volume > 0.0)) throw ValidationError("pk: volume v must be > 0");
  if (!(absorption >= 0.0)) throw ValidationError("pk: absorption Ka must be >= 0");
  if (!(elimination > 0.0)) throw ValidationError("pk: elimination Ke must be > 0");
  if (!(sigma >= 0.0)) throw ValidationError("pk: sigma must be >= 0");
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("pk: beta must lie in (0, 1)");
}

double deterministic_concentration(const PkParams& pk, double t) {
  const double c0 = pk.initial_concentration();
  const double ka = pk.absorption;
  const double ke = pk.elimination;
  if (ka == 0.0) return c0 * std::exp(-ke * t);
  if (std::abs(ka - ke) <= 1e-12 * ke) return c0 * ka * t * std::exp(-ke * t);
  return c0 * ka / (ke - ka) * (std::exp(-ka * t) - std::exp(-ke * t));
}

TruncatedPath simulate_concentration(const PkParams& pk, const CovarianceKernel& kernel,
                                     double horizon, std::size_t steps, std::uint64_t seed,
                                     std::uint64_t index) {
  pk.validate();
  const ModelParams p = pk.model();
  const std::vector<double> grid = uniform_grid(horizon, steps);
  if (pk.sigma == 0.0) {
    return explicit_solution_a0(SamplePath{grid, std::vector<double>(grid.size(), 0.0)}, p);
  }
  const GaussianSampler sampler(kernel, grid);
  return explicit_solution_a0(sampler.sample(seed, index), p);
}

double z_mean(double t, const PkParams& pk) {
  return std::pow(pk.initial_concentration(), 1.0 - pk.beta) *
         std::exp(-pk.elimination * (1.0 - pk.beta) * t);
}

void ConcentrationSeries::validate() const {
  if (times.size() != concentrations.size()) {
    throw ValidationError("observations: times and concentrations differ in length");
  }
  if (times.empty()) throw ValidationError("observations: empty series");
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  if (!(sorted.front() > 0.0)) throw ValidationError("observations: times must be > 0");
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (!(sorted[i] > sorted[i - 1])) throw ValidationError("observations: duplicate time");
  }
  for (double c : concentrations) {
    if (!std::isfinite(c)) throw ValidationError("observations: non-finite concentration");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

double parse_cell(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("observations: bad number '" + s + "' on line " +
                        std::to_string(line_no));
}

}  // namespace

ConcentrationSeries read_concentration_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("observations: empty file");
  const auto header = split_csv_line(line);
  auto column = [&](const char* name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto tcol = column("t");
  // `stochastic` is the column name written by the simulation front-end.
  auto ccol = column("concentration");
  if (!ccol) ccol = column("stochastic");
  if (!tcol || !ccol) {
    throw ValidationError("observations: header needs `t` and `concentration` columns");
  }

  ConcentrationSeries s;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() <= std::max(*tcol, *ccol)) {
      throw ValidationError("observations: short row on line " + std::to_string(line_no));
    }
    const double t = parse_cell(cells[*tcol], line_no);
    // The t = 0 value is the known initial concentration, not an observation.
    if (t == 0.0) continue;
    s.times.push_back(t);
    s.concentrations.push_back(parse_cell(cells[*ccol], line_no));
  }
  s.validate();
  return s;
}

namespace {

/// Lower Cholesky factor with the same jitter escalation as the path sampler.
Eigen::MatrixXd factor_with_jitter(const Eigen::MatrixXd& m) {
  const double max_diag = m.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) throw NumericalError("likelihood: Gamma has no positive variance");
  for (double rel : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8}) {
    Eigen::MatrixXd a = m;
    if (rel > 0.0) a.diagonal().array() += rel * max_diag;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("likelihood: Gamma is not positive definite after jitter");
}

/// Sorted union of the uniform quadrature nodes and `extra`; nodes closer than
/// 1e-9 * horizon to an extra time are replaced by it.
std::vector<double> quadrature_grid(std::span<const double> extra, std::size_t quad_steps) {
  const double horizon = *std::max_element(extra.begin(), extra.end());
  std::vector<double> grid = uniform_grid(horizon, std::max<std::size_t>(quad_steps, 1));
  const double tol = 1e-9 * std::max(1.0, horizon);
  for (double t : extra) {
    auto it = std::lower_bound(grid.begin(), grid.end(), t - tol);
    if (it != grid.end() && std::abs(*it - t) <= tol) {
      *it = t;
    } else {
      grid.insert(it, t);
    }
  }
  return grid;
}

std::vector<std::size_t> indices_of(std::span<const double> grid, std::span<const double> times) {
  std::vector<std::size_t> idx;
  for (double t : times) idx.push_back(require_time(grid, t, "likelihood"));
  return idx;
}

Eigen::MatrixXd damped_covariance(const ModelParams& p, std::span<const double> grid,
                                  const Eigen::MatrixXd& kernel_matrix,
                                  std::span<const std::size_t> idx) {
  const TildeWOperator op(p, std::vector<double>(grid.begin(), grid.end()));
  Eigen::MatrixXd g = tilde_w_covariance_matrix(op, kernel_matrix, idx);
  const double rate = p.b * (1.0 - p.beta);
  const auto n = g.rows();
  Eigen::VectorXd damp(n);
  for (Eigen::Index i = 0; i < n; ++i) damp[i] = std::exp(-rate * grid[idx[static_cast<std::size_t>(i)]]);
  Eigen::MatrixXd out = damp.asDiagonal() * g * damp.asDiagonal();
  // Mirror the upper triangle so downstream code sees an exactly symmetric matrix.
  out.triangularView<Eigen::StrictlyLower>() = out.transpose();
  return out;
}

}  // namespace

Eigen::MatrixXd gamma_matrix(const PkParams& pk, std::span<const double> times,
                             const CovarianceKernel& kernel, std::size_t quad_steps) {
  pk.validate();
  if (times.empty()) throw ValidationError("gamma_matrix: no observation times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0) || (i > 0 && !(times[i] > times[i - 1]))) {
      throw ValidationError("gamma_matrix: times must be positive and increasing");
    }
  }
  const std::vector<double> grid = quadrature_grid(times, quad_steps);
  return damped_covariance(pk.model(), grid, kernel.matrix(grid), indices_of(grid, times));
}

LikelihoodModel::LikelihoodModel(ConcentrationSeries obs, CovarianceKernel kernel, double dose,
                                 double volume, std::size_t quad_steps)
    : kernel_(std::move(kernel)), dose_(dose), volume_(volume) {
  obs.validate();
  if (!(dose > 0.0) || !(volume > 0.0)) {
    throw ValidationError("likelihood: dose and volume must be > 0");
  }
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return obs.times[a] < obs.times[b]; });
  for (std::size_t i : order) {
    obs_.times.push_back(obs.times[i]);
    obs_.concentrations.push_back(obs.concentrations[i]);
  }
  grid_ = quadrature_grid(obs_.times, quad_steps);
  obs_index_ = indices_of(grid_, obs_.times);
  kernel_matrix_ = kernel_.matrix(grid_);
}

PkParams LikelihoodModel::params_for(const Theta& theta) const {
  if (!(theta.elimination > 0.0) || !(theta.sigma > 0.0) ||
      !(theta.beta > 0.0 && theta.beta < 1.0)) {
    throw ValidationError("likelihood: theta needs Ke > 0, sigma > 0, beta in (0, 1)");
  }
  PkParams pk;
  pk.dose = dose_;
  pk.volume = volume_;
  pk.elimination = theta.elimination;
  pk.sigma = theta.sigma;
  pk.beta = theta.beta;
  return pk;
}

Eigen::MatrixXd LikelihoodModel::gamma(const Theta& theta) const {
  return damped_covariance(params_for(theta).model(), grid_, kernel_matrix_, obs_index_);
}

double LikelihoodModel::log_likelihood(const Theta& theta) const {
  const PkParams pk = params_for(theta);
  for (double x : obs_.concentrations) {
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  }
  const std::size_t n = obs_.size();
  const Eigen::MatrixXd chol = factor_with_jitter(gamma(theta));

  Eigen::VectorXd u(static_cast<Eigen::Index>(n));
  double log_x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = obs_.concentrations[i];
    u[static_cast<Eigen::Index>(i)] = std::pow(x, 1.0 - pk.beta) - z_mean(obs_.times[i], pk);
    log_x += std::log(x);
  }
  const Eigen::VectorXd white = chol.triangularView<Eigen::Lower>().solve(u);
  const double half_logdet = chol.diagonal().array().log().sum();
  const double dn = static_cast<double>(n);
  return dn * std::log(2.0 * (1.0 - pk.beta)) - 0.5 * dn * std::log(2.0 * std::numbers::pi) -
         half_logdet - 0.5 * white.squaredNorm() - pk.beta * log_x;
}

double log_likelihood(const Theta& theta, const ConcentrationSeries& obs,
                      const CovarianceKernel& kernel, double dose, double volume,
                      std::size_t quad_steps) {
  return LikelihoodModel(obs, kernel, dose, volume, quad_steps).log_likelihood(theta);
}

ThetaEstimate fit_mle(const LikelihoodModel& model, const Theta& init, const FitBounds& bounds) {
  if (!(bounds.beta_min > 0.0 && bounds.beta_min < bounds.beta_max && bounds.beta_max < 1.0)) {
    throw ValidationError("fit: need 0 < beta_min < beta_max < 1");
  }
  if (!(init.elimination > 0.0 && init.elimination <= bounds.elimination_max) ||
      !(init.sigma > 0.0 && init.sigma <= bounds.sigma_max) ||
      !(init.beta >= bounds.beta_min && init.beta <= bounds.beta_max)) {
    throw ValidationError("fit: initial theta outside the bounds");
  }

  const double span = bounds.beta_max - bounds.beta_min;
  auto to_theta = [&](const std::vector<double>& u) {
    Theta th;
    th.elimination = std::exp(u[0]);
    th.sigma = std::exp(u[1]);
    th.beta = bounds.beta_min + span / (1.0 + std::exp(-u[2]));
    return th;
  };
  const double frac = std::clamp((init.beta - bounds.beta_min) / span, 1e-9, 1.0 - 1e-9);
  const std::vector<double> start{std::log(init.elimination), std::log(init.sigma),
                                  std::log(frac / (1.0 - frac))};

  const double inf = std::numeric_limits<double>::infinity();
  auto objective = [&](const std::vector<double>& u) {
    const Theta th = to_theta(u);
    if (th.elimination > bounds.elimination_max || th.sigma > bounds.sigma_max) return inf;
    try {
      return -model.log_likelihood(th);
    } catch (const NumericalError&) {
      return inf;
    }
  };
  // The start point is evaluated exactly as given so the ascent guarantee
  // holds against log_likelihood(init) rather than its round-tripped image.
  const double init_value = objective(start);
  NelderMeadOptions opt;
  opt.initial_step = 0.2;
  const NelderMeadResult r = nelder_mead_minimize(objective, start, opt);
  if (!(r.value < inf)) throw NumericalError("fit: no admissible parameters");

  ThetaEstimate est;
  est.converged = r.converged;
  est.iterations = r.iterations;
  if (r.value < init_value || !(init_value < inf)) {
    est.theta = to_theta(r.x);
    est.log_likelihood = -r.value;
  } else {
    est.theta = init;
    est.log_likelihood = model.log_likelihood(init);
  }
  return est;
}

namespace {

struct TauValue {
  double concentration = 0.0;  // C_tau
  double y = 0.0;              // x^(1-beta) + w~_tau, 0 when stopped
  double tau = 0.0;
  bool capped = false;
};

TauValue evaluate_at_tau(const PkParams& pk, double x, std::span<const double> tw,
                         std::span<const double> grid, TauKind kind, std::size_t tau_idx) {
  const double y0 = std::pow(x, 1.0 - pk.beta);
  const std::size_t last = kind == TauKind::fixed_time ? tau_idx : grid.size() - 1;
  TauValue v;
  for (std::size_t k = 0; k <= last; ++k) {
    if (!(y0 + tw[k] > 0.0)) {
      v.tau = grid[k];
      v.capped = true;
      return v;
    }
  }
  v.tau = grid[last];
  v.y = y0 + tw[last];
  v.concentration = std::pow(v.y, pk.beta / (1.0 - pk.beta) + 1.0) * std::exp(-pk.elimination * v.tau);
  return v;
}

struct SensitivitySetup {
  ModelParams model;
  std::vector<double> grid;
  std::size_t tau_idx = 0;
  std::optional<GaussianSampler> sampler;
};

SensitivitySetup prepare(const PkParams& pk, double x, const SensitivitySpec& spec,
                         const CovarianceKernel& kernel) {
  pk.validate();
  if (!(x > 0.0)) throw ValidationError("sensitivity: x must be > 0");
  if (!spec.F || !spec.Fdot) throw ValidationError("sensitivity: F and Fdot are required");
  if (spec.paths < 2) throw ValidationError("sensitivity: need at least two paths");
  SensitivitySetup s;
  s.model = pk.model();
  s.grid = uniform_grid(spec.horizon, spec.steps);
  s.tau_idx = spec.tau_kind == TauKind::fixed_time
                  ? require_time(s.grid, spec.tau_time, "sensitivity tau")
                  : s.grid.size() - 1;
  if (pk.sigma > 0.0) s.sampler.emplace(kernel, s.grid);
  return s;
}

std::vector<double> tilde_w_for(const SensitivitySetup& s, std::uint64_t seed, std::size_t i) {
  if (!s.sampler) return std::vector<double>(s.grid.size(), 0.0);
  return TildeWOperator(s.model, s.grid).apply(s.sampler->sample(seed, i).values);
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("sensitivity: ") + what + " is not finite on the simulated range");
  }
}

SensitivityReport summarize(const std::vector<double>& terms, std::size_t capped) {
  SensitivityReport r;
  r.paths = terms.size();
  r.estimate = mean(terms);
  r.std_error = std::sqrt(sample_variance(terms) / static_cast<double>(terms.size()));
  r.capped_fraction = static_cast<double>(capped) / static_cast<double>(terms.size());
  return r;
}

}  // namespace

SensitivityReport sensitivity_plsin(const PkParams& pk, double x, const SensitivitySpec& spec,
                                    const CovarianceKernel& kernel) {
  const SensitivitySetup s = prepare(pk, x, spec, kernel);
  const double gamma = pk.beta / (1.0 - pk.beta);
  const double x_pow = std::pow(x, -pk.beta);
  std::vector<double> terms(spec.paths);
  std::vector<char> capped(spec.paths, 0);
  parallel_for(spec.paths, spec.threads, [&](std::size_t i) {
    const std::vector<double> tw = tilde_w_for(s, spec.seed, i);
    const TauValue v = evaluate_at_tau(pk, x, tw, s.grid, spec.tau_kind, s.tau_idx);
    capped[i] = v.capped ? 1 : 0;
    if (v.capped) {
      terms[i] = 0.0;
      return;
    }
    const double fdot = spec.Fdot(v.concentration);
    check_finite(fdot, "Fdot");
    terms[i] = x_pow * std::exp(-pk.elimination * v.tau) * fdot * std::pow(v.y, gamma);
  });
  return summarize(terms, static_cast<std::size_t>(std::count(capped.begin(), capped.end(), 1)));
}

SensitivityReport sensitivity_fd(const PkParams& pk, double x, const SensitivitySpec& spec,
                                 const CovarianceKernel& kernel, double h) {
  if (!(h > 0.0) || !(h < x)) throw ValidationError("sensitivity_fd: need 0 < h < x");
  const SensitivitySetup s = prepare(pk, x, spec, kernel);
  const std::uint64_t down_seed = spec.common_random_numbers ? spec.seed : spec.seed ^ 0x5bd1e995ull;
  std::vector<double> terms(spec.paths);
  std::vector<char> capped(spec.paths, 0);
  parallel_for(spec.paths, spec.threads, [&](std::size_t i) {
    const std::vector<double> tw_up = tilde_w_for(s, spec.seed, i);
    const std::vector<double> tw_down =
        spec.common_random_numbers ? tw_up : tilde_w_for(s, down_seed, i);
    const TauValue up = evaluate_at_tau(pk, x + h, tw_up, s.grid, spec.tau_kind, s.tau_idx);
    const TauValue down = evaluate_at_tau(pk, x - h, tw_down, s.grid, spec.tau_kind, s.tau_idx);
    const double f_up = spec.F(up.concentration);
    const double f_down = spec.F(down.concentration);
    check_finite(f_up, "F");
    check_finite(f_down, "F");
    terms[i] = (f_up - f_down) / (2.0 * h);
    capped[i] = (up.capped || down.capped) ? 1 : 0;
  });
  return summarize(terms, static_cast<std::size_t>(std::count(capped.begin(), capped.end(), 1)));
}

}  // namespace gmr::pk
