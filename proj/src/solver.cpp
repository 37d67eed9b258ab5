#include "gmr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gmr/stats.hpp"

namespace gmr {

namespace {

double residual(double x, double A, double B, double gamma) {
  return x - B * std::pow(x, -gamma) - A;
}

}  // namespace

double implicit_step_root(double A, double B, double gamma) {
  if (!(B > 0.0) || !std::isfinite(B)) throw ValidationError("implicit_step_root: B must be > 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("implicit_step_root: gamma must be > 0");
  }
  if (!std::isfinite(A)) throw ValidationError("implicit_step_root: A must be finite");

  const double tol = 1e-12 * std::max(1.0, std::abs(A));
  const double scale = std::pow(B, 1.0 / (gamma + 1.0));
  double hi = std::abs(A) + scale + 1.0;
  double x = std::min(std::max(A, scale), hi);

  double lo = x;
  for (int k = 0; residual(lo, A, B, gamma) >= 0.0; ++k) {
    lo *= 0.5;
    if (k > 2000 || !(lo > 0.0)) {
      throw NumericalError("implicit_step_root: could not bracket the root from below");
    }
  }

  for (int iter = 0; iter < 200; ++iter) {
    const double f = residual(x, A, B, gamma);
    if (std::abs(f) <= tol) return x;
    if (f < 0.0) {
      lo = std::max(lo, x);
    } else {
      hi = std::min(hi, x);
    }
    // Bracket already at the resolution of doubles: nothing left to refine.
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return 0.5 * (lo + hi);

    const double df = 1.0 + B * gamma * std::pow(x, -gamma - 1.0);
    double next = x - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  std::ostringstream msg;
  msg << "implicit_step_root: no convergence in 200 iterations (A=" << A << ", B=" << B
      << ", gamma=" << gamma << ")";
  throw NumericalError(msg.str());
}

EulerSolution implicit_euler(const ModelParams& p, const SamplePath& tilde_w) {
  p.validate();
  if (!(p.a > 0.0)) throw ValidationError("implicit_euler: requires a > 0");
  tilde_w.validate();

  const std::size_t n = tilde_w.size() - 1;
  const double horizon = tilde_w.horizon();
  const double dt = horizon / static_cast<double>(n);
  const double gamma = p.gamma();
  const double drift = p.a * (1.0 - p.beta) * dt;

  EulerSolution sol;
  sol.n = n;
  sol.y_nodes.resize(n + 1);
  sol.y_nodes[0] = y0_from_x0(p.x0, p);
  for (std::size_t k = 0; k < n; ++k) {
    const double A = sol.y_nodes[k] + tilde_w.values[k + 1] - tilde_w.values[k];
    const double B = drift * std::exp(p.b * tilde_w.times[k + 1]);
    sol.y_nodes[k + 1] = implicit_step_root(A, B, gamma);
  }
  sol.y_path.times = tilde_w.times;
  sol.y_path.values = sol.y_nodes;
  sol.x_path = lift_y_to_x(sol.y_path, p);
  return sol;
}

Solution solve_from_tilde_w(const ModelParams& p, const SamplePath& tilde_w) {
  p.validate();
  Solution s;
  if (p.a > 0.0) {
    EulerSolution e = implicit_euler(p, tilde_w);
    s.x.path = std::move(e.x_path);
    s.y_nodes = std::move(e.y_nodes);
    return s;
  }
  s.x = explicit_solution_from_tilde_w(tilde_w, p);
  const double y0 = y0_from_x0(p.x0, p);
  const std::size_t end = s.x.hit_index.value_or(tilde_w.size());
  s.y_nodes.reserve(end);
  for (std::size_t k = 0; k < end; ++k) s.y_nodes.push_back(y0 + tilde_w.values[k]);
  return s;
}

TruncatedPath solve_gmr(const ModelParams& p, const SamplePath& driver, std::size_t n) {
  p.validate();
  driver.validate();
  if (n < 1) throw ValidationError("solve_gmr: n must be >= 1");
  const std::size_t steps = driver.size() - 1;
  if (steps % n != 0) {
    throw ValidationError("solve_gmr: n must divide the driver's step count");
  }
  const SamplePath tw = subsample(tilde_w_path(driver, p), steps / n);
  return solve_from_tilde_w(p, tw).x;
}

double deterministic_ode_solution(const ModelParams& p, double t) {
  if (p.b == 0.0) return p.x0 + p.a * t;
  const double level = p.a / p.b;
  return level + (p.x0 - level) * std::exp(-p.b * t);
}

double euler_y_bound(const ModelParams& p, double driver_sup, double horizon) {
  const double y0 = y0_from_x0(p.x0, p);
  const double one_minus = 1.0 - p.beta;
  return y0 + p.a * one_minus * std::exp(p.b * horizon) * std::pow(y0, -p.gamma()) * horizon +
         p.sigma * std::max(p.b, 2.0) * one_minus * (1.0 + horizon) *
             std::exp(p.b * one_minus * horizon) * driver_sup;
}

double sup_bound(const ModelParams& p, double driver_sup, double horizon) {
  // y0^(-gamma) = x0^(-beta), so this is the x-level bound verbatim.
  return std::pow(euler_y_bound(p, driver_sup, horizon), p.gamma() + 1.0);
}

double fitted_rate(std::span<const std::size_t> n_list, std::span<const double> errors) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    lx.push_back(std::log(static_cast<double>(n_list[i])));
    ly.push_back(std::log(errors[i]));
  }
  return -least_squares_slope(lx, ly);
}

namespace {

void check_n_list(std::span<const std::size_t> n_list) {
  if (n_list.size() < 2) throw ValidationError("convergence: need at least two step counts");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] < 1) throw ValidationError("convergence: step counts must be >= 1");
    if (i > 0 && n_list[i] <= n_list[i - 1]) {
      throw ValidationError("convergence: n_list must be strictly increasing");
    }
  }
}

}  // namespace

RateReport convergence_study(const ModelParams& p, const SamplePath& driver,
                             std::span<const std::size_t> n_list, std::size_t ref_n,
                             double alpha) {
  p.validate();
  driver.validate();
  check_n_list(n_list);
  if (!(p.a > 0.0)) throw ValidationError("convergence: the scheme needs a > 0");
  const std::size_t steps = driver.size() - 1;
  if (ref_n < 8 * n_list.back()) {
    throw ValidationError("convergence: ref_n must be at least 8 * max(n_list)");
  }
  if (steps % ref_n != 0) {
    throw ValidationError("convergence: ref_n must divide the driver's step count");
  }
  for (std::size_t n : n_list) {
    if (ref_n % n != 0) throw ValidationError("convergence: grids are not nested");
  }

  const SamplePath tw = tilde_w_path(driver, p);
  const EulerSolution ref = implicit_euler(p, subsample(tw, steps / ref_n));

  RateReport report;
  report.n_list.assign(n_list.begin(), n_list.end());
  report.theoretical_rate = alpha * p.mu();
  for (std::size_t n : n_list) {
    const EulerSolution coarse = implicit_euler(p, subsample(tw, steps / n));
    const std::size_t stride = ref_n / n;
    double err = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      err = std::max(err, std::abs(coarse.x_path.values[k] - ref.x_path.values[k * stride]));
    }
    report.errors.push_back(err);
  }
  report.fitted_slope = fitted_rate(report.n_list, report.errors);
  return report;
}

RateReport convergence_against_ode(const ModelParams& p, double horizon,
                                   std::span<const std::size_t> n_list) {
  p.validate();
  check_n_list(n_list);
  ModelParams quiet = p;
  quiet.sigma = 0.0;

  RateReport report;
  report.n_list.assign(n_list.begin(), n_list.end());
  report.theoretical_rate = 1.0;
  for (std::size_t n : n_list) {
    SamplePath zero{uniform_grid(horizon, n), std::vector<double>(n + 1, 0.0)};
    const TruncatedPath x = solve_from_tilde_w(quiet, zero).x;
    double err = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      err = std::max(err, std::abs(x.path.values[k] -
                                   deterministic_ode_solution(quiet, x.path.times[k])));
    }
    report.errors.push_back(err);
  }
  report.fitted_slope = fitted_rate(report.n_list, report.errors);
  return report;
}

}  // namespace gmr
