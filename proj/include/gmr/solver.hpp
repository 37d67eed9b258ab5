#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gmr/sample_path.hpp"
#include "gmr/transform.hpp"

namespace gmr {

/// Unique positive root of x - B x^(-gamma) - A = 0.
///
/// The left-hand side is strictly increasing on (0, inf) and runs from -inf
/// to +inf, so the root exists for every real A once B > 0. Newton steps are
/// taken from max(A, B^(1/(gamma+1))) and replaced by bisection whenever they
/// leave the current bracket. Converges to |f| <= 1e-12 max(1, |A|).
/// Throws ValidationError for B <= 0 or gamma <= 0, NumericalError if 200
/// iterations do not reach the tolerance.
double implicit_step_root(double A, double B, double gamma);

struct EulerSolution {
  std::size_t n = 0;
  std::vector<double> y_nodes;  ///< n + 1 values, all > 0
  SamplePath y_path;            ///< linear interpolant on t_k = kT/n
  SamplePath x_path;            ///< y_path lifted to x
};

/// Implicit Euler scheme for y_t = y0 + a(1-beta) int_0^t y^(-gamma) e^(bs) ds + w~_t
/// on the uniform grid of `tilde_w`. Requires a > 0.
EulerSolution implicit_euler(const ModelParams& p, const SamplePath& tilde_w);

/// Transformed and original paths of one solve.
struct Solution {
  TruncatedPath x;
  /// y values on the grid; for a = 0 this is x0^(1-beta) + w~ up to the hit.
  std::vector<double> y_nodes;
};

/// x on the uniform n-step grid from a w~ path on that grid: the implicit
/// scheme when a > 0, the closed form (with zero-hit truncation) when a = 0.
Solution solve_from_tilde_w(const ModelParams& p, const SamplePath& tilde_w);

/// Driver -> w~ -> scheme -> x. The driver's grid must be uniform with a
/// step count divisible by n; w~ is integrated on the driver grid and then
/// read at the n-step nodes.
TruncatedPath solve_gmr(const ModelParams& p, const SamplePath& driver, std::size_t n);

/// sigma = 0 solution: a/b + (x0 - a/b) e^(-bt), or x0 + a t when b = 0.
double deterministic_ode_solution(const ModelParams& p, double t);

/// Pathwise bound on sup |x| over [0, T] given sup |w| over the same interval:
/// [x0^(1-b) + a(1-b) e^(bT) x0^(-b) T + sigma (b v 2)(1-b)(1+T) e^(b(1-b)T) |w|]^(gamma+1)
/// (b in the exponents standing for beta).
double sup_bound(const ModelParams& p, double driver_sup, double horizon);

/// Bound on max_k y_k of the implicit scheme, uniform in n; sup_bound is this
/// quantity raised to gamma + 1.
double euler_y_bound(const ModelParams& p, double driver_sup, double horizon);

struct RateReport {
  std::vector<std::size_t> n_list;
  std::vector<double> errors;
  double fitted_slope = 0.0;
  double theoretical_rate = 0.0;
};

/// Self-convergence of the scheme on one driver path. w~ is integrated once
/// on the driver grid; every n in n_list and ref_n must divide the driver's
/// step count, each n must divide ref_n and ref_n >= 8 max(n_list).
/// errors[i] = max over the n_i-grid of |x^(n_i) - x^(ref_n)|;
/// theoretical_rate = alpha * min(1, gamma).
RateReport convergence_study(const ModelParams& p, const SamplePath& driver,
                             std::span<const std::size_t> n_list, std::size_t ref_n,
                             double alpha);

/// sigma = 0 study against deterministic_ode_solution; theoretical_rate = 1.
RateReport convergence_against_ode(const ModelParams& p, double horizon,
                                   std::span<const std::size_t> n_list);

/// Negated least-squares slope of log(error) against log(n).
double fitted_rate(std::span<const std::size_t> n_list, std::span<const double> errors);

}  // namespace gmr
