#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmr/driver.hpp"
#include "gmr/sample_path.hpp"

namespace gmr {

/// Coefficients of dX = (a - bX) dt + sigma X^beta dW.
struct ModelParams {
  double x0 = 1.0;
  double a = 0.0;
  double b = 0.0;
  double sigma = 0.0;
  double beta = 0.5;

  /// beta / (1 - beta)
  double gamma() const { return beta / (1.0 - beta); }
  /// min(1, gamma), the exponent multiplying alpha in the scheme's rate.
  double mu() const { return gamma() < 1.0 ? gamma() : 1.0; }
  /// Well-posedness needs beta > 1 - alpha for alpha-Hoelder drivers.
  bool beta_admissible(double alpha) const { return beta > 1.0 - alpha; }

  /// x0 > 0, a, b, sigma >= 0 and finite, beta in (0, 1).
  void validate() const;
};

/// Path on a grid that may be stopped at the first zero of the transformed
/// process. Values are > 0 before hit_index and exactly 0 from it on.
struct TruncatedPath {
  SamplePath path;
  std::optional<std::size_t> hit_index;

  std::optional<double> hit_time() const {
    if (!hit_index) return std::nullopt;
    return path.times[*hit_index];
  }
};

/// sigma (1 - beta) exp(b (1 - beta) t)
double theta_weight(double t, const ModelParams& p);
/// Time derivative of theta_weight.
double theta_weight_derivative(double t, const ModelParams& p);

/// Linear map taking driver values on a grid to the weighted integral
///   w~_t = theta_t w_t - int_0^t theta'_s w_s ds,
/// with the remainder integrated by the trapezoid rule. Row i holds the
/// weights of w~ at times[i]; row i is supported on columns 0..i.
class TildeWOperator {
 public:
  TildeWOperator(const ModelParams& p, std::vector<double> times);

  double apply_row(std::size_t i, std::span<const double> w) const;
  std::vector<double> apply(std::span<const double> w) const;
  /// Rows for the requested grid indices, as a dense (rows x grid) matrix.
  Eigen::MatrixXd rows(std::span<const std::size_t> indices) const;

  const std::vector<double>& times() const { return times_; }

 private:
  std::vector<double> times_;
  std::vector<double> theta_;
  std::vector<double> dtheta_;
};

/// w~ on the driver's grid. Requires driver.values[0] == 0.
SamplePath tilde_w_path(const SamplePath& driver, const ModelParams& p);

/// Cov(w~_s, w~_t) when the driver has covariance `kernel`, computed through
/// the same quadrature as tilde_w_path. s and t must be nodes of `grid`.
double tilde_w_covariance(double s, double t, const ModelParams& p,
                          const CovarianceKernel& kernel, std::span<const double> grid);

/// Covariance matrix of w~ at the grid nodes `indices`. `kernel_matrix` is the
/// driver covariance on `op.times()`.
Eigen::MatrixXd tilde_w_covariance_matrix(const TildeWOperator& op,
                                          const Eigen::MatrixXd& kernel_matrix,
                                          std::span<const std::size_t> indices);

/// x0^(1 - beta). Throws ValidationError for x0 <= 0.
double y0_from_x0(double x0, const ModelParams& p);

/// x_t = y_t^(gamma + 1) exp(-b t). Throws ValidationError on y <= 0.
SamplePath lift_y_to_x(const SamplePath& y, const ModelParams& p);
/// Inverse of lift_y_to_x: y_t = x_t^(1 - beta) exp(b (1 - beta) t).
SamplePath lower_x_to_y(const SamplePath& x, const ModelParams& p);

/// a = 0 solution x_t = (x0^(1-beta) + w~_t)^(gamma+1) exp(-b t), set to zero
/// from the first node where x0^(1-beta) + w~_t <= 0.
TruncatedPath explicit_solution_a0(const SamplePath& driver, const ModelParams& p);
/// Same, starting from a precomputed w~ path.
TruncatedPath explicit_solution_from_tilde_w(const SamplePath& tilde_w, const ModelParams& p);

}  // namespace gmr
