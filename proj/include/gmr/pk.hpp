#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmr/driver.hpp"
#include "gmr/transform.hpp"

namespace gmr::pk {

/// Mono-compartment model constants. The stochastic model is the a = 0
/// mean-reverting equation with x0 = dose / volume and b = elimination.
struct PkParams {
  double dose = 1.0;        // A0
  double volume = 1.0;      // v
  double absorption = 0.0;  // Ka; 0 for an IV bolus
  double elimination = 4.0; // Ke
  double sigma = 1.0;
  double beta = 0.8;

  double initial_concentration() const { return dose / volume; }
  ModelParams model() const;
  /// dose, volume, elimination > 0; absorption >= 0; sigma >= 0 (0 gives the
  /// noise-free path); beta in (0, 1).
  void validate() const;
};

/// Deterministic concentration. Ka > 0: two-exponential absorption/elimination
/// curve starting from 0. Ka = 0: bolus decay (A0/v) e^(-Ke t).
double deterministic_concentration(const PkParams& pk, double t);

/// One stochastic concentration path on `steps` uniform steps over [0, horizon],
/// stopped at the first zero. Path `index` of the ensemble keyed by `seed`.
TruncatedPath simulate_concentration(const PkParams& pk, const CovarianceKernel& kernel,
                                     double horizon, std::size_t steps, std::uint64_t seed,
                                     std::uint64_t index = 0);

/// Mean of Z_t = X_t^(1-beta): (A0/v)^(1-beta) e^(-Ke (1-beta) t).
double z_mean(double t, const PkParams& pk);

struct ConcentrationSeries {
  std::vector<double> times;
  std::vector<double> concentrations;

  std::size_t size() const { return times.size(); }
  /// Equal lengths, at least one point, all times > 0 and distinct.
  void validate() const;
};

/// CSV with header `t,concentration`. Extra columns are ignored.
ConcentrationSeries read_concentration_csv(std::istream& in);

struct Theta {
  double elimination = 4.0;  // Ke
  double sigma = 1.0;
  double beta = 0.8;
};

/// Covariance of Z at the observation times:
///   Gamma_ij = e^(-Ke(1-beta)(t_i + t_j)) Cov(w~_ti, w~_tj)
/// with the w~ covariance integrated on a grid that refines [0, max t] into
/// `quad_steps` uniform steps and contains every observation time.
Eigen::MatrixXd gamma_matrix(const PkParams& pk, std::span<const double> times,
                             const CovarianceKernel& kernel, std::size_t quad_steps = 200);

/// Likelihood of one observed series, with the driver covariance on the
/// quadrature grid computed once. Thread-compatible: evaluation is const.
class LikelihoodModel {
 public:
  LikelihoodModel(ConcentrationSeries obs, CovarianceKernel kernel, double dose, double volume,
                  std::size_t quad_steps = 200);

  /// log L, or -inf when some observation is <= 0. Throws NumericalError when
  /// Gamma cannot be factored even with jitter.
  double log_likelihood(const Theta& theta) const;
  Eigen::MatrixXd gamma(const Theta& theta) const;

  const ConcentrationSeries& observations() const { return obs_; }

 private:
  PkParams params_for(const Theta& theta) const;

  ConcentrationSeries obs_;  // sorted by time
  CovarianceKernel kernel_;
  double dose_;
  double volume_;
  std::vector<double> grid_;
  std::vector<std::size_t> obs_index_;
  Eigen::MatrixXd kernel_matrix_;
};

double log_likelihood(const Theta& theta, const ConcentrationSeries& obs,
                      const CovarianceKernel& kernel, double dose, double volume,
                      std::size_t quad_steps = 200);

struct FitBounds {
  double elimination_max = 50.0;
  double sigma_max = 20.0;
  double beta_min = 0.05;
  double beta_max = 0.95;
};

struct ThetaEstimate {
  Theta theta;
  double log_likelihood = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Maximizes log L with Nelder-Mead over (log Ke, log sigma, logit beta),
/// beta mapped into [beta_min, beta_max]. Throws NumericalError("no admissible
/// parameters") when no evaluated point has a finite likelihood.
ThetaEstimate fit_mle(const LikelihoodModel& model, const Theta& init, const FitBounds& bounds = {});

enum class TauKind { fixed_time, hit_capped };

struct SensitivitySpec {
  std::function<double(double)> F;
  std::function<double(double)> Fdot;
  TauKind tau_kind = TauKind::fixed_time;
  double tau_time = 0.5;  ///< used by fixed_time; must be a grid node
  std::size_t paths = 1000;
  std::uint64_t seed = 0;
  double horizon = 1.0;
  std::size_t steps = 200;
  std::size_t threads = 0;
  /// Finite differences only: reuse the same driver draws at x - h and x + h.
  bool common_random_numbers = true;
};

struct SensitivityReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t paths = 0;
  /// Fraction of paths whose zero hit came at or before the requested time.
  double capped_fraction = 0.0;
};

/// Monte Carlo mean of x^(-beta) e^(-Ke tau) F'(C_tau) (x^(1-beta) + w~_tau)^gamma.
/// Paths that hit zero before tau are stopped there and contribute 0.
SensitivityReport sensitivity_plsin(const PkParams& pk, double x, const SensitivitySpec& spec,
                                    const CovarianceKernel& kernel);

/// Central difference (f(x+h) - f(x-h)) / 2h of f(x) = E F(C_tau^x).
SensitivityReport sensitivity_fd(const PkParams& pk, double x, const SensitivitySpec& spec,
                                 const CovarianceKernel& kernel, double h);

}  // namespace gmr::pk
