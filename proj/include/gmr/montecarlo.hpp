#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "gmr/driver.hpp"
#include "gmr/solver.hpp"
#include "gmr/transform.hpp"

namespace gmr {

struct EnsembleSpec {
  ModelParams params;
  CovarianceKernel kernel = CovarianceKernel::brownian();
  std::size_t paths = 1;  // M
  std::size_t steps = 2;  // n
  double horizon = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> moments{1.0, 2.0, 4.0, 8.0};
  std::vector<double> marginal_times;
  std::size_t threads = 0;
  bool keep_paths = false;

  void validate() const;
};

struct EnsembleStats {
  /// p -> (E sup|X|^p)^(1/p)
  std::map<double, double> lp_estimates;
  double hit_fraction = 0.0;
  std::vector<double> hit_times;
  /// t -> X_t across paths, in path order
  std::map<double, std::vector<double>> marginal_samples;
  std::vector<double> sup_norms;
  std::vector<double> driver_sups;
  double min_y_node = 0.0;
  std::size_t nonpositive_y_nodes = 0;
  /// Paths with sup|x| > sup_bound(params, sup|w|, T).
  std::size_t bound_violations = 0;
};

struct Ensemble {
  EnsembleStats stats;
  std::vector<TruncatedPath> paths;  // filled when spec.keep_paths
};

/// M independent solves on the n-step grid. Path i uses driver stream (seed, i),
/// so results do not depend on the worker count or scheduling.
Ensemble ensemble_simulate(const EnsembleSpec& spec);

/// Matrix CSV: header `t,path_0,...,path_{M-1}`, one row per grid node.
void write_ensemble_csv(std::ostream& out, std::span<const TruncatedPath> paths);

struct LpConvergence {
  std::vector<std::size_t> n_list;
  std::vector<double> moments;
  /// errors[j][i] = (E sup|X^(n_i) - X^(ref)|^p_j)^(1/p_j)
  std::vector<std::vector<double>> errors;
};

LpConvergence lp_convergence_check(const ModelParams& p, const CovarianceKernel& kernel,
                                   std::size_t paths, std::span<const std::size_t> n_list,
                                   std::size_t ref_n, std::span<const double> moments,
                                   double horizon, std::uint64_t seed, std::size_t threads = 0);

struct SurvivalReport {
  bool applicable = false;  ///< 2 sigma_bar^2 ln 2 < y0^2
  double sigma_bar2 = 0.0;  ///< max over the grid of Var(w~_t)
  double empirical = 0.0;   ///< fraction of paths with inf w~ > -y0
  double bound = 0.0;       ///< 1 - 2 exp(-y0^2 / (2 sigma_bar^2))
  double standard_error = 0.0;
  bool pass = false;        ///< empirical >= bound - 2 standard_error
};

SurvivalReport survival_bound_check(double y0, const ModelParams& p,
                                    const CovarianceKernel& kernel, double horizon,
                                    std::size_t steps, std::size_t paths, std::uint64_t seed,
                                    std::size_t threads = 0);

struct HitReport {
  std::vector<double> horizons;
  std::vector<double> fractions;
  std::vector<double> standard_errors;
  std::vector<double> ci_low;   ///< Wilson 95% interval
  std::vector<double> ci_high;
};

/// Zero-hit fractions of the a = 0 solution by each horizon. One path per
/// sample is solved on [0, max horizon] with `steps` steps, so the fractions
/// are nondecreasing in the horizon by construction.
HitReport hitting_time_stats(const ModelParams& p, const CovarianceKernel& kernel,
                             std::size_t paths, std::span<const double> horizons,
                             std::size_t steps, std::uint64_t seed, std::size_t threads = 0);

struct ScalingReport {
  double statistic = 0.0;
  double p_value = 1.0;
  bool pass = false;  ///< p_value > 0.01
  std::vector<double> rescaled_time_samples;
  std::vector<double> scaled_equation_samples;
};

/// Compares X at eps*t with the solution at t of the equation whose drift is
/// scaled by eps and noise by eps^H, driven by an independent fBm.
/// eps * steps must be an integer so eps*t is a grid node.
ScalingReport scaling_identity_check(const ModelParams& p, double hurst, double eps, double t,
                                     std::size_t paths, std::size_t steps, std::uint64_t seed,
                                     std::size_t threads = 0);

struct NoiseLevelQuantiles {
  double eps = 0.0;
  double q10 = 0.0;
  double median = 0.0;
  double q90 = 0.0;
};

/// For each eps, quantiles of sup|X^eps - X^0| where X^eps is driven by eps*W
/// and X^0 is the sigma = 0 solution on the same grid. Every eps level reuses
/// the same driver draws.
std::vector<NoiseLevelQuantiles> small_noise_probe(const ModelParams& p,
                                                   const CovarianceKernel& kernel,
                                                   std::span<const double> eps_list,
                                                   std::size_t paths, std::size_t steps,
                                                   double horizon, std::uint64_t seed,
                                                   std::size_t threads = 0);

struct DensitySmoke {
  double sample_variance = 0.0;
  double distinct_fraction = 0.0;
  bool applicable = false;  ///< false for a degenerate (atomic) marginal
};

DensitySmoke density_smoke(std::span<const TruncatedPath> paths, double t);

}  // namespace gmr
