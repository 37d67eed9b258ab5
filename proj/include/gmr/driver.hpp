#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmr/sample_path.hpp"

namespace gmr {

enum class KernelKind { fbm, brownian, custom };

/// Law of a centered one-dimensional Gaussian driver, described by its
/// covariance function c(s, t). Immutable once built.
class CovarianceKernel {
 public:
  using Function = std::function<double(double, double)>;

  /// Fractional Brownian motion, c(s,t) = (s^2H + t^2H - |t-s|^2H) / 2.
  /// The recorded Hoelder exponent is H.
  static CovarianceKernel fbm(double hurst);
  static CovarianceKernel brownian();
  /// Explicit covariance function; the caller states the path regularity.
  static CovarianceKernel custom(Function fn, double holder_exponent);
  /// Covariance given as a matrix on a fixed grid; evaluation off that grid fails.
  static CovarianceKernel custom(std::vector<double> grid, Eigen::MatrixXd cov,
                                 double holder_exponent);

  KernelKind kind() const { return kind_; }
  double hurst() const { return hurst_; }
  double holder_exponent() const { return holder_; }

  double operator()(double s, double t) const;

  /// Covariance matrix on `times`, symmetric by construction.
  Eigen::MatrixXd matrix(std::span<const double> times) const;

 private:
  CovarianceKernel() = default;

  KernelKind kind_ = KernelKind::brownian;
  double hurst_ = 0.5;
  double holder_ = 0.5;
  Function fn_;
  std::vector<double> grid_;
  Eigen::MatrixXd cov_;
};

/// Per-path random stream: depends on (seed, index) only.
std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t index);

/// Draws driver paths on a fixed grid through a Cholesky factor of the
/// covariance matrix. The factorization is done once at construction;
/// sample() is const and safe to call concurrently.
class GaussianSampler {
 public:
  GaussianSampler(const CovarianceKernel& kernel, std::vector<double> times);

  /// Path number `index` of the ensemble keyed by `seed`.
  SamplePath sample(std::uint64_t seed, std::uint64_t index) const;

  const std::vector<double>& times() const { return times_; }
  /// Diagonal jitter that was needed to factor the matrix (0 if none).
  double jitter() const { return jitter_; }

 private:
  std::vector<double> times_;
  Eigen::MatrixXd factor_;  // lower triangle over times_[1..]
  double jitter_ = 0.0;
};

/// `count` independent driver paths on `times`, path i drawn from path_stream(seed, i).
std::vector<SamplePath> sample_paths(const CovarianceKernel& kernel,
                                     std::vector<double> times, std::size_t count,
                                     std::uint64_t seed);

struct CovarianceEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Sample covariance of (W_s, W_t) across paths sharing one grid, with
/// mean removal and the M-1 denominator.
double empirical_covariance(std::span<const SamplePath> paths, double s, double t);

/// empirical_covariance together with the standard error of the product mean.
CovarianceEstimate empirical_covariance_estimate(std::span<const SamplePath> paths,
                                                 double s, double t);

}  // namespace gmr
