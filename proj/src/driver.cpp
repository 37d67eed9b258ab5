#include "gmr/driver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <lapacke.h>

#include "gmr/parallel.hpp"
#include "gmr/stats.hpp"

namespace gmr {

CovarianceKernel CovarianceKernel::fbm(double hurst) {
  if (!(hurst > 0.0 && hurst < 1.0)) {
    throw ValidationError("kernel: Hurst parameter must lie in (0, 1)");
  }
  CovarianceKernel k;
  k.kind_ = KernelKind::fbm;
  k.hurst_ = hurst;
  k.holder_ = hurst;
  return k;
}

CovarianceKernel CovarianceKernel::brownian() {
  CovarianceKernel k;
  k.kind_ = KernelKind::brownian;
  k.hurst_ = 0.5;
  k.holder_ = 0.5;
  return k;
}

CovarianceKernel CovarianceKernel::custom(Function fn, double holder_exponent) {
  if (!fn) throw ValidationError("kernel: empty covariance function");
  if (!(holder_exponent > 0.0 && holder_exponent <= 1.0)) {
    throw ValidationError("kernel: Hoelder exponent must lie in (0, 1]");
  }
  CovarianceKernel k;
  k.kind_ = KernelKind::custom;
  k.holder_ = holder_exponent;
  k.fn_ = std::move(fn);
  return k;
}

CovarianceKernel CovarianceKernel::custom(std::vector<double> grid, Eigen::MatrixXd cov,
                                          double holder_exponent) {
  if (!(holder_exponent > 0.0 && holder_exponent <= 1.0)) {
    throw ValidationError("kernel: Hoelder exponent must lie in (0, 1]");
  }
  if (grid.empty() || cov.rows() != static_cast<Eigen::Index>(grid.size()) ||
      cov.cols() != cov.rows()) {
    throw ValidationError("kernel: covariance matrix does not match its grid");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw ValidationError("kernel: grid must be strictly increasing");
    }
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    throw ValidationError("kernel: covariance matrix is not symmetric");
  }
  CovarianceKernel k;
  k.kind_ = KernelKind::custom;
  k.holder_ = holder_exponent;
  k.grid_ = std::move(grid);
  // Store the exact symmetric part so lookups are symmetric bit-for-bit.
  k.cov_ = 0.5 * (cov + cov.transpose());
  return k;
}

double CovarianceKernel::operator()(double s, double t) const {
  if (s < 0.0 || t < 0.0) throw ValidationError("kernel: negative time");
  switch (kind_) {
    case KernelKind::brownian:
      return std::min(s, t);
    case KernelKind::fbm: {
      const double e = 2.0 * hurst_;
      return 0.5 * (std::pow(s, e) + std::pow(t, e) - std::pow(std::abs(t - s), e));
    }
    case KernelKind::custom:
      break;
  }
  if (fn_) return fn_(s, t);
  auto i = find_time(grid_, s);
  auto j = find_time(grid_, t);
  if (!i || !j) throw ValidationError("kernel: custom covariance evaluated off its grid");
  return cov_(static_cast<Eigen::Index>(*i), static_cast<Eigen::Index>(*j));
}

Eigen::MatrixXd CovarianceKernel::matrix(std::span<const double> times) const {
  const auto n = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd m(n, n);
  if (kind_ == KernelKind::fbm) {
    // Same formula as operator(), with the powers hoisted out of the double loop.
    const double e = 2.0 * hurst_;
    std::vector<double> pw(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) pw[i] = std::pow(times[i], e);
    // On a uniform grid |t_i - t_j| only depends on |i - j|.
    bool uniform = times.size() > 1;
    const double dt = uniform ? (times.back() - times.front()) / static_cast<double>(n - 1) : 0.0;
    for (std::size_t i = 0; uniform && i < times.size(); ++i) {
      uniform = std::abs(times[i] - times[0] - static_cast<double>(i) * dt) <= 1e-12 * times.back();
    }
    std::vector<double> lagpw;
    if (uniform) {
      lagpw.resize(times.size());
      for (std::size_t k = 0; k < times.size(); ++k) {
        lagpw[k] = std::pow(static_cast<double>(k) * dt, e);
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) {
        const double lag = uniform ? lagpw[static_cast<std::size_t>(i - j)]
                                   : std::pow(times[i] - times[j], e);
        m(i, j) = 0.5 * (pw[i] + pw[j] - lag);
      }
    }
  } else {
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) m(i, j) = (*this)(times[i], times[j]);
    }
  }
  m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
  return m;
}

std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x676d72u};
  return std::mt19937_64(seq);
}

namespace {

double smallest_eigenvalue(Eigen::MatrixXd a) {
  const auto n = static_cast<lapack_int>(a.rows());
  lapack_int found = 0;
  double w = 0.0;
  double z = 0.0;
  std::vector<lapack_int> support(2);
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, 1, 0.0,
                     &found, &w, &z, 1, support.data());
  return info == 0 ? w : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

GaussianSampler::GaussianSampler(const CovarianceKernel& kernel, std::vector<double> times)
    : times_(std::move(times)) {
  SamplePath probe{times_, std::vector<double>(times_.size(), 0.0)};
  probe.validate();

  // The t = 0 row is identically zero; factor the rest.
  const std::span<const double> interior(times_.data() + 1, times_.size() - 1);
  const Eigen::MatrixXd cov = kernel.matrix(interior);
  const auto n = static_cast<lapack_int>(cov.rows());
  const double max_diag = cov.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) {
    throw NumericalError("sampler: covariance matrix has no positive variance");
  }

  for (double rel : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8}) {
    factor_ = cov;
    if (rel > 0.0) factor_.diagonal().array() += rel * max_diag;
    if (LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', n, factor_.data(), n) == 0) {
      factor_.triangularView<Eigen::StrictlyUpper>().setZero();
      jitter_ = rel * max_diag;
      return;
    }
  }
  std::ostringstream msg;
  msg << "sampler: covariance factorization failed after jitter up to 1e-8 * max diagonal;"
      << " smallest eigenvalue estimate " << smallest_eigenvalue(cov);
  throw NumericalError(msg.str());
}

SamplePath GaussianSampler::sample(std::uint64_t seed, std::uint64_t index) const {
  auto rng = path_stream(seed, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(factor_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  const Eigen::VectorXd w = factor_.triangularView<Eigen::Lower>() * z;

  SamplePath path;
  path.times = times_;
  path.values.resize(times_.size());
  path.values[0] = 0.0;
  std::copy(w.data(), w.data() + w.size(), path.values.begin() + 1);
  return path;
}

std::vector<SamplePath> sample_paths(const CovarianceKernel& kernel, std::vector<double> times,
                                     std::size_t count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("sample_paths: count must be at least 1");
  const GaussianSampler sampler(kernel, std::move(times));
  std::vector<SamplePath> out(count);
  parallel_for(count, 0, [&](std::size_t i) { out[i] = sampler.sample(seed, i); });
  return out;
}

namespace {

struct Pair {
  std::vector<double> x, y;
};

Pair collect(std::span<const SamplePath> paths, double s, double t) {
  if (paths.size() < 2) {
    throw ValidationError("empirical_covariance: at least two paths required");
  }
  const auto& grid = paths.front().times;
  const std::size_t i = require_time(grid, s, "empirical_covariance");
  const std::size_t j = require_time(grid, t, "empirical_covariance");
  Pair p;
  p.x.reserve(paths.size());
  p.y.reserve(paths.size());
  for (const auto& path : paths) {
    if (path.times.size() != grid.size()) {
      throw ValidationError("empirical_covariance: paths do not share a grid");
    }
    p.x.push_back(path.values[i]);
    p.y.push_back(path.values[j]);
  }
  return p;
}

}  // namespace

double empirical_covariance(std::span<const SamplePath> paths, double s, double t) {
  return empirical_covariance_estimate(paths, s, t).value;
}

CovarianceEstimate empirical_covariance_estimate(std::span<const SamplePath> paths, double s,
                                                 double t) {
  const Pair p = collect(paths, s, t);
  const double m = static_cast<double>(p.x.size());
  const double mx = pairwise_sum(p.x) / m;
  const double my = pairwise_sum(p.y) / m;
  std::vector<double> prod(p.x.size());
  for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = (p.x[k] - mx) * (p.y[k] - my);
  CovarianceEstimate est;
  est.value = pairwise_sum(prod) / (m - 1.0);
  est.standard_error = std::sqrt(sample_variance(prod) / m);
  return est;
}

}  // namespace gmr
