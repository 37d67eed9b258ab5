#include "gmr/transform.hpp"

#include <cmath>

namespace gmr {

void ModelParams::validate() const {
  if (!(x0 > 0.0) || !std::isfinite(x0)) throw ValidationError("params: x0 must be > 0");
  if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("params: a must be >= 0");
  if (!(b >= 0.0) || !std::isfinite(b)) throw ValidationError("params: b must be >= 0");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("params: sigma must be >= 0");
  }
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("params: beta must lie in (0, 1)");
}

double theta_weight(double t, const ModelParams& p) {
  return p.sigma * (1.0 - p.beta) * std::exp(p.b * (1.0 - p.beta) * t);
}

double theta_weight_derivative(double t, const ModelParams& p) {
  return p.b * (1.0 - p.beta) * theta_weight(t, p);
}

TildeWOperator::TildeWOperator(const ModelParams& p, std::vector<double> times)
    : times_(std::move(times)), theta_(times_.size()), dtheta_(times_.size()) {
  for (std::size_t i = 0; i < times_.size(); ++i) {
    theta_[i] = theta_weight(times_[i], p);
    dtheta_[i] = theta_weight_derivative(times_[i], p);
  }
}

double TildeWOperator::apply_row(std::size_t i, std::span<const double> w) const {
  double integral = 0.0;
  for (std::size_t k = 1; k <= i; ++k) {
    const double h = times_[k] - times_[k - 1];
    integral += 0.5 * h * (dtheta_[k - 1] * w[k - 1] + dtheta_[k] * w[k]);
  }
  return theta_[i] * w[i] - integral;
}

std::vector<double> TildeWOperator::apply(std::span<const double> w) const {
  std::vector<double> out(times_.size());
  double integral = 0.0;
  out[0] = theta_[0] * w[0];
  for (std::size_t k = 1; k < times_.size(); ++k) {
    const double h = times_[k] - times_[k - 1];
    integral += 0.5 * h * (dtheta_[k - 1] * w[k - 1] + dtheta_[k] * w[k]);
    out[k] = theta_[k] * w[k] - integral;
  }
  return out;
}

Eigen::MatrixXd TildeWOperator::rows(std::span<const std::size_t> indices) const {
  const auto n = static_cast<Eigen::Index>(times_.size());
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(indices.size()), n);
  for (std::size_t q = 0; q < indices.size(); ++q) {
    const std::size_t i = indices[q];
    const auto row = static_cast<Eigen::Index>(q);
    for (std::size_t k = 1; k <= i; ++k) {
      const double h = times_[k] - times_[k - 1];
      r(row, static_cast<Eigen::Index>(k - 1)) -= 0.5 * h * dtheta_[k - 1];
      r(row, static_cast<Eigen::Index>(k)) -= 0.5 * h * dtheta_[k];
    }
    r(row, static_cast<Eigen::Index>(i)) += theta_[i];
  }
  return r;
}

SamplePath tilde_w_path(const SamplePath& driver, const ModelParams& p) {
  driver.validate();
  if (driver.values.front() != 0.0) {
    throw ValidationError("tilde_w_path: driver must start at 0");
  }
  const TildeWOperator op(p, driver.times);
  SamplePath out;
  out.times = driver.times;
  out.values = op.apply(driver.values);
  return out;
}

Eigen::MatrixXd tilde_w_covariance_matrix(const TildeWOperator& op,
                                          const Eigen::MatrixXd& kernel_matrix,
                                          std::span<const std::size_t> indices) {
  const Eigen::MatrixXd r = op.rows(indices);
  const Eigen::MatrixXd kr = kernel_matrix * r.transpose();
  Eigen::MatrixXd cov = r * kr;
  return 0.5 * (cov + cov.transpose());
}

double tilde_w_covariance(double s, double t, const ModelParams& p,
                          const CovarianceKernel& kernel, std::span<const double> grid) {
  const std::size_t i = require_time(grid, s, "tilde_w_covariance");
  const std::size_t j = require_time(grid, t, "tilde_w_covariance");
  // Only the prefix up to max(i, j) of the grid enters either row.
  const std::size_t last = std::max(i, j);
  std::vector<double> prefix(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(last + 1));
  const TildeWOperator op(p, prefix);
  const Eigen::MatrixXd k = kernel.matrix(prefix);
  const std::size_t idx[2] = {std::min(i, j), std::max(i, j)};
  const Eigen::MatrixXd cov = tilde_w_covariance_matrix(op, k, idx);
  return cov(0, 1);
}

double y0_from_x0(double x0, const ModelParams& p) {
  if (!(x0 > 0.0)) throw ValidationError("y0_from_x0: x0 must be > 0");
  return std::pow(x0, 1.0 - p.beta);
}

SamplePath lift_y_to_x(const SamplePath& y, const ModelParams& p) {
  const double e = p.gamma() + 1.0;
  SamplePath x;
  x.times = y.times;
  x.values.resize(y.values.size());
  for (std::size_t k = 0; k < y.values.size(); ++k) {
    if (!(y.values[k] > 0.0)) {
      throw ValidationError("lift_y_to_x: y must be strictly positive; truncate first");
    }
    x.values[k] = std::pow(y.values[k], e) * std::exp(-p.b * y.times[k]);
  }
  return x;
}

SamplePath lower_x_to_y(const SamplePath& x, const ModelParams& p) {
  SamplePath y;
  y.times = x.times;
  y.values.resize(x.values.size());
  for (std::size_t k = 0; k < x.values.size(); ++k) {
    if (!(x.values[k] > 0.0)) throw ValidationError("lower_x_to_y: x must be > 0");
    y.values[k] = std::pow(x.values[k], 1.0 - p.beta) * std::exp(p.b * (1.0 - p.beta) * x.times[k]);
  }
  return y;
}

TruncatedPath explicit_solution_from_tilde_w(const SamplePath& tilde_w, const ModelParams& p) {
  const double y0 = y0_from_x0(p.x0, p);
  const double e = p.gamma() + 1.0;
  TruncatedPath out;
  out.path.times = tilde_w.times;
  out.path.values.assign(tilde_w.size(), 0.0);
  for (std::size_t k = 0; k < tilde_w.size(); ++k) {
    const double y = y0 + tilde_w.values[k];
    if (!(y > 0.0)) {
      out.hit_index = k;
      break;
    }
    out.path.values[k] = std::pow(y, e) * std::exp(-p.b * tilde_w.times[k]);
  }
  return out;
}

TruncatedPath explicit_solution_a0(const SamplePath& driver, const ModelParams& p) {
  p.validate();
  if (p.a != 0.0) throw ValidationError("explicit_solution_a0: requires a = 0");
  return explicit_solution_from_tilde_w(tilde_w_path(driver, p), p);
}

}  // namespace gmr
