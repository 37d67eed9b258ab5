#include "gmr/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gmr/parallel.hpp"
#include "gmr/stats.hpp"

namespace gmr {

void EnsembleSpec::validate() const {
  params.validate();
  if (paths < 1) throw ValidationError("ensemble: M must be >= 1");
  if (steps < 2) throw ValidationError("ensemble: n must be >= 2");
  if (!(horizon > 0.0)) throw ValidationError("ensemble: horizon must be > 0");
  for (double p : moments) {
    if (!(p >= 1.0)) throw ValidationError("ensemble: moment orders must be >= 1");
  }
}

namespace {

struct PathResult {
  TruncatedPath x;
  double sup_x = 0.0;
  double sup_w = 0.0;
  double min_y = 0.0;
  std::size_t nonpositive_y = 0;
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Ensemble ensemble_simulate(const EnsembleSpec& spec) {
  spec.validate();
  const std::vector<double> grid = uniform_grid(spec.horizon, spec.steps);
  std::vector<std::size_t> marginal_idx;
  for (double t : spec.marginal_times) marginal_idx.push_back(require_time(grid, t, "ensemble"));

  const GaussianSampler sampler(spec.kernel, grid);
  std::vector<PathResult> results(spec.paths);
  parallel_for(spec.paths, spec.threads, [&](std::size_t i) {
    const SamplePath w = sampler.sample(spec.seed, i);
    Solution s = solve_from_tilde_w(spec.params, tilde_w_path(w, spec.params));
    PathResult& r = results[i];
    r.sup_w = sup_norm(w.values);
    r.sup_x = sup_norm(s.x.path.values);
    r.min_y = s.y_nodes.empty() ? 0.0 : *std::min_element(s.y_nodes.begin(), s.y_nodes.end());
    r.nonpositive_y = static_cast<std::size_t>(
        std::count_if(s.y_nodes.begin(), s.y_nodes.end(), [](double y) { return !(y > 0.0); }));
    r.x = std::move(s.x);
  });

  Ensemble out;
  EnsembleStats& st = out.stats;
  std::size_t hits = 0;
  st.min_y_node = std::numeric_limits<double>::infinity();
  for (const PathResult& r : results) {
    st.sup_norms.push_back(r.sup_x);
    st.driver_sups.push_back(r.sup_w);
    if (r.x.hit_index) {
      ++hits;
      st.hit_times.push_back(*r.x.hit_time());
    }
    // y nodes of a truncated path stop before its hit.
    st.min_y_node = std::min(st.min_y_node, r.min_y);
    st.nonpositive_y_nodes += r.nonpositive_y;
    if (r.sup_x > sup_bound(spec.params, r.sup_w, spec.horizon)) ++st.bound_violations;
  }
  st.hit_fraction = static_cast<double>(hits) / static_cast<double>(spec.paths);
  for (double p : spec.moments) st.lp_estimates[p] = power_mean(st.sup_norms, p);
  for (std::size_t q = 0; q < marginal_idx.size(); ++q) {
    auto& column = st.marginal_samples[spec.marginal_times[q]];
    for (const PathResult& r : results) column.push_back(r.x.path.values[marginal_idx[q]]);
  }
  if (spec.keep_paths) {
    out.paths.reserve(results.size());
    for (PathResult& r : results) out.paths.push_back(std::move(r.x));
  }
  return out;
}

void write_ensemble_csv(std::ostream& out, std::span<const TruncatedPath> paths) {
  if (paths.empty()) throw ValidationError("ensemble csv: no paths");
  out << 't';
  for (std::size_t j = 0; j < paths.size(); ++j) out << ",path_" << j;
  out << '\n';
  const auto& times = paths.front().path.times;
  for (std::size_t k = 0; k < times.size(); ++k) {
    out << format_double(times[k]);
    for (const auto& p : paths) out << ',' << format_double(p.path.values[k]);
    out << '\n';
  }
}

LpConvergence lp_convergence_check(const ModelParams& p, const CovarianceKernel& kernel,
                                   std::size_t paths, std::span<const std::size_t> n_list,
                                   std::size_t ref_n, std::span<const double> moments,
                                   double horizon, std::uint64_t seed, std::size_t threads) {
  p.validate();
  if (paths < 1) throw ValidationError("lp_convergence: M must be >= 1");
  if (n_list.empty()) throw ValidationError("lp_convergence: empty n_list");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (ref_n % n_list[i] != 0) throw ValidationError("lp_convergence: grids are not nested");
    if (i > 0 && n_list[i] <= n_list[i - 1]) {
      throw ValidationError("lp_convergence: n_list must be strictly increasing");
    }
  }
  if (ref_n <= n_list.back()) throw ValidationError("lp_convergence: ref_n must exceed n_list");

  const GaussianSampler sampler(kernel, uniform_grid(horizon, ref_n));
  // sup-errors[path][n]
  std::vector<std::vector<double>> sup_err(paths, std::vector<double>(n_list.size()));
  parallel_for(paths, threads, [&](std::size_t i) {
    const SamplePath tw = tilde_w_path(sampler.sample(seed, i), p);
    const TruncatedPath ref = solve_from_tilde_w(p, tw).x;
    for (std::size_t j = 0; j < n_list.size(); ++j) {
      const std::size_t stride = ref_n / n_list[j];
      const TruncatedPath coarse = solve_from_tilde_w(p, subsample(tw, stride)).x;
      double e = 0.0;
      for (std::size_t k = 0; k <= n_list[j]; ++k) {
        e = std::max(e, std::abs(coarse.path.values[k] - ref.path.values[k * stride]));
      }
      sup_err[i][j] = e;
    }
  });

  LpConvergence out;
  out.n_list.assign(n_list.begin(), n_list.end());
  out.moments.assign(moments.begin(), moments.end());
  for (double q : moments) {
    std::vector<double> row;
    for (std::size_t j = 0; j < n_list.size(); ++j) {
      std::vector<double> col(paths);
      for (std::size_t i = 0; i < paths; ++i) col[i] = sup_err[i][j];
      row.push_back(power_mean(col, q));
    }
    out.errors.push_back(std::move(row));
  }
  return out;
}

SurvivalReport survival_bound_check(double y0, const ModelParams& p,
                                    const CovarianceKernel& kernel, double horizon,
                                    std::size_t steps, std::size_t paths, std::uint64_t seed,
                                    std::size_t threads) {
  if (!(y0 > 0.0)) throw ValidationError("survival: y0 must be > 0");
  if (paths < 1) throw ValidationError("survival: M must be >= 1");
  const std::vector<double> grid = uniform_grid(horizon, steps);

  const TildeWOperator op(p, grid);
  std::vector<std::size_t> all(grid.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  const Eigen::MatrixXd cov = tilde_w_covariance_matrix(op, kernel.matrix(grid), all);

  SurvivalReport rep;
  rep.sigma_bar2 = cov.diagonal().maxCoeff();
  rep.applicable = 2.0 * rep.sigma_bar2 * std::log(2.0) < y0 * y0;
  rep.bound = rep.sigma_bar2 > 0.0 ? 1.0 - 2.0 * std::exp(-y0 * y0 / (2.0 * rep.sigma_bar2)) : 1.0;

  std::vector<char> survived(paths, 1);
  if (p.sigma > 0.0) {
    const GaussianSampler sampler(kernel, grid);
    parallel_for(paths, threads, [&](std::size_t i) {
      const std::vector<double> tw = op.apply(sampler.sample(seed, i).values);
      survived[i] = *std::min_element(tw.begin(), tw.end()) > -y0 ? 1 : 0;
    });
  }
  const auto alive = static_cast<double>(std::count(survived.begin(), survived.end(), 1));
  rep.empirical = alive / static_cast<double>(paths);
  rep.standard_error = binomial_standard_error(rep.empirical, paths);
  rep.pass = rep.applicable && rep.empirical >= rep.bound - 2.0 * rep.standard_error;
  return rep;
}

HitReport hitting_time_stats(const ModelParams& p, const CovarianceKernel& kernel,
                             std::size_t paths, std::span<const double> horizons,
                             std::size_t steps, std::uint64_t seed, std::size_t threads) {
  p.validate();
  if (p.a != 0.0) throw ValidationError("hitting_time_stats: requires a = 0");
  if (horizons.empty()) throw ValidationError("hitting_time_stats: no horizons");
  for (std::size_t i = 1; i < horizons.size(); ++i) {
    if (!(horizons[i] > horizons[i - 1])) {
      throw ValidationError("hitting_time_stats: horizons must increase");
    }
  }
  const std::vector<double> grid = uniform_grid(horizons.back(), steps);
  for (double h : horizons) require_time(grid, h, "hitting_time_stats");

  std::vector<double> hit_time(paths, std::numeric_limits<double>::infinity());
  if (p.sigma > 0.0) {
    const GaussianSampler sampler(kernel, grid);
    parallel_for(paths, threads, [&](std::size_t i) {
      const TruncatedPath x = explicit_solution_a0(sampler.sample(seed, i), p);
      if (auto t = x.hit_time()) hit_time[i] = *t;
    });
  }

  HitReport rep;
  rep.horizons.assign(horizons.begin(), horizons.end());
  const double m = static_cast<double>(paths);
  const double z = 1.959963984540054;
  for (double h : horizons) {
    const double tol = 1e-9 * std::max(1.0, h);
    const auto hits = static_cast<double>(
        std::count_if(hit_time.begin(), hit_time.end(), [&](double t) { return t <= h + tol; }));
    const double f = hits / m;
    rep.fractions.push_back(f);
    rep.standard_errors.push_back(binomial_standard_error(f, paths));
    const double denom = 1.0 + z * z / m;
    const double centre = (f + z * z / (2.0 * m)) / denom;
    const double half = z * std::sqrt(f * (1.0 - f) / m + z * z / (4.0 * m * m)) / denom;
    rep.ci_low.push_back(std::min(f, std::max(0.0, centre - half)));
    rep.ci_high.push_back(std::max(f, std::min(1.0, centre + half)));
  }
  return rep;
}

ScalingReport scaling_identity_check(const ModelParams& p, double hurst, double eps, double t,
                                     std::size_t paths, std::size_t steps, std::uint64_t seed,
                                     std::size_t threads) {
  p.validate();
  if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("scaling: eps must lie in (0, 1]");
  if (paths < 2) throw ValidationError("scaling: need at least two paths");
  const CovarianceKernel kernel = CovarianceKernel::fbm(hurst);
  const std::vector<double> grid = uniform_grid(t, steps);
  const std::size_t at = require_time(grid, eps * t, "scaling");

  ModelParams scaled = p;
  scaled.a = eps * p.a;
  scaled.b = eps * p.b;
  scaled.sigma = std::pow(eps, hurst) * p.sigma;

  const GaussianSampler sampler(kernel, grid);
  // Independent stream for the right-hand side.
  const std::uint64_t other_seed = seed ^ 0x9e3779b97f4a7c15ull;
  ScalingReport rep;
  rep.rescaled_time_samples.resize(paths);
  rep.scaled_equation_samples.resize(paths);
  parallel_for(paths, threads, [&](std::size_t i) {
    rep.rescaled_time_samples[i] =
        solve_from_tilde_w(p, tilde_w_path(sampler.sample(seed, i), p)).x.path.values[at];
    rep.scaled_equation_samples[i] =
        solve_from_tilde_w(scaled, tilde_w_path(sampler.sample(other_seed, i), scaled))
            .x.path.values.back();
  });
  const KsResult ks = ks_two_sample(rep.rescaled_time_samples, rep.scaled_equation_samples);
  rep.statistic = ks.statistic;
  rep.p_value = ks.p_value;
  rep.pass = ks.p_value > 0.01;
  return rep;
}

std::vector<NoiseLevelQuantiles> small_noise_probe(const ModelParams& p,
                                                   const CovarianceKernel& kernel,
                                                   std::span<const double> eps_list,
                                                   std::size_t paths, std::size_t steps,
                                                   double horizon, std::uint64_t seed,
                                                   std::size_t threads) {
  p.validate();
  if (paths < 1) throw ValidationError("small_noise: M must be >= 1");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] >= 0.0)) throw ValidationError("small_noise: eps must be >= 0");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) {
      throw ValidationError("small_noise: eps_list must be decreasing");
    }
  }
  const std::vector<double> grid = uniform_grid(horizon, steps);
  ModelParams quiet = p;
  quiet.sigma = 0.0;
  const SamplePath zero{grid, std::vector<double>(grid.size(), 0.0)};
  const TruncatedPath skeleton = solve_from_tilde_w(quiet, zero).x;

  const GaussianSampler sampler(kernel, grid);
  // dist[eps][path]
  std::vector<std::vector<double>> dist(eps_list.size(), std::vector<double>(paths));
  parallel_for(paths, threads, [&](std::size_t i) {
    const SamplePath w = sampler.sample(seed, i);
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
      ModelParams noisy = p;
      noisy.sigma = eps_list[e] * p.sigma;
      const TruncatedPath x = solve_from_tilde_w(noisy, tilde_w_path(w, noisy)).x;
      double d = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        d = std::max(d, std::abs(x.path.values[k] - skeleton.path.values[k]));
      }
      dist[e][i] = d;
    }
  });

  std::vector<NoiseLevelQuantiles> out;
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    out.push_back({eps_list[e], quantile(dist[e], 0.1), quantile(dist[e], 0.5),
                   quantile(dist[e], 0.9)});
  }
  return out;
}

DensitySmoke density_smoke(std::span<const TruncatedPath> paths, double t) {
  if (paths.size() < 2) throw ValidationError("density_smoke: need at least two paths");
  const std::size_t at = require_time(paths.front().path.times, t, "density_smoke");
  std::vector<double> v;
  v.reserve(paths.size());
  for (const auto& p : paths) v.push_back(p.path.values[at]);
  DensitySmoke out;
  out.sample_variance = sample_variance(v);
  std::sort(v.begin(), v.end());
  const auto distinct = static_cast<double>(std::unique(v.begin(), v.end()) - v.begin());
  out.distinct_fraction = distinct / static_cast<double>(paths.size());
  out.applicable = out.sample_variance > 0.0;
  return out;
}

}  // namespace gmr
