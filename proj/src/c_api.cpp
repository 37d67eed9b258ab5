#include "gmr/gmr.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <string>

#include "gmr/driver.hpp"
#include "gmr/montecarlo.hpp"
#include "gmr/parallel.hpp"
#include "gmr/pk.hpp"
#include "gmr/solver.hpp"

struct gmr_kernel {
  gmr::CovarianceKernel impl;
};

struct gmr_path {
  gmr::TruncatedPath impl;
};

struct gmr_ensemble {
  gmr::Ensemble impl;
  std::vector<double> moments;
};

struct gmr_observations {
  gmr::pk::ConcentrationSeries impl;
};

namespace {

thread_local std::string g_last_error;

gmr_status fail(gmr_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <class Fn>
gmr_status guarded(Fn&& fn) {
  try {
    fn();
    return GMR_OK;
  } catch (const gmr::ValidationError& e) {
    return fail(GMR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const gmr::NumericalError& e) {
    return fail(GMR_ERR_NUMERICAL, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(GMR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(GMR_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(GMR_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GMR_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw gmr::ValidationError(std::string(what) + " must not be NULL");
}

gmr::ModelParams to_cpp(const gmr_model_params& p) {
  gmr::ModelParams m;
  m.x0 = p.x0;
  m.a = p.a;
  m.b = p.b;
  m.sigma = p.sigma;
  m.beta = p.beta;
  return m;
}

gmr::pk::PkParams to_cpp(const gmr_pk_params& p) {
  gmr::pk::PkParams m;
  m.dose = p.dose;
  m.volume = p.volume;
  m.absorption = p.absorption;
  m.elimination = p.elimination;
  m.sigma = p.sigma;
  m.beta = p.beta;
  return m;
}

gmr::pk::SensitivitySpec to_cpp(const gmr_sensitivity_spec& s) {
  require(reinterpret_cast<const void*>(s.F), "spec->F");
  require(reinterpret_cast<const void*>(s.Fdot), "spec->Fdot");
  gmr::pk::SensitivitySpec out;
  auto F = s.F;
  auto Fdot = s.Fdot;
  void* user = s.user;
  out.F = [F, user](double r) { return F(r, user); };
  out.Fdot = [Fdot, user](double r) { return Fdot(r, user); };
  if (s.tau_kind != GMR_TAU_FIXED && s.tau_kind != GMR_TAU_HIT_CAPPED) {
    throw gmr::ValidationError("spec->tau_kind must be GMR_TAU_FIXED or GMR_TAU_HIT_CAPPED");
  }
  out.tau_kind = s.tau_kind == GMR_TAU_FIXED ? gmr::pk::TauKind::fixed_time
                                             : gmr::pk::TauKind::hit_capped;
  out.tau_time = s.tau_time;
  out.paths = s.paths;
  out.seed = s.seed;
  out.horizon = s.horizon;
  out.steps = s.steps;
  out.common_random_numbers = s.common_random_numbers != 0;
  return out;
}

void write_file(const char* file, const std::function<void(std::ostream&)>& body) {
  require(file, "file");
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::ios_base::failure(std::string("cannot open ") + file + " for writing");
  body(out);
  if (!out) throw std::ios_base::failure(std::string("write failed: ") + file);
}

}  // namespace

extern "C" {

const char* gmr_last_error(void) { return g_last_error.c_str(); }

const char* gmr_version(void) { return "0.1.0"; }

void gmr_set_threads(size_t threads) { gmr::set_default_threads(threads); }

gmr_status gmr_kernel_create_fbm(double hurst, gmr_kernel** out) {
  return guarded([&] {
    require(out, "out");
    *out = new gmr_kernel{gmr::CovarianceKernel::fbm(hurst)};
  });
}

gmr_status gmr_kernel_create_brownian(gmr_kernel** out) {
  return guarded([&] {
    require(out, "out");
    *out = new gmr_kernel{gmr::CovarianceKernel::brownian()};
  });
}

gmr_status gmr_kernel_create_matrix(const double* times, size_t n, const double* cov,
                                    double holder_exponent, gmr_kernel** out) {
  return guarded([&] {
    require(times, "times");
    require(cov, "cov");
    require(out, "out");
    const auto dim = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd m(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = cov[i * dim + j];
    }
    *out = new gmr_kernel{gmr::CovarianceKernel::custom(std::vector<double>(times, times + n),
                                                        std::move(m), holder_exponent)};
  });
}

void gmr_kernel_destroy(gmr_kernel* kernel) { delete kernel; }

gmr_status gmr_kernel_eval(const gmr_kernel* kernel, double s, double t, double* out) {
  return guarded([&] {
    require(kernel, "kernel");
    require(out, "out");
    *out = kernel->impl(s, t);
  });
}

double gmr_kernel_holder_exponent(const gmr_kernel* kernel) {
  return kernel ? kernel->impl.holder_exponent() : std::nan("");
}

gmr_status gmr_sample_driver(const gmr_kernel* kernel, double horizon, size_t steps,
                             uint64_t seed, uint64_t index, gmr_path** out) {
  return guarded([&] {
    require(kernel, "kernel");
    require(out, "out");
    const gmr::GaussianSampler sampler(kernel->impl, gmr::uniform_grid(horizon, steps));
    *out = new gmr_path{gmr::TruncatedPath{sampler.sample(seed, index), std::nullopt}};
  });
}

size_t gmr_path_length(const gmr_path* path) { return path ? path->impl.path.size() : 0; }

gmr_status gmr_path_copy(const gmr_path* path, double* times, double* values, size_t capacity) {
  return guarded([&] {
    require(path, "path");
    const auto& p = path->impl.path;
    const size_t n = std::min(capacity, p.size());
    if (times) std::copy_n(p.times.begin(), n, times);
    if (values) std::copy_n(p.values.begin(), n, values);
  });
}

int gmr_path_hit_index(const gmr_path* path, size_t* index) {
  if (!path || !path->impl.hit_index) return 0;
  if (index) *index = *path->impl.hit_index;
  return 1;
}

gmr_status gmr_path_write_csv(const gmr_path* path, const char* file) {
  try {
    return guarded([&] {
      require(path, "path");
      write_file(file, [&](std::ostream& os) { gmr::write_csv(os, path->impl.path); });
    });
  } catch (...) {
    return fail(GMR_ERR_IO, "write failed");
  }
}

void gmr_path_destroy(gmr_path* path) { delete path; }

gmr_status gmr_implicit_step_root(double A, double B, double gamma, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = gmr::implicit_step_root(A, B, gamma);
  });
}

gmr_status gmr_simulate(const gmr_model_params* params, const gmr_kernel* kernel, double horizon,
                        size_t steps, uint64_t seed, gmr_path** out) {
  return guarded([&] {
    require(params, "params");
    require(kernel, "kernel");
    require(out, "out");
    const gmr::ModelParams p = to_cpp(*params);
    p.validate();
    const std::vector<double> grid = gmr::uniform_grid(horizon, steps);
    gmr::SamplePath w{grid, std::vector<double>(grid.size(), 0.0)};
    if (p.sigma > 0.0) w = gmr::GaussianSampler(kernel->impl, grid).sample(seed, 0);
    *out = new gmr_path{gmr::solve_gmr(p, w, steps)};
  });
}

gmr_status gmr_deterministic_solution(const gmr_model_params* params, double t, double* out) {
  return guarded([&] {
    require(params, "params");
    require(out, "out");
    *out = gmr::deterministic_ode_solution(to_cpp(*params), t);
  });
}

gmr_status gmr_sup_bound(const gmr_model_params* params, double driver_sup, double horizon,
                         double* out) {
  return guarded([&] {
    require(params, "params");
    require(out, "out");
    *out = gmr::sup_bound(to_cpp(*params), driver_sup, horizon);
  });
}

gmr_status gmr_convergence_study(const gmr_model_params* params, const gmr_kernel* kernel,
                                 double horizon, const size_t* n_list, size_t count, size_t ref_n,
                                 uint64_t seed, double* errors, gmr_rate_summary* summary) {
  return guarded([&] {
    require(params, "params");
    require(n_list, "n_list");
    const gmr::ModelParams p = to_cpp(*params);
    p.validate();
    const std::span<const size_t> ns(n_list, count);
    gmr::RateReport rep;
    if (p.sigma == 0.0) {
      rep = gmr::convergence_against_ode(p, horizon, ns);
    } else {
      require(kernel, "kernel");
      const gmr::GaussianSampler sampler(kernel->impl, gmr::uniform_grid(horizon, ref_n));
      rep = gmr::convergence_study(p, sampler.sample(seed, 0), ns, ref_n,
                                   kernel->impl.holder_exponent());
    }
    if (errors) std::copy(rep.errors.begin(), rep.errors.end(), errors);
    if (summary) *summary = {rep.fitted_slope, rep.theoretical_rate};
  });
}

gmr_status gmr_ensemble_run(const gmr_ensemble_spec* spec, gmr_ensemble** out) {
  return guarded([&] {
    require(spec, "spec");
    require(spec->kernel, "spec->kernel");
    require(out, "out");
    gmr::EnsembleSpec s;
    s.params = to_cpp(spec->params);
    s.kernel = spec->kernel->impl;
    s.paths = spec->paths;
    s.steps = spec->steps;
    s.horizon = spec->horizon;
    s.seed = spec->seed;
    if (spec->moments) s.moments.assign(spec->moments, spec->moments + spec->moment_count);
    s.keep_paths = spec->keep_paths != 0;
    auto ens = std::make_unique<gmr_ensemble>();
    ens->moments = s.moments;
    ens->impl = gmr::ensemble_simulate(s);
    *out = ens.release();
  });
}

gmr_status gmr_ensemble_summary_get(const gmr_ensemble* ens, gmr_ensemble_summary* out) {
  return guarded([&] {
    require(ens, "ensemble");
    require(out, "out");
    const auto& st = ens->impl.stats;
    out->paths = st.sup_norms.size();
    out->hit_fraction = st.hit_fraction;
    out->hit_count = st.hit_times.size();
    out->min_y_node = st.min_y_node;
    out->nonpositive_y_nodes = st.nonpositive_y_nodes;
    out->bound_violations = st.bound_violations;
    out->moment_count = ens->moments.size();
  });
}

gmr_status gmr_ensemble_lp(const gmr_ensemble* ens, double* moments, double* estimates) {
  return guarded([&] {
    require(ens, "ensemble");
    for (size_t i = 0; i < ens->moments.size(); ++i) {
      if (moments) moments[i] = ens->moments[i];
      if (estimates) estimates[i] = ens->impl.stats.lp_estimates.at(ens->moments[i]);
    }
  });
}

gmr_status gmr_ensemble_hit_times(const gmr_ensemble* ens, double* out, size_t capacity) {
  return guarded([&] {
    require(ens, "ensemble");
    require(out, "out");
    const auto& h = ens->impl.stats.hit_times;
    std::copy_n(h.begin(), std::min(capacity, h.size()), out);
  });
}

gmr_status gmr_ensemble_write_csv(const gmr_ensemble* ens, const char* file) {
  try {
    return guarded([&] {
      require(ens, "ensemble");
      if (ens->impl.paths.empty()) {
        throw gmr::ValidationError("ensemble was run without keep_paths");
      }
      write_file(file, [&](std::ostream& os) { gmr::write_ensemble_csv(os, ens->impl.paths); });
    });
  } catch (...) {
    return fail(GMR_ERR_IO, "write failed");
  }
}

gmr_status gmr_ensemble_density(const gmr_ensemble* ens, double t, double* variance,
                                double* distinct_fraction) {
  return guarded([&] {
    require(ens, "ensemble");
    if (ens->impl.paths.empty()) throw gmr::ValidationError("ensemble was run without keep_paths");
    const gmr::DensitySmoke d = gmr::density_smoke(ens->impl.paths, t);
    if (variance) *variance = d.sample_variance;
    if (distinct_fraction) *distinct_fraction = d.distinct_fraction;
  });
}

void gmr_ensemble_destroy(gmr_ensemble* ens) { delete ens; }

gmr_status gmr_survival_check(double y0, const gmr_model_params* params, const gmr_kernel* kernel,
                              double horizon, size_t steps, size_t paths, uint64_t seed,
                              gmr_survival_report* out) {
  return guarded([&] {
    require(params, "params");
    require(kernel, "kernel");
    require(out, "out");
    const gmr::SurvivalReport r = gmr::survival_bound_check(y0, to_cpp(*params), kernel->impl,
                                                            horizon, steps, paths, seed);
    *out = {r.applicable ? 1 : 0, r.sigma_bar2,     r.empirical,
            r.bound,             r.standard_error, r.pass ? 1 : 0};
  });
}

gmr_status gmr_hitting_fractions(const gmr_model_params* params, const gmr_kernel* kernel,
                                 size_t paths, const double* horizons, size_t count, size_t steps,
                                 uint64_t seed, double* fractions, double* standard_errors,
                                 double* ci_low, double* ci_high) {
  return guarded([&] {
    require(params, "params");
    require(kernel, "kernel");
    require(horizons, "horizons");
    const gmr::HitReport r = gmr::hitting_time_stats(
        to_cpp(*params), kernel->impl, paths, std::span<const double>(horizons, count), steps, seed);
    auto put = [](const std::vector<double>& v, double* dst) {
      if (dst) std::copy(v.begin(), v.end(), dst);
    };
    put(r.fractions, fractions);
    put(r.standard_errors, standard_errors);
    put(r.ci_low, ci_low);
    put(r.ci_high, ci_high);
  });
}

gmr_status gmr_scaling_check(const gmr_model_params* params, double hurst, double eps, double t,
                             size_t paths, size_t steps, uint64_t seed, double* statistic,
                             double* p_value) {
  return guarded([&] {
    require(params, "params");
    const gmr::ScalingReport r =
        gmr::scaling_identity_check(to_cpp(*params), hurst, eps, t, paths, steps, seed);
    if (statistic) *statistic = r.statistic;
    if (p_value) *p_value = r.p_value;
  });
}

gmr_status gmr_pk_deterministic(const gmr_pk_params* pk, double t, double* out) {
  return guarded([&] {
    require(pk, "pk");
    require(out, "out");
    const auto p = to_cpp(*pk);
    p.validate();
    *out = gmr::pk::deterministic_concentration(p, t);
  });
}

gmr_status gmr_pk_simulate(const gmr_pk_params* pk, const gmr_kernel* kernel, double horizon,
                           size_t steps, uint64_t seed, uint64_t index, gmr_path** out) {
  return guarded([&] {
    require(pk, "pk");
    require(kernel, "kernel");
    require(out, "out");
    *out = new gmr_path{
        gmr::pk::simulate_concentration(to_cpp(*pk), kernel->impl, horizon, steps, seed, index)};
  });
}

gmr_status gmr_observations_read_csv(const char* file, gmr_observations** out) {
  require(out, "out");
  if (file == nullptr) return fail(GMR_ERR_INVALID_ARGUMENT, "file must not be NULL");
  std::ifstream in(file);
  if (!in) return fail(GMR_ERR_IO, std::string("cannot open ") + file);
  return guarded([&] { *out = new gmr_observations{gmr::pk::read_concentration_csv(in)}; });
}

gmr_status gmr_observations_create(const double* times, const double* concentrations, size_t n,
                                   gmr_observations** out) {
  return guarded([&] {
    require(times, "times");
    require(concentrations, "concentrations");
    require(out, "out");
    gmr::pk::ConcentrationSeries s{std::vector<double>(times, times + n),
                                   std::vector<double>(concentrations, concentrations + n)};
    s.validate();
    *out = new gmr_observations{std::move(s)};
  });
}

size_t gmr_observations_size(const gmr_observations* obs) { return obs ? obs->impl.size() : 0; }

gmr_status gmr_observations_copy(const gmr_observations* obs, double* times,
                                 double* concentrations, size_t capacity) {
  return guarded([&] {
    require(obs, "observations");
    const size_t n = std::min(capacity, obs->impl.size());
    if (times) std::copy_n(obs->impl.times.begin(), n, times);
    if (concentrations) std::copy_n(obs->impl.concentrations.begin(), n, concentrations);
  });
}

void gmr_observations_destroy(gmr_observations* obs) { delete obs; }

gmr_status gmr_pk_log_likelihood(const gmr_pk_params* pk, const gmr_observations* obs,
                                 const gmr_kernel* kernel, size_t quad_steps, double* out) {
  return guarded([&] {
    require(pk, "pk");
    require(obs, "observations");
    require(kernel, "kernel");
    require(out, "out");
    const gmr::pk::Theta theta{pk->elimination, pk->sigma, pk->beta};
    *out = gmr::pk::log_likelihood(theta, obs->impl, kernel->impl, pk->dose, pk->volume,
                                   quad_steps);
  });
}

gmr_status gmr_pk_fit(const gmr_pk_params* pk, const gmr_observations* obs,
                      const gmr_kernel* kernel, size_t quad_steps, const gmr_fit_bounds* bounds,
                      gmr_theta_estimate* out) {
  return guarded([&] {
    require(pk, "pk");
    require(obs, "observations");
    require(kernel, "kernel");
    require(out, "out");
    gmr::pk::FitBounds b;
    if (bounds) b = {bounds->elimination_max, bounds->sigma_max, bounds->beta_min, bounds->beta_max};
    const gmr::pk::LikelihoodModel model(obs->impl, kernel->impl, pk->dose, pk->volume,
                                         quad_steps);
    const gmr::pk::ThetaEstimate est =
        gmr::pk::fit_mle(model, {pk->elimination, pk->sigma, pk->beta}, b);
    *out = {est.theta.elimination, est.theta.sigma,        est.theta.beta,
            est.log_likelihood,    est.converged ? 1 : 0, est.iterations};
  });
}

gmr_status gmr_pk_sensitivity_plsin(const gmr_pk_params* pk, double x,
                                    const gmr_sensitivity_spec* spec, const gmr_kernel* kernel,
                                    gmr_sensitivity_report* out) {
  return guarded([&] {
    require(pk, "pk");
    require(spec, "spec");
    require(kernel, "kernel");
    require(out, "out");
    const auto r = gmr::pk::sensitivity_plsin(to_cpp(*pk), x, to_cpp(*spec), kernel->impl);
    *out = {r.estimate, r.std_error, r.capped_fraction, r.paths};
  });
}

gmr_status gmr_pk_sensitivity_fd(const gmr_pk_params* pk, double x, double h,
                                 const gmr_sensitivity_spec* spec, const gmr_kernel* kernel,
                                 gmr_sensitivity_report* out) {
  return guarded([&] {
    require(pk, "pk");
    require(spec, "spec");
    require(kernel, "kernel");
    require(out, "out");
    const auto r = gmr::pk::sensitivity_fd(to_cpp(*pk), x, to_cpp(*spec), kernel->impl, h);
    *out = {r.estimate, r.std_error, r.capped_fraction, r.paths};
  });
}

}  // extern "C"
