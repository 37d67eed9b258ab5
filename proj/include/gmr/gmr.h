/*
 * C interface to the generalized mean-reverting SDE library.
 *
 * Objects are opaque handles created by gmr_*_create / producing calls and
 * released with the matching gmr_*_destroy. Every fallible call returns a
 * gmr_status; on failure gmr_last_error() describes the problem for the
 * calling thread until its next failing call.
 */
#ifndef GMR_GMR_H
#define GMR_GMR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GMR_BUILDING_LIBRARY)
#    define GMR_API __declspec(dllexport)
#  else
#    define GMR_API __declspec(dllimport)
#  endif
#else
#  define GMR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gmr_status {
  GMR_OK = 0,
  GMR_ERR_INVALID_ARGUMENT = 1,
  GMR_ERR_NUMERICAL = 2,
  GMR_ERR_IO = 3,
  GMR_ERR_INTERNAL = 4
} gmr_status;

typedef struct gmr_kernel gmr_kernel;
typedef struct gmr_path gmr_path;
typedef struct gmr_ensemble gmr_ensemble;
typedef struct gmr_observations gmr_observations;

/* dX = (a - bX) dt + sigma X^beta dW, X_0 = x0 */
typedef struct gmr_model_params {
  double x0;
  double a;
  double b;
  double sigma;
  double beta;
} gmr_model_params;

typedef struct gmr_pk_params {
  double dose;        /* A0 */
  double volume;      /* v */
  double absorption;  /* Ka, 0 for a bolus */
  double elimination; /* Ke */
  double sigma;
  double beta;
} gmr_pk_params;

GMR_API const char* gmr_last_error(void);
GMR_API const char* gmr_version(void);
/* Worker threads for Monte Carlo loops; 0 restores the GMR_THREADS / 1 default. */
GMR_API void gmr_set_threads(size_t threads);

/* ---- driver kernels ---------------------------------------------------- */

GMR_API gmr_status gmr_kernel_create_fbm(double hurst, gmr_kernel** out);
GMR_API gmr_status gmr_kernel_create_brownian(gmr_kernel** out);
/* Covariance given on a grid, row-major n x n. */
GMR_API gmr_status gmr_kernel_create_matrix(const double* times, size_t n, const double* cov,
                                            double holder_exponent, gmr_kernel** out);
GMR_API void gmr_kernel_destroy(gmr_kernel* kernel);
GMR_API gmr_status gmr_kernel_eval(const gmr_kernel* kernel, double s, double t, double* out);
GMR_API double gmr_kernel_holder_exponent(const gmr_kernel* kernel);

/* ---- paths ------------------------------------------------------------- */

/* Driver path `index` of the ensemble keyed by `seed` on `steps` uniform steps. */
GMR_API gmr_status gmr_sample_driver(const gmr_kernel* kernel, double horizon, size_t steps,
                                     uint64_t seed, uint64_t index, gmr_path** out);
GMR_API size_t gmr_path_length(const gmr_path* path);
/* Copies up to `capacity` nodes; either output pointer may be NULL. */
GMR_API gmr_status gmr_path_copy(const gmr_path* path, double* times, double* values,
                                 size_t capacity);
/* 1 and *index set when the path was stopped at a zero hit, else 0. */
GMR_API int gmr_path_hit_index(const gmr_path* path, size_t* index);
/* `t,value` CSV, %.17g. */
GMR_API gmr_status gmr_path_write_csv(const gmr_path* path, const char* file);
GMR_API void gmr_path_destroy(gmr_path* path);

/* ---- solver ------------------------------------------------------------ */

GMR_API gmr_status gmr_implicit_step_root(double A, double B, double gamma, double* out);
/* One solution path: implicit Euler for a > 0, closed form with zero-hit
 * truncation for a = 0. Driver path 0 of `seed`. */
GMR_API gmr_status gmr_simulate(const gmr_model_params* params, const gmr_kernel* kernel,
                                double horizon, size_t steps, uint64_t seed, gmr_path** out);
GMR_API gmr_status gmr_deterministic_solution(const gmr_model_params* params, double t,
                                              double* out);
GMR_API gmr_status gmr_sup_bound(const gmr_model_params* params, double driver_sup,
                                 double horizon, double* out);

typedef struct gmr_rate_summary {
  double fitted_slope;
  double theoretical_rate;
} gmr_rate_summary;

/* Sup-norm errors for each n in n_list (length `count`, written to `errors`).
 * sigma = 0: against the closed-form ODE solution. sigma > 0: against the
 * scheme at ref_n on driver path 0 of `seed`. */
GMR_API gmr_status gmr_convergence_study(const gmr_model_params* params, const gmr_kernel* kernel,
                                         double horizon, const size_t* n_list, size_t count,
                                         size_t ref_n, uint64_t seed, double* errors,
                                         gmr_rate_summary* summary);

/* ---- ensembles --------------------------------------------------------- */

typedef struct gmr_ensemble_spec {
  gmr_model_params params;
  const gmr_kernel* kernel;
  size_t paths;
  size_t steps;
  double horizon;
  uint64_t seed;
  const double* moments; /* NULL -> {1, 2, 4, 8} */
  size_t moment_count;
  int keep_paths;
} gmr_ensemble_spec;

typedef struct gmr_ensemble_summary {
  size_t paths;
  double hit_fraction;
  size_t hit_count;
  double min_y_node;
  size_t nonpositive_y_nodes;
  size_t bound_violations;
  size_t moment_count;
} gmr_ensemble_summary;

GMR_API gmr_status gmr_ensemble_run(const gmr_ensemble_spec* spec, gmr_ensemble** out);
GMR_API gmr_status gmr_ensemble_summary_get(const gmr_ensemble* ens, gmr_ensemble_summary* out);
/* moments[i] and the matching (E sup|X|^p)^(1/p) for i < moment_count. */
GMR_API gmr_status gmr_ensemble_lp(const gmr_ensemble* ens, double* moments, double* estimates);
GMR_API gmr_status gmr_ensemble_hit_times(const gmr_ensemble* ens, double* out, size_t capacity);
/* Requires keep_paths. Header t,path_0,...,path_{M-1}. */
GMR_API gmr_status gmr_ensemble_write_csv(const gmr_ensemble* ens, const char* file);
GMR_API gmr_status gmr_ensemble_density(const gmr_ensemble* ens, double t, double* variance,
                                        double* distinct_fraction);
GMR_API void gmr_ensemble_destroy(gmr_ensemble* ens);

/* ---- probability checks ------------------------------------------------ */

typedef struct gmr_survival_report {
  int applicable;
  double sigma_bar2;
  double empirical;
  double bound;
  double standard_error;
  int pass;
} gmr_survival_report;

GMR_API gmr_status gmr_survival_check(double y0, const gmr_model_params* params,
                                      const gmr_kernel* kernel, double horizon, size_t steps,
                                      size_t paths, uint64_t seed, gmr_survival_report* out);

/* Zero-hit fractions by each horizon (a = 0). Any output array may be NULL. */
GMR_API gmr_status gmr_hitting_fractions(const gmr_model_params* params, const gmr_kernel* kernel,
                                         size_t paths, const double* horizons, size_t count,
                                         size_t steps, uint64_t seed, double* fractions,
                                         double* standard_errors, double* ci_low, double* ci_high);

GMR_API gmr_status gmr_scaling_check(const gmr_model_params* params, double hurst, double eps,
                                     double t, size_t paths, size_t steps, uint64_t seed,
                                     double* statistic, double* p_value);

/* ---- pharmacokinetics -------------------------------------------------- */

GMR_API gmr_status gmr_pk_deterministic(const gmr_pk_params* pk, double t, double* out);
GMR_API gmr_status gmr_pk_simulate(const gmr_pk_params* pk, const gmr_kernel* kernel,
                                   double horizon, size_t steps, uint64_t seed, uint64_t index,
                                   gmr_path** out);

/* `t,concentration` CSV (a `stochastic` column is accepted too; t = 0 rows skipped). */
GMR_API gmr_status gmr_observations_read_csv(const char* file, gmr_observations** out);
GMR_API gmr_status gmr_observations_create(const double* times, const double* concentrations,
                                           size_t n, gmr_observations** out);
GMR_API size_t gmr_observations_size(const gmr_observations* obs);
GMR_API gmr_status gmr_observations_copy(const gmr_observations* obs, double* times,
                                         double* concentrations, size_t capacity);
GMR_API void gmr_observations_destroy(gmr_observations* obs);

/* Uses dose, volume, elimination, sigma and beta of `pk`. -inf when some
 * observation is <= 0. */
GMR_API gmr_status gmr_pk_log_likelihood(const gmr_pk_params* pk, const gmr_observations* obs,
                                         const gmr_kernel* kernel, size_t quad_steps,
                                         double* out);

typedef struct gmr_fit_bounds {
  double elimination_max;
  double sigma_max;
  double beta_min;
  double beta_max;
} gmr_fit_bounds;

typedef struct gmr_theta_estimate {
  double elimination;
  double sigma;
  double beta;
  double log_likelihood;
  int converged;
  size_t iterations;
} gmr_theta_estimate;

/* Starting point taken from pk->elimination, pk->sigma, pk->beta. bounds may be NULL. */
GMR_API gmr_status gmr_pk_fit(const gmr_pk_params* pk, const gmr_observations* obs,
                              const gmr_kernel* kernel, size_t quad_steps,
                              const gmr_fit_bounds* bounds, gmr_theta_estimate* out);

typedef double (*gmr_scalar_fn)(double r, void* user);

enum { GMR_TAU_FIXED = 0, GMR_TAU_HIT_CAPPED = 1 };

typedef struct gmr_sensitivity_spec {
  gmr_scalar_fn F;
  gmr_scalar_fn Fdot;
  void* user;
  int tau_kind;
  double tau_time;
  size_t paths;
  uint64_t seed;
  double horizon;
  size_t steps;
  int common_random_numbers;
} gmr_sensitivity_spec;

typedef struct gmr_sensitivity_report {
  double estimate;
  double std_error;
  double capped_fraction;
  size_t paths;
} gmr_sensitivity_report;

GMR_API gmr_status gmr_pk_sensitivity_plsin(const gmr_pk_params* pk, double x,
                                            const gmr_sensitivity_spec* spec,
                                            const gmr_kernel* kernel,
                                            gmr_sensitivity_report* out);
GMR_API gmr_status gmr_pk_sensitivity_fd(const gmr_pk_params* pk, double x, double h,
                                         const gmr_sensitivity_spec* spec,
                                         const gmr_kernel* kernel, gmr_sensitivity_report* out);

#ifdef __cplusplus
}
#endif

#endif /* GMR_GMR_H */
