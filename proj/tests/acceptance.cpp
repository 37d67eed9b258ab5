// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gmr/montecarlo.hpp"
#include "gmr/pk.hpp"
#include "gmr/solver.hpp"
#include "gmr/stats.hpp"
#include "oracles.hpp"

#ifndef GMRSIM_PATH
#error "GMRSIM_PATH must point at the CLI binary"
#endif

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

gmr::ModelParams params(double x0, double a, double b, double sigma, double beta) {
  gmr::ModelParams p;
  p.x0 = x0;
  p.a = a;
  p.b = b;
  p.sigma = sigma;
  p.beta = beta;
  return p;
}

// Positivity and sup-bound bookkeeping shared by every ensemble below.
struct EnsembleLedger {
  std::size_t ensembles = 0;
  std::size_t paths = 0;
  std::size_t nonpositive = 0;
  std::size_t violations = 0;
  double min_y = std::numeric_limits<double>::infinity();

  gmr::Ensemble run(const gmr::EnsembleSpec& spec) {
    gmr::Ensemble e = gmr::ensemble_simulate(spec);
    ++ensembles;
    paths += spec.paths;
    nonpositive += e.stats.nonpositive_y_nodes;
    violations += e.stats.bound_violations;
    min_y = std::min(min_y, e.stats.min_y_node);
    return e;
  }
};

EnsembleLedger g_ledger;

// ---------------------------------------------------------------------------

Outcome root_solver_oracle() {
  std::mt19937_64 rng(20240101);
  std::uniform_real_distribution<double> ua(-2.0, 5.0), ub(0.0, 3.0), ug(0.2, 5.0);
  int failures = 0;
  double worst_diff = 0.0, worst_res = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double A = ua(rng);
    double B = ub(rng), g = ug(rng);
    if (B == 0.0) B = 3.0;  // keep B in (0, 3] and gamma in (0.2, 5]
    if (g == 0.2) g = 5.0;
    const double r = gmr::implicit_step_root(A, B, g);
    const double diff = std::abs(r - oracle::bisect_step_root(A, B, g));
    const double res = std::abs(r - B * std::pow(r, -g) - A) / std::max(1.0, std::abs(A));
    worst_diff = std::max(worst_diff, diff);
    worst_res = std::max(worst_res, res);
    if (diff > 1e-10 || res > 1e-12) ++failures;
  }
  return {failures == 0, fmt("1000 draws, failures=%d, max |root-bisect|=%.2e, max scaled residual=%.2e",
                             failures, worst_diff, worst_res)};
}

Outcome ode_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::size_t> ns{64, 128, 256, 512};
  bool ok = true;
  double worst_err = 0.0, worst_ratio = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto p = params(0.2 + 2.8 * u(rng), 0.1 + 1.9 * u(rng), 0.1 + 2.9 * u(rng), 0.0, 0.2 + 0.7 * u(rng));
    const auto rep = gmr::convergence_against_ode(p, 1.0, ns);
    worst_err = std::max(worst_err, rep.errors.back());
    ok = ok && rep.errors.back() <= 1e-2;
    for (std::size_t k = 1; k < ns.size(); ++k) {
      const double ratio = rep.errors[k] / rep.errors[k - 1];
      worst_ratio = std::max(worst_ratio, ratio);
      ok = ok && ratio <= 0.6;
    }
  }
  return {ok, fmt("10 parameter sets, max sup error at n=512: %.3e, max error(2n)/error(n): %.3f", worst_err, worst_ratio)};
}

Outcome convergence_rate() {
  const auto start = std::chrono::steady_clock::now();
  const auto p = params(1.0, 1.0, 1.0, 0.5, 0.8);
  const std::size_t ref = 8192;
  const gmr::GaussianSampler sampler(gmr::CovarianceKernel::fbm(0.9), gmr::uniform_grid(1.0, ref));
  const auto w = sampler.sample(2024, 0);
  const std::vector<std::size_t> ns{32, 64, 128, 256, 512, 1024};
  const auto rep = gmr::convergence_study(p, w, ns, ref, 0.9);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {rep.fitted_slope >= 0.65 && secs < 30.0,
          fmt("fitted slope %.3f (theory %.2f), runtime %.1f s", rep.fitted_slope, rep.theoretical_rate, secs)};
}

Outcome monotonicity() {
  const std::size_t n = 256;
  const gmr::GaussianSampler sampler(gmr::CovarianceKernel::fbm(0.75), gmr::uniform_grid(1.0, n));
  const double beta = 0.7, a = 1.0, b = 2.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto w = sampler.sample(555, i);
    const auto lo = gmr::solve_gmr(params(1.0, 0.0, b, 1.0, beta), w, n).path.values;
    const auto mid = gmr::solve_gmr(params(1.0, a, b, 1.0, beta), w, n).path.values;
    const auto hi = gmr::solve_gmr(params(1.0, a, 0.0, 1.0, beta), w, n).path.values;
    for (std::size_t k = 0; k <= n; ++k) {
      worst = std::max({worst, lo[k] - mid[k], mid[k] - hi[k]});
    }
  }
  return {worst <= 1e-9, fmt("100 paths, max ordering violation %.3e", std::max(worst, 0.0))};
}

Outcome survival() {
  // y0 = x0^(1-beta) = 1.5 with sigma_bar^2 = 0.25: 2 * 0.25 * ln 2 < 2.25.
  const auto p = params(2.25, 0.0, 0.0, 1.0, 0.5);
  const auto r = gmr::survival_bound_check(1.5, p, gmr::CovarianceKernel::brownian(), 1.0, 200, 2000, 6);
  return {r.applicable && r.pass,
          fmt("sigma_bar^2=%.4f, empirical %.4f >= bound %.4f - 2*%.4f", r.sigma_bar2, r.empirical, r.bound,
              r.standard_error)};
}

Outcome covariance_validation() {
  const auto grid = gmr::uniform_grid(1.0, 32);
  const auto p = params(1.0, 0.0, 1.5, 1.0, 0.6);
  double worst_z = 0.0;
  for (const auto& kernel : {gmr::CovarianceKernel::brownian(), gmr::CovarianceKernel::fbm(0.7)}) {
    const gmr::GaussianSampler sampler(kernel, grid);
    const gmr::TildeWOperator op(p, grid);
    std::vector<gmr::SamplePath> tw;
    for (std::uint64_t i = 0; i < 5000; ++i) tw.push_back({grid, op.apply(sampler.sample(707, i).values)});
    for (auto [s, t] : {std::pair{0.25, 0.5}, {0.5, 1.0}, {1.0, 1.0}}) {
      const auto est = gmr::empirical_covariance_estimate(tw, s, t);
      worst_z = std::max(worst_z, std::abs(est.value - gmr::tilde_w_covariance(s, t, p, kernel, grid)) / est.standard_error);
    }
  }
  const auto flat = params(1.0, 0.0, 0.0, 1.3, 0.6);
  double worst_exact = 0.0;
  for (auto [s, t] : {std::pair{0.25, 0.5}, {0.5, 1.0}, {1.0, 1.0}}) {
    const double c = gmr::tilde_w_covariance(s, t, flat, gmr::CovarianceKernel::brownian(), grid);
    worst_exact = std::max(worst_exact, std::abs(c - 1.3 * 1.3 * 0.4 * 0.4 * std::min(s, t)));
  }
  return {worst_z <= 4.0 && worst_exact <= 1e-12,
          fmt("max |MC - exact| = %.2f standard errors; Brownian b=0 closed-form error %.2e", worst_z, worst_exact)};
}

Outcome likelihood_oracle() {
  const auto k = gmr::CovarianceKernel::fbm(0.7);
  const gmr::pk::Theta th{3.0, 0.8, 0.6};
  gmr::pk::PkParams p;
  p.dose = 2.0;
  p.volume = 1.5;
  p.elimination = th.elimination;
  p.sigma = th.sigma;
  p.beta = th.beta;

  const std::vector<double> t1{0.4};
  const double v = gmr::pk::gamma_matrix(p, t1, k)(0, 0);
  const double one = gmr::pk::log_likelihood(th, {{0.4}, {0.55}}, k, 2.0, 1.5);
  const double one_ref = oracle::scalar_log_likelihood(0.55, 0.6, gmr::pk::z_mean(0.4, p), v);

  const std::vector<double> t2{0.3, 0.7};
  const auto g = gmr::pk::gamma_matrix(p, t2, k);
  const double gg[2][2] = {{g(0, 0), g(0, 1)}, {g(1, 0), g(1, 1)}};
  const double m[2] = {gmr::pk::z_mean(0.3, p), gmr::pk::z_mean(0.7, p)};
  const double x[2] = {0.62, 0.21};
  const double two = gmr::pk::log_likelihood(th, {{0.3, 0.7}, {0.62, 0.21}}, k, 2.0, 1.5);
  const double two_ref = oracle::pair_log_likelihood(x, 0.6, m, gg);

  const double neg = gmr::pk::log_likelihood(th, {{0.3, 0.7}, {0.62, 0.0}}, k, 2.0, 1.5);
  const bool indicator = neg == -std::numeric_limits<double>::infinity();
  const double e1 = std::abs(one - one_ref), e2 = std::abs(two - two_ref);
  return {e1 <= 1e-10 && e2 <= 1e-10 && indicator,
          fmt("n=1 error %.2e, n=2 error %.2e, nonpositive data -> %s", e1, e2, indicator ? "-inf" : "finite")};
}

Outcome mle_round_trip() {
  const auto start = std::chrono::steady_clock::now();
  gmr::pk::PkParams truth;
  truth.elimination = 4.0;
  truth.sigma = 1.0;
  truth.beta = 0.8;
  const gmr::pk::Theta star{4.0, 1.0, 0.8};
  const gmr::pk::Theta perturbed{6.0, 1.0, 0.8};
  std::vector<double> fitted, gaps;
  std::size_t rejected = 0;
  for (std::uint64_t seed = 0; fitted.size() < 20; ++seed) {
    const auto path = gmr::pk::simulate_concentration(truth, gmr::CovarianceKernel::brownian(), 1.0, 50, 9000 + seed);
    gmr::pk::ConcentrationSeries obs;
    for (std::size_t i = 1; i <= 50; ++i) {
      obs.times.push_back(path.path.times[i]);
      obs.concentrations.push_back(path.path.values[i]);
    }
    // A path absorbed at zero carries no likelihood; such datasets are redrawn.
    if (path.hit_index) {
      ++rejected;
      continue;
    }
    const gmr::pk::LikelihoodModel model(obs, gmr::CovarianceKernel::brownian(), 1.0, 1.0, 200);
    const auto est = gmr::pk::fit_mle(model, {2.0, 0.5, 0.6});
    fitted.push_back(est.theta.elimination);
    gaps.push_back(model.log_likelihood(star) - model.log_likelihood(perturbed));
  }
  std::vector<double> sorted = fitted;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[9] + sorted[10]);
  const double gap = gmr::mean(gaps);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {median >= 2.8 && median <= 5.2 && gap > 0.0 && secs < 120.0,
          fmt("median fitted Ke %.3f, mean log-lik gap %.3f, %zu datasets redrawn, runtime %.1f s", median, gap,
              rejected, secs)};
}

Outcome sensitivity_cross_check() {
  gmr::pk::PkParams pk;
  pk.elimination = 4.0;
  pk.sigma = 1.0;
  pk.beta = 0.8;
  gmr::pk::SensitivitySpec s;
  s.F = [](double r) { return r * r; };
  s.Fdot = [](double r) { return 2.0 * r; };
  s.tau_kind = gmr::pk::TauKind::fixed_time;
  s.horizon = 1.0;
  s.steps = 200;
  s.tau_time = 0.5;
  s.paths = 5000;
  s.seed = 1010;
  s.common_random_numbers = true;
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  const auto pl = gmr::pk::sensitivity_plsin(pk, 1.0, s, k);
  const auto fd = gmr::pk::sensitivity_fd(pk, 1.0, s, k, 0.02);
  const double se = std::hypot(pl.std_error, fd.std_error);
  const double gap = std::abs(pl.estimate - fd.estimate);

  auto lin = s;
  lin.F = [](double r) { return r; };
  lin.Fdot = [](double) { return 1.0; };
  lin.paths = 10;
  auto quiet = pk;
  quiet.sigma = 0.0;
  const double exact_err = std::abs(gmr::pk::sensitivity_plsin(quiet, 1.0, lin, k).estimate - std::exp(-2.0));
  return {gap <= 3.0 * se && exact_err <= 1e-12,
          fmt("plsin %.5f vs fd %.5f, |diff| = %.2f combined SE; linear noise-free error %.2e", pl.estimate,
              fd.estimate, gap / se, exact_err)};
}

Outcome scaling_identity() {
  const auto r = gmr::scaling_identity_check(params(1.0, 1.0, 1.0, 0.3, 0.7), 0.75, 0.5, 1.0, 2000, 128, 1111);
  return {r.p_value > 0.01, fmt("KS statistic %.4f, p-value %.3f", r.statistic, r.p_value)};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(GMRSIM_PATH) + " " + args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome bolus_concentration_paths() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gmr_acceptance_fig1";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  std::string detail;
  for (const char* h : {"0.6", "0.9"}) {
    const fs::path cfg = dir / (std::string("fig1_") + h + ".json");
    std::ofstream(cfg) << "{\"seed\": 1, \"pk\": {\"dose\": 1, \"volume\": 1, \"elimination\": 4, \"sigma\": 1, "
                          "\"beta\": 0.8}, \"kernel\": {\"type\": \"fbm\", \"hurst\": "
                       << h << "}, \"grid\": {\"horizon\": 1, \"steps\": 200}}";
    const fs::path out = dir / h;
    if (run_cli("pk-simulate --config " + cfg.string() + " --out " + out.string()) != 0) {
      ok = false;
      detail += fmt("H=%s: CLI failed; ", h);
      continue;
    }
    std::ifstream in(out / "pk_simulate.csv");
    std::string line;
    std::getline(in, line);
    ok = ok && line == "t,stochastic,deterministic";
    double worst_det = 0.0, min_stoch = std::numeric_limits<double>::infinity();
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      double t = 0, s = 0, d = 0;
      if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &s, &d) != 3) {
        ok = false;
        break;
      }
      ++rows;
      worst_det = std::max(worst_det, std::abs(d - std::exp(-4.0 * t)));
      min_stoch = std::min(min_stoch, s);
    }
    ok = ok && rows == 201 && worst_det <= 1e-12 && min_stoch >= 0.0;
    detail += fmt("H=%s: %zu rows, min stochastic %.3e, deterministic error %.2e; ", h, rows, min_stoch, worst_det);
  }
  fs::remove_all(dir);
  return {ok, detail};
}

// Ensembles whose only purpose here is to feed the positivity / bound ledger.
void ledger_ensembles() {
  struct Case {
    gmr::ModelParams p;
    gmr::CovarianceKernel k;
  };
  const std::vector<Case> cases{
      {params(1.0, 1.0, 1.0, 0.5, 0.7), gmr::CovarianceKernel::fbm(0.8)},
      {params(0.3, 0.2, 3.0, 1.5, 0.6), gmr::CovarianceKernel::fbm(0.6)},
      {params(2.0, 1.0, 0.0, 1.0, 0.8), gmr::CovarianceKernel::fbm(0.9)},
      {params(1.0, 0.5, 2.0, 1.0, 0.55), gmr::CovarianceKernel::brownian()},
      {params(1.0, 0.0, 4.0, 1.0, 0.8), gmr::CovarianceKernel::fbm(0.6)},
  };
  std::uint64_t seed = 400;
  for (const auto& c : cases) {
    gmr::EnsembleSpec s;
    s.params = c.p;
    s.kernel = c.k;
    s.paths = 1000;
    s.steps = 128;
    s.horizon = 1.0;
    s.seed = seed++;
    g_ledger.run(s);
  }
}

Outcome positivity_and_bounds() {
  ledger_ensembles();
  const bool ok = g_ledger.nonpositive == 0 && g_ledger.violations == 0 && g_ledger.min_y > 0.0;
  return {ok, fmt("%zu ensembles, %zu paths: min y node %.3e, nonpositive nodes %zu, sup-bound violations %zu",
                  g_ledger.ensembles, g_ledger.paths, g_ledger.min_y, g_ledger.nonpositive, g_ledger.violations)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"root solver vs bisection oracle", root_solver_oracle},
      {"noise-free ODE oracle", ode_oracle},
      {"convergence rate fBm H=0.9, beta=0.8", convergence_rate},
      {"positivity and sup bounds", positivity_and_bounds},
      {"monotonicity in (a, b)", monotonicity},
      {"survival probability bound", survival},
      {"weighted driver covariance", covariance_validation},
      {"likelihood closed forms", likelihood_oracle},
      {"MLE round trip", mle_round_trip},
      {"sensitivity pathwise vs finite difference", sensitivity_cross_check},
      {"distributional scaling (KS)", scaling_identity},
      {"bolus concentration paths", bolus_concentration_paths},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
