#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "gmr/pk.hpp"
#include "gmr/stats.hpp"
#include "oracles.hpp"

namespace {

using gmr::pk::PkParams;

PkParams pk_params(double ke, double sigma, double beta, double dose = 1.0, double volume = 1.0,
                   double ka = 0.0) {
  PkParams p;
  p.dose = dose;
  p.volume = volume;
  p.absorption = ka;
  p.elimination = ke;
  p.sigma = sigma;
  p.beta = beta;
  return p;
}

// Observations at t_i = i / n from one simulated path, as the estimation tests use them.
gmr::pk::ConcentrationSeries synthetic(const PkParams& truth, std::size_t n, std::uint64_t seed) {
  const auto path = gmr::pk::simulate_concentration(truth, gmr::CovarianceKernel::brownian(), 1.0, n, seed);
  gmr::pk::ConcentrationSeries s;
  for (std::size_t i = 1; i <= n; ++i) {
    s.times.push_back(path.path.times[i]);
    s.concentrations.push_back(path.path.values[i]);
  }
  return s;
}

TEST(Deterministic, AbsorptionStartsAtZero) {
  EXPECT_EQ(gmr::pk::deterministic_concentration(pk_params(4.0, 1.0, 0.8, 1.0, 1.0, 1.0), 0.0), 0.0);
}

TEST(Deterministic, BolusStartsAtDoseOverVolume) {
  EXPECT_DOUBLE_EQ(gmr::pk::deterministic_concentration(pk_params(4.0, 1.0, 0.8, 3.0, 2.0), 0.0), 1.5);
}

TEST(Deterministic, TwoExponentials) {
  const double c = gmr::pk::deterministic_concentration(pk_params(4.0, 1.0, 0.8, 1.0, 1.0, 1.0), 1.0);
  EXPECT_NEAR(c, (std::exp(-1.0) - std::exp(-4.0)) / 3.0, 1e-15);
  EXPECT_NEAR(c, 0.116521, 1e-6);
}

TEST(Deterministic, EqualRatesLimit) {
  const auto p = pk_params(2.0, 1.0, 0.8, 1.0, 1.0, 2.0);
  const auto q = pk_params(2.0, 1.0, 0.8, 1.0, 1.0, 2.0 + 1e-7);
  EXPECT_NEAR(gmr::pk::deterministic_concentration(p, 0.7), gmr::pk::deterministic_concentration(q, 0.7), 1e-7);
}

TEST(Simulate, NoNoiseIsExponentialDecay) {
  const auto p = pk_params(4.0, 0.0, 0.8, 2.0, 1.0);
  const auto path = gmr::pk::simulate_concentration(p, gmr::CovarianceKernel::fbm(0.9), 1.0, 40, 1);
  EXPECT_FALSE(path.hit_index.has_value());
  for (std::size_t k = 0; k < path.path.size(); ++k) {
    EXPECT_NEAR(path.path.values[k], 2.0 * std::exp(-4.0 * path.path.times[k]), 1e-14);
  }
}

TEST(Simulate, SameSeedSamePath) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  const auto k = gmr::CovarianceKernel::fbm(0.9);
  EXPECT_EQ(gmr::pk::simulate_concentration(p, k, 1.0, 100, 5).path.values,
            gmr::pk::simulate_concentration(p, k, 1.0, 100, 5).path.values);
}

TEST(Simulate, NonnegativeAndAbsorbedAfterHit) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto path = gmr::pk::simulate_concentration(p, gmr::CovarianceKernel::fbm(0.6), 2.0, 200, seed);
    const std::size_t stop = path.hit_index.value_or(path.path.size());
    hits += path.hit_index.has_value();
    for (std::size_t k = 0; k < path.path.size(); ++k) {
      if (k < stop) EXPECT_GT(path.path.values[k], 0.0);
      else EXPECT_EQ(path.path.values[k], 0.0);
    }
  }
  EXPECT_GT(hits, 0u);
}

TEST(Simulate, BolusDecayTrend) {
  // Ke = 4, sigma = 1, beta = 0.8, A0 = v, H = 0.9: log-concentration over
  // [0, 0.5] trends at -4 within 50%.
  const auto p = pk_params(4.0, 1.0, 0.8);
  std::vector<double> slopes;
  for (std::uint64_t seed = 1; seed <= 9; ++seed) {
    const auto path = gmr::pk::simulate_concentration(p, gmr::CovarianceKernel::fbm(0.9), 1.0, 100, seed);
    std::vector<double> t, logc;
    for (std::size_t k = 0; k <= 50; ++k) {
      ASSERT_GE(path.path.values[k], 0.0);
      if (path.path.values[k] > 0.0) {
        t.push_back(path.path.times[k]);
        logc.push_back(std::log(path.path.values[k]));
      }
    }
    slopes.push_back(gmr::least_squares_slope(t, logc));
  }
  std::nth_element(slopes.begin(), slopes.begin() + 4, slopes.end());
  EXPECT_GE(slopes[4], -6.0);
  EXPECT_LE(slopes[4], -2.0);
}

TEST(ZMean, Cases) {
  EXPECT_NEAR(gmr::pk::z_mean(0.0, pk_params(4.0, 1.0, 0.8, 3.0, 1.0)), std::pow(3.0, 0.2), 1e-15);
  EXPECT_NEAR(gmr::pk::z_mean(0.7, pk_params(4.0, 1.0, 0.6, 2.0, 2.0)), std::exp(-4.0 * 0.4 * 0.7), 1e-15);
  const double v = gmr::pk::z_mean(0.5, pk_params(4.0, 1.0, 0.8, 2.0, 1.0));
  EXPECT_NEAR(v, std::pow(2.0, 0.2) * std::exp(-0.4), 1e-15);
  EXPECT_NEAR(v, 0.769995534, 1e-9);
}

TEST(GammaMatrix, ZeroNoise) {
  const std::vector<double> t{0.2, 0.5, 1.0};
  const auto g = gmr::pk::gamma_matrix(pk_params(4.0, 0.0, 0.8), t, gmr::CovarianceKernel::brownian());
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GammaMatrix, BrownianSlowEliminationLimit) {
  const std::vector<double> t{1.0, 2.0};
  const auto g = gmr::pk::gamma_matrix(pk_params(1e-12, 1.0, 0.5), t, gmr::CovarianceKernel::brownian());
  EXPECT_NEAR(g(0, 0), 0.25, 1e-9);
  EXPECT_NEAR(g(0, 1), 0.25, 1e-9);
  EXPECT_NEAR(g(1, 0), 0.25, 1e-9);
  EXPECT_NEAR(g(1, 1), 0.5, 1e-9);
}

TEST(GammaMatrix, BrownianClosedForm) {
  // Cov(w~_s, w~_t) = int_0^{s^t} theta_u^2 du for a Brownian driver.
  const double ke = 3.0, sigma = 1.2, beta = 0.7, c = 1.0 - beta;
  const std::vector<double> t{0.25, 0.6, 1.0};
  const auto g = gmr::pk::gamma_matrix(pk_params(ke, sigma, beta), t, gmr::CovarianceKernel::brownian(), 2000);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double m = std::min(t[i], t[j]);
      const double cov = sigma * sigma * c * c * (std::exp(2 * ke * c * m) - 1.0) / (2 * ke * c);
      EXPECT_NEAR(g(i, j), std::exp(-ke * c * (t[i] + t[j])) * cov, 1e-6) << i << j;
      EXPECT_EQ(g(i, j), g(j, i));
    }
  }
}

TEST(GammaMatrix, DampingShrinksVarianceGrowth) {
  // Var(Z_t) = sigma^2 c^2 (1 - e^(-2 Ke c t)) / (2 Ke c) grows more slowly with larger Ke.
  const std::vector<double> t{0.5, 1.0};
  const auto slow = gmr::pk::gamma_matrix(pk_params(1.0, 1.0, 0.6), t, gmr::CovarianceKernel::brownian());
  const auto fast = gmr::pk::gamma_matrix(pk_params(5.0, 1.0, 0.6), t, gmr::CovarianceKernel::brownian());
  EXPECT_LT(fast(1, 1), slow(1, 1));
  EXPECT_LT(fast(0, 1), slow(0, 1));
  EXPECT_LT(fast(0, 1), fast(0, 0));
}

TEST(Likelihood, SingleObservationClosedForm) {
  const auto k = gmr::CovarianceKernel::fbm(0.7);
  const gmr::pk::Theta th{3.0, 0.8, 0.6};
  const auto p = pk_params(th.elimination, th.sigma, th.beta, 2.0, 1.5);
  const std::vector<double> t{0.4};
  const double v = gmr::pk::gamma_matrix(p, t, k)(0, 0);
  const double m = gmr::pk::z_mean(0.4, p);
  const gmr::pk::ConcentrationSeries obs{{0.4}, {0.55}};
  EXPECT_NEAR(gmr::pk::log_likelihood(th, obs, k, 2.0, 1.5), oracle::scalar_log_likelihood(0.55, 0.6, m, v), 1e-10);
}

TEST(Likelihood, PairClosedForm) {
  const auto k = gmr::CovarianceKernel::brownian();
  const gmr::pk::Theta th{4.0, 1.0, 0.8};
  const auto p = pk_params(th.elimination, th.sigma, th.beta);
  const std::vector<double> t{0.3, 0.7};
  const auto g = gmr::pk::gamma_matrix(p, t, k);
  const double gg[2][2] = {{g(0, 0), g(0, 1)}, {g(1, 0), g(1, 1)}};
  const double m[2] = {gmr::pk::z_mean(0.3, p), gmr::pk::z_mean(0.7, p)};
  const double x[2] = {0.31, 0.052};
  const gmr::pk::ConcentrationSeries obs{{0.3, 0.7}, {0.31, 0.052}};
  EXPECT_NEAR(gmr::pk::log_likelihood(th, obs, k, 1.0, 1.0), oracle::pair_log_likelihood(x, 0.8, m, gg), 1e-10);
}

TEST(Likelihood, NonpositiveObservationIsMinusInfinity) {
  const auto k = gmr::CovarianceKernel::brownian();
  const gmr::pk::Theta th{4.0, 1.0, 0.8};
  for (double bad : {0.0, -0.2}) {
    const gmr::pk::ConcentrationSeries obs{{0.3, 0.7}, {0.31, bad}};
    const double ll = gmr::pk::log_likelihood(th, obs, k, 1.0, 1.0);
    EXPECT_TRUE(std::isinf(ll) && ll < 0);
  }
}

TEST(Likelihood, PermutationInvariant) {
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  const gmr::pk::Theta th{4.0, 1.0, 0.8};
  const gmr::pk::ConcentrationSeries a{{0.1, 0.4, 0.9}, {0.7, 0.2, 0.03}};
  const gmr::pk::ConcentrationSeries b{{0.9, 0.1, 0.4}, {0.03, 0.7, 0.2}};
  EXPECT_EQ(gmr::pk::log_likelihood(th, a, k, 1.0, 1.0), gmr::pk::log_likelihood(th, b, k, 1.0, 1.0));
}

TEST(Likelihood, RejectsBadTheta) {
  const gmr::pk::ConcentrationSeries obs{{0.5}, {0.2}};
  const auto k = gmr::CovarianceKernel::brownian();
  EXPECT_THROW(gmr::pk::log_likelihood({0.0, 1.0, 0.5}, obs, k, 1, 1), gmr::ValidationError);
  EXPECT_THROW(gmr::pk::log_likelihood({1.0, 0.0, 0.5}, obs, k, 1, 1), gmr::ValidationError);
  EXPECT_THROW(gmr::pk::log_likelihood({1.0, 1.0, 1.0}, obs, k, 1, 1), gmr::ValidationError);
}

TEST(Likelihood, TruthPreferredOverInflatedElimination) {
  const auto truth = pk_params(4.0, 1.0, 0.8);
  const gmr::pk::Theta star{4.0, 1.0, 0.8};
  const gmr::pk::Theta inflated{6.0, 1.0, 0.8};
  std::vector<double> gaps;
  for (std::uint64_t seed = 0; gaps.size() < 50; ++seed) {
    const auto obs = synthetic(truth, 50, 1000 + seed);
    if (*std::min_element(obs.concentrations.begin(), obs.concentrations.end()) <= 0.0) continue;
    const gmr::pk::LikelihoodModel model(obs, gmr::CovarianceKernel::brownian(), 1.0, 1.0);
    gaps.push_back(model.log_likelihood(star) - model.log_likelihood(inflated));
  }
  EXPECT_GT(gmr::mean(gaps), 0.0);
}

TEST(Fit, AscentFromOptimum) {
  const auto obs = synthetic(pk_params(4.0, 1.0, 0.8), 30, 77);
  ASSERT_GT(*std::min_element(obs.concentrations.begin(), obs.concentrations.end()), 0.0);
  const gmr::pk::LikelihoodModel model(obs, gmr::CovarianceKernel::brownian(), 1.0, 1.0);
  const auto first = gmr::pk::fit_mle(model, {4.0, 1.0, 0.8});
  EXPECT_GE(first.log_likelihood, model.log_likelihood({4.0, 1.0, 0.8}));
  const auto again = gmr::pk::fit_mle(model, first.theta);
  EXPECT_GE(again.log_likelihood, first.log_likelihood);
  EXPECT_EQ(again.log_likelihood, model.log_likelihood(again.theta));
}

TEST(Fit, NoAdmissibleParameters) {
  const gmr::pk::ConcentrationSeries obs{{0.2, 0.5}, {0.3, 0.0}};
  const gmr::pk::LikelihoodModel model(obs, gmr::CovarianceKernel::brownian(), 1.0, 1.0);
  try {
    gmr::pk::fit_mle(model, {4.0, 1.0, 0.8});
    FAIL() << "expected NumericalError";
  } catch (const gmr::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("no admissible parameters"), std::string::npos);
  }
}

TEST(Fit, RejectsInitOutsideBounds) {
  const gmr::pk::ConcentrationSeries obs{{0.2, 0.5}, {0.3, 0.1}};
  const gmr::pk::LikelihoodModel model(obs, gmr::CovarianceKernel::brownian(), 1.0, 1.0);
  EXPECT_THROW(gmr::pk::fit_mle(model, {4.0, 1.0, 0.99}), gmr::ValidationError);
}

gmr::pk::SensitivitySpec sens_spec(std::function<double(double)> f, std::function<double(double)> fd,
                                   std::size_t paths, std::uint64_t seed) {
  gmr::pk::SensitivitySpec s;
  s.F = std::move(f);
  s.Fdot = std::move(fd);
  s.tau_kind = gmr::pk::TauKind::fixed_time;
  s.tau_time = 0.5;
  s.paths = paths;
  s.seed = seed;
  s.horizon = 1.0;
  s.steps = 100;
  return s;
}

TEST(Sensitivity, LinearNoiseFreeIsExact) {
  const auto p = pk_params(4.0, 0.0, 0.8);
  const auto s = sens_spec([](double r) { return r; }, [](double) { return 1.0; }, 10, 1);
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  const auto pl = gmr::pk::sensitivity_plsin(p, 1.3, s, k);
  EXPECT_NEAR(pl.estimate, std::exp(-2.0), 1e-12);
  EXPECT_EQ(pl.std_error, 0.0);
  const auto fd = gmr::pk::sensitivity_fd(p, 1.3, s, k, 0.01);
  EXPECT_NEAR(fd.estimate, std::exp(-2.0), 1e-12);
}

TEST(Sensitivity, ConstantObservableHasNoSensitivity) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  const auto s = sens_spec([](double) { return 2.0; }, [](double) { return 0.0; }, 200, 2);
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  EXPECT_EQ(gmr::pk::sensitivity_plsin(p, 1.0, s, k).estimate, 0.0);
  EXPECT_EQ(gmr::pk::sensitivity_fd(p, 1.0, s, k, 0.05).estimate, 0.0);
}

struct Observable {
  const char* name;
  std::function<double(double)> F, Fdot;
};

TEST(Sensitivity, PathwiseAgreesWithFiniteDifference) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  const std::vector<Observable> fs{
      {"identity", [](double r) { return r; }, [](double) { return 1.0; }},
      {"square", [](double r) { return r * r; }, [](double r) { return 2 * r; }},
      {"sin", [](double r) { return std::sin(r); }, [](double r) { return std::cos(r); }},
  };
  for (const auto& f : fs) {
    const auto s = sens_spec(f.F, f.Fdot, 2000, 31);
    const auto pl = gmr::pk::sensitivity_plsin(p, 1.0, s, k);
    const auto fd = gmr::pk::sensitivity_fd(p, 1.0, s, k, 0.02);
    const double se = std::hypot(pl.std_error, fd.std_error);
    EXPECT_LE(std::abs(pl.estimate - fd.estimate), 3.0 * se) << f.name;
  }
}

TEST(Sensitivity, StepHalvingIsStable) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  const auto s = sens_spec([](double r) { return r * r; }, [](double r) { return 2 * r; }, 2000, 8);
  const auto a = gmr::pk::sensitivity_fd(p, 1.0, s, k, 0.04);
  const auto b = gmr::pk::sensitivity_fd(p, 1.0, s, k, 0.02);
  EXPECT_LT(std::abs(a.estimate - b.estimate), 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST(Sensitivity, CommonRandomNumbersReduceVariance) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  auto s = sens_spec([](double r) { return r * r; }, [](double r) { return 2 * r; }, 1000, 12);
  const auto crn = gmr::pk::sensitivity_fd(p, 1.0, s, k, 0.05);
  s.common_random_numbers = false;
  const auto indep = gmr::pk::sensitivity_fd(p, 1.0, s, k, 0.05);
  EXPECT_LE(crn.std_error, indep.std_error);
}

TEST(Sensitivity, HitCappedReportsFraction) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  auto s = sens_spec([](double r) { return r; }, [](double) { return 1.0; }, 500, 3);
  s.tau_kind = gmr::pk::TauKind::hit_capped;
  s.tau_time = 1.0;
  const auto r = gmr::pk::sensitivity_plsin(p, 1.0, s, gmr::CovarianceKernel::fbm(0.6));
  EXPECT_GE(r.capped_fraction, 0.0);
  EXPECT_LE(r.capped_fraction, 1.0);
  EXPECT_TRUE(std::isfinite(r.estimate));
}

TEST(Sensitivity, Validation) {
  const auto p = pk_params(4.0, 1.0, 0.8);
  const auto k = gmr::CovarianceKernel::fbm(0.8);
  const auto s = sens_spec([](double r) { return r; }, [](double) { return 1.0; }, 10, 3);
  EXPECT_THROW(gmr::pk::sensitivity_plsin(p, 0.0, s, k), gmr::ValidationError);
  EXPECT_THROW(gmr::pk::sensitivity_fd(p, 1.0, s, k, 1.0), gmr::ValidationError);
  EXPECT_THROW(gmr::pk::sensitivity_fd(p, 1.0, s, k, 0.0), gmr::ValidationError);
  auto off = s;
  off.tau_time = 0.503;
  EXPECT_THROW(gmr::pk::sensitivity_plsin(p, 1.0, off, k), gmr::ValidationError);
}

TEST(ConcentrationCsv, ReadsConcentrationColumn) {
  std::istringstream in("t,concentration\n0,1\n0.5,0.25\n1,1e-2\n");
  const auto s = gmr::pk::read_concentration_csv(in);
  EXPECT_EQ(s.times, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(s.concentrations, (std::vector<double>{0.25, 0.01}));
}

TEST(ConcentrationCsv, AcceptsSimulationOutput) {
  std::istringstream in("t,stochastic,deterministic\r\n0,1,1\r\n0.5,0.2,0.13\r\n");
  const auto s = gmr::pk::read_concentration_csv(in);
  EXPECT_EQ(s.concentrations, (std::vector<double>{0.2}));
}

TEST(ConcentrationCsv, Errors) {
  std::istringstream missing("t,value\n0.5,1\n");
  EXPECT_THROW(gmr::pk::read_concentration_csv(missing), gmr::ValidationError);
  std::istringstream bad("t,concentration\n0.5,abc\n");
  EXPECT_THROW(gmr::pk::read_concentration_csv(bad), gmr::ValidationError);
  std::istringstream empty("");
  EXPECT_THROW(gmr::pk::read_concentration_csv(empty), gmr::ValidationError);
  std::istringstream dup("t,concentration\n0.5,1\n0.5,2\n");
  EXPECT_THROW(gmr::pk::read_concentration_csv(dup), gmr::ValidationError);
}

TEST(PkParams, Validation) {
  EXPECT_NO_THROW(pk_params(4.0, 0.0, 0.8).validate());
  EXPECT_THROW(pk_params(0.0, 1.0, 0.8).validate(), gmr::ValidationError);
  EXPECT_THROW(pk_params(4.0, -1.0, 0.8).validate(), gmr::ValidationError);
  EXPECT_THROW(pk_params(4.0, 1.0, 1.0).validate(), gmr::ValidationError);
  EXPECT_THROW(pk_params(4.0, 1.0, 0.8, 0.0).validate(), gmr::ValidationError);
  EXPECT_THROW(pk_params(4.0, 1.0, 0.8, 1.0, 1.0, -1.0).validate(), gmr::ValidationError);
}

}  // namespace
