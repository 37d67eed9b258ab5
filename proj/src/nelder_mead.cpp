#include "gmr/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gmr {

namespace {

double diameter(const std::vector<std::vector<double>>& simplex) {
  double d = 0.0;
  for (std::size_t i = 0; i < simplex.size(); ++i) {
    for (std::size_t j = i + 1; j < simplex.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < simplex[i].size(); ++k) {
        const double diff = simplex[i][k] - simplex[j][k];
        s += diff * diff;
      }
      d = std::max(d, std::sqrt(s));
    }
  }
  return d;
}

std::vector<double> blend(const std::vector<double>& a, const std::vector<double>& b, double t) {
  // a + t (b - a)
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + t * (b[k] - a[k]);
  return out;
}

}  // namespace

NelderMeadResult nelder_mead_minimize(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> start,
                                      const NelderMeadOptions& options) {
  const std::size_t dim = start.size();
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<std::vector<double>> simplex{start};
  for (std::size_t k = 0; k < dim; ++k) {
    auto v = start;
    v[k] += options.initial_step;
    simplex.push_back(std::move(v));
  }
  std::vector<double> values;
  for (const auto& v : simplex) values.push_back(eval(v));

  std::vector<std::size_t> order(dim + 1);
  for (; res.iterations < options.max_iterations; ++res.iterations) {
    std::iota(order.begin(), order.end(), 0);
    // Stable sort keeps the earlier vertex first on ties, so the start point
    // is only displaced by a strictly better one.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    {
      std::vector<std::vector<double>> s2;
      std::vector<double> v2;
      for (std::size_t i : order) {
        s2.push_back(simplex[i]);
        v2.push_back(values[i]);
      }
      simplex = std::move(s2);
      values = std::move(v2);
    }
    if (diameter(simplex) < options.diameter_tolerance) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[i][k] / static_cast<double>(dim);
    }
    const auto& worst = simplex[dim];

    const auto reflected = blend(centroid, worst, -1.0);
    const double fr = eval(reflected);
    if (fr < values[0]) {
      const auto expanded = blend(centroid, worst, -2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[dim] = expanded;
        values[dim] = fe;
      } else {
        simplex[dim] = reflected;
        values[dim] = fr;
      }
      continue;
    }
    if (fr < values[dim - 1]) {
      simplex[dim] = reflected;
      values[dim] = fr;
      continue;
    }
    const bool outside = fr < values[dim];
    const auto contracted = outside ? blend(centroid, reflected, 0.5) : blend(centroid, worst, 0.5);
    const double fc = eval(contracted);
    if (fc < (outside ? fr : values[dim])) {
      simplex[dim] = contracted;
      values[dim] = fc;
      continue;
    }
    for (std::size_t i = 1; i <= dim; ++i) {
      simplex[i] = blend(simplex[0], simplex[i], 0.5);
      values[i] = eval(simplex[i]);
    }
  }

  const auto best = static_cast<std::size_t>(
      std::min_element(values.begin(), values.end()) - values.begin());
  res.x = simplex[best];
  res.value = values[best];
  return res;
}

}  // namespace gmr
