#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace gmr {

struct NelderMeadOptions {
  double initial_step = 0.25;
  /// Stop once the largest distance between two vertices falls below this.
  double diameter_tolerance = 1e-6;
  std::size_t max_iterations = 2000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

/// Derivative-free minimization (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). The objective may return +inf for infeasible points. The
/// starting point is a vertex of the initial simplex, so the returned value
/// never exceeds f(start).
NelderMeadResult nelder_mead_minimize(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> start,
                                      const NelderMeadOptions& options = {});

}  // namespace gmr
