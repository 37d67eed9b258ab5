#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmr {

/// Bad input: out-of-range parameters, malformed grids, unreadable data.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not produce a result (factorization, root finding).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A function sampled on a time grid. Times start at 0 and strictly increase.
struct SamplePath {
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return times.size(); }
  double horizon() const { return times.back(); }

  /// Throws ValidationError unless times[0] == 0, times strictly increase and
  /// both vectors have the same length >= 2.
  void validate() const;
};

/// n+1 equally spaced times on [0, horizon]; the last node is exactly `horizon`.
std::vector<double> uniform_grid(double horizon, std::size_t steps);

/// Index of `t` in `times`, matched to a relative tolerance of 1e-9.
std::optional<std::size_t> find_time(std::span<const double> times, double t);

/// Same as find_time but throws ValidationError naming `what` on a miss.
std::size_t require_time(std::span<const double> times, double t, const char* what);

/// Every `stride`-th node of `path`; stride must divide size()-1.
SamplePath subsample(const SamplePath& path, std::size_t stride);

double sup_norm(std::span<const double> values);

/// `%.17g` formatting, the representation used for every CSV cell.
std::string format_double(double v);

/// Header `t,value`, one row per node.
void write_csv(std::ostream& out, const SamplePath& path);

}  // namespace gmr
