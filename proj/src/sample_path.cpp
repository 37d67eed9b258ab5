#include "gmr/sample_path.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace gmr {

void SamplePath::validate() const {
  if (times.size() != values.size()) {
    throw ValidationError("sample path: times and values differ in length");
  }
  if (times.size() < 2) {
    throw ValidationError("sample path: at least two nodes required");
  }
  if (times.front() != 0.0) {
    throw ValidationError("sample path: grid must start at t = 0");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw ValidationError("sample path: times must be strictly increasing");
    }
  }
}

std::vector<double> uniform_grid(double horizon, std::size_t steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ValidationError("grid: horizon must be positive and finite");
  }
  if (steps < 1) {
    throw ValidationError("grid: at least one step required");
  }
  std::vector<double> t(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    t[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  }
  t.back() = horizon;
  return t;
}

std::optional<std::size_t> find_time(std::span<const double> times, double t) {
  if (times.empty()) return std::nullopt;
  const double scale = std::max(1.0, std::abs(times.back()));
  const double tol = 1e-9 * scale;
  auto it = std::lower_bound(times.begin(), times.end(), t - tol);
  if (it != times.end() && std::abs(*it - t) <= tol) {
    return static_cast<std::size_t>(it - times.begin());
  }
  return std::nullopt;
}

std::size_t require_time(std::span<const double> times, double t, const char* what) {
  if (auto idx = find_time(times, t)) return *idx;
  throw ValidationError(std::string(what) + ": time " + format_double(t) +
                        " is not a grid node");
}

SamplePath subsample(const SamplePath& path, std::size_t stride) {
  if (stride == 0 || (path.size() - 1) % stride != 0) {
    throw ValidationError("subsample: stride must divide the number of steps");
  }
  SamplePath out;
  const std::size_t m = (path.size() - 1) / stride + 1;
  out.times.reserve(m);
  out.values.reserve(m);
  for (std::size_t k = 0; k < path.size(); k += stride) {
    out.times.push_back(path.times[k]);
    out.values.push_back(path.values[k]);
  }
  return out;
}

double sup_norm(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& out, const SamplePath& path) {
  out << "t,value\n";
  for (std::size_t i = 0; i < path.size(); ++i) {
    out << format_double(path.times[i]) << ',' << format_double(path.values[i]) << '\n';
  }
}

}  // namespace gmr
