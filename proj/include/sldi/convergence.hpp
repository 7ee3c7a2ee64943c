#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sldi/sde.hpp"

namespace sldi {

/// SDE fixtures with closed-form solutions.
struct AnalyticFixture {
  enum class Kind { gbm, ou };
  Kind kind = Kind::gbm;
  double z0 = 1.0;
  double horizon = 1.0;
  double rate = 2.0;  // GBM drift r, or OU mean reversion theta
  double vol = 1.0;   // GBM volatility, or OU sigma

  /// "gbm" or "ou"; throws InvalidInput otherwise.
  static AnalyticFixture named(const std::string& name);
  double exact_mean() const;
};

struct ErrorRow {
  double dt = 0.0;
  double strong = 0.0;  // E|Z_T^num - Z_T^ref|
  double weak = 0.0;    // |E[Z_T^num - Z_T^ref]|, coupled estimator
  double strong_se = 0.0;
};

struct ErrorTable {
  std::vector<ErrorRow> rows;
  std::optional<double> strong_slope;  // absent for fewer than two rows
  std::optional<double> weak_slope;
};

/// Least-squares slope of log(y) against log(x); absent for fewer than two points.
std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Strong and weak terminal errors of `scheme` for each step size. Every path
/// draws its Brownian increments on the finest grid (reference grid for OU);
/// coarser schemes use the summed increments, so all rows share the same noise.
/// GBM is compared with its exact solution; OU with an exponential-integrator
/// reference on a 16x refined grid.
ErrorTable strong_weak_error(const AnalyticFixture& fixture, Scheme scheme, const std::vector<double>& dts,
                             std::size_t n_paths, std::uint64_t seed);

}  // namespace sldi
