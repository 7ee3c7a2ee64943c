#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Core>

#include "sldi/errors.hpp"

namespace sldi {

/// Central differences on the coordinates where mask != 0; others are zero.
/// Throws NumericalBlowup if the loss is non-finite at a probe.
inline Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& loss,
                                        const Eigen::VectorXd& params, double h, const Eigen::VectorXd& mask) {
  if (!(h > 0.0)) throw InvalidInput("finite-difference step must be positive");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd x = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double orig = x[i];
    x[i] = orig + h;
    const double up = loss(x);
    x[i] = orig - h;
    const double down = loss(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericalBlowup(static_cast<std::size_t>(i), "non-finite loss");
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
/// Throws NumericalBlowup if the loss is non-finite at a probe.
inline Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& loss,
                                        const Eigen::VectorXd& params, double h) {
  return finite_diff_grad(loss, params, h, Eigen::VectorXd::Ones(params.size()));
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace sldi
