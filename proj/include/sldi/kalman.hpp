#pragma once

#include <vector>

#include <Eigen/Core>

#include "sldi/gaussian.hpp"
#include "sldi/observation.hpp"
#include "sldi/time_grid.hpp"

namespace sldi {

/// dz = A z dt + B dW, x_j = C z(t_j) + N(0, R), z(t0) ~ prior.
struct LinearGaussianSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd R;  // diagonal, positive
  GaussianDist prior;

  /// Throws ShapeError / InvalidInput on inconsistent shapes or a non-positive R diagonal.
  void validate() const;
};

struct SmootherResult {
  std::vector<Eigen::VectorXd> means;      // smoothed, one per knot
  std::vector<Eigen::MatrixXd> covs;
  std::vector<Eigen::VectorXd> filtered_means;
  std::vector<Eigen::MatrixXd> filtered_covs;
  /// Log-density of each innovation, in observation order.
  std::vector<double> innovation_logpdf;
  double log_likelihood = 0.0;
};

/// Exact-discretisation Kalman filter and Rauch-Tung-Striebel smoother on the
/// knots of `grid`; every observation time must be a knot.
/// Throws GridError for an off-grid observation and NumericsError for a
/// singular innovation covariance.
SmootherResult kalman_smoother(const LinearGaussianSystem& sys, const ObservationSeq& obs, const TimeGrid& grid);

}  // namespace sldi
