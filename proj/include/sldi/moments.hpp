#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "sldi/errors.hpp"
#include "sldi/time_grid.hpp"

namespace sldi {

template <typename Scalar>
struct MomentPath {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<Vec> mean;
  std::vector<Mat> cov;
};

/// Mean and covariance of dz = A z dt + B dW on every knot of `grid`:
///   dm/dt = A m,  dP/dt = A P + P A^T + B B^T,
/// integrated by classical RK4 with `substeps` equal sub-steps per grid step.
/// Covariances are symmetrised after each step.
template <typename Scalar>
MomentPath<Scalar> moment_ode_solve(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& mean0,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cov0,
                                    const TimeGrid& grid, int substeps = 8) {
  using Mat = typename MomentPath<Scalar>::Mat;
  using Vec = typename MomentPath<Scalar>::Vec;
  const auto d = A.rows();
  if (A.cols() != d || B.rows() != d || mean0.size() != d || cov0.rows() != d || cov0.cols() != d)
    throw ShapeError("moment equations: inconsistent dimensions");
  if (!cov0.isApprox(cov0.transpose(), Scalar(1e-12)) && (cov0 - cov0.transpose()).norm() > Scalar(1e-12))
    throw InvalidInput("initial covariance is not symmetric");
  if (d > 0) {
    const Eigen::SelfAdjointEigenSolver<Mat> eig(cov0);
    const Scalar floor = -Scalar(1e-12) * std::max(Scalar(1), cov0.norm());
    if (eig.eigenvalues().minCoeff() < floor) throw InvalidInput("initial covariance is not positive semidefinite");
  }
  const Mat Q = B * B.transpose();
  auto dP = [&](const Mat& P) -> Mat { return A * P + P * A.transpose() + Q; };

  MomentPath<Scalar> out;
  out.mean.reserve(grid.size());
  out.cov.reserve(grid.size());
  Vec m = mean0;
  Mat P = cov0;
  out.mean.push_back(m);
  out.cov.push_back(P);
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const Scalar h = Scalar(grid.dt(k)) / Scalar(substeps);
    for (int s = 0; s < substeps; ++s) {
      const Vec k1 = A * m, k2 = A * (m + h / 2 * k1), k3 = A * (m + h / 2 * k2), k4 = A * (m + h * k3);
      m += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      const Mat p1 = dP(P), p2 = dP(P + h / 2 * p1), p3 = dP(P + h / 2 * p2), p4 = dP(P + h * p3);
      P += h / 6 * (p1 + 2 * p2 + 2 * p3 + p4);
      P = (P + P.transpose()).eval() / Scalar(2);
    }
    out.mean.push_back(m);
    out.cov.push_back(P);
  }
  return out;
}

}  // namespace sldi
