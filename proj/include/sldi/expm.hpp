#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/LU>

#include "sldi/errors.hpp"

namespace sldi {

/// Matrix exponential by scaling and squaring with the diagonal (6, 6) Pade approximant.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> expm(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using std::ceil;
  using std::log2;
  using std::max;
  if (A.rows() != A.cols()) throw ShapeError("matrix exponential of a non-square matrix");
  const Eigen::Index n = A.rows();
  if (n == 0) return A;
  if (!A.allFinite()) throw NumericsError("matrix exponential of a non-finite matrix");

  const Scalar norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  if (norm > Scalar(0.5)) s = static_cast<int>(max(Scalar(0), ceil(log2(norm / Scalar(0.5)))));
  const Mat X = A / std::ldexp(Scalar(1), s);

  constexpr int q = 6;
  Scalar c(1);
  Mat term = Mat::Identity(n, n);
  Mat N = Mat::Identity(n, n), D = Mat::Identity(n, n);
  for (int k = 1; k <= q; ++k) {
    c = c * Scalar(q - k + 1) / Scalar(k * (2 * q - k + 1));
    term = term * X;
    N += c * term;
    D += (k % 2 == 0 ? c : -c) * term;
  }
  Mat E = D.partialPivLu().solve(N);
  for (int i = 0; i < s; ++i) E = E * E;
  return E;
}

/// Exact discretisation of dz = A z dt + B dW over a step dt:
/// F = exp(A dt), Q = int_0^dt exp(A s) B B^T exp(A^T s) ds, via the block-matrix exponential.
template <typename Scalar>
void discretize_linear(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B, Scalar dt,
                       Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& F,
                       Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Q) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index d = A.rows();
  Mat M = Mat::Zero(2 * d, 2 * d);
  M.topLeftCorner(d, d) = -A * dt;
  M.topRightCorner(d, d) = B * B.transpose() * dt;
  M.bottomRightCorner(d, d) = A.transpose() * dt;
  const Mat E = expm<Scalar>(M);
  F = E.bottomRightCorner(d, d).transpose();
  Q = F * E.topRightCorner(d, d);
  Q = (Q + Q.transpose()).eval() / Scalar(2);
}

/// Mean and variance of the scalar OU process dz = -theta z dt + sigma dW started at z0.
template <typename Scalar>
struct OuMoments {
  Scalar mean;
  Scalar variance;
};

template <typename Scalar>
OuMoments<Scalar> ou_statistics(Scalar theta, Scalar sigma, Scalar z0, Scalar t) {
  using std::exp;
  if (!(theta > Scalar(0))) throw InvalidInput("OU rate must be positive");
  return {z0 * exp(-theta * t), sigma * sigma * (Scalar(1) - exp(Scalar(-2) * theta * t)) / (Scalar(2) * theta)};
}

}  // namespace sldi
