#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/errors.hpp"
#include "sldi/param_store.hpp"
#include "sldi/rng.hpp"

namespace sldi {

/// Power-iteration estimate of the largest singular value of W. The start
/// vector is drawn from `seed`, so the estimate is deterministic and
/// non-decreasing in `iters`. With rel_tol > 0 the iteration continues past
/// `iters`, up to `max_iters`, until two successive estimates agree to rel_tol.
template <typename Derived>
typename Derived::Scalar spectral_norm_estimate(const Eigen::MatrixBase<Derived>& W, int iters,
                                                std::uint64_t seed = 0, double rel_tol = 0.0,
                                                int max_iters = 0) {
  using Scalar = typename Derived::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (W.rows() == 0 || W.cols() == 0) throw ShapeError("spectral norm of an empty matrix");
  if (iters < 1) throw InvalidInput("power iteration needs at least one iteration");
  Rng rng(seed);
  Vec v = standard_normal(rng, W.cols()).template cast<Scalar>();
  v.normalize();
  Scalar sigma(0);
  const int cap = std::max(iters, max_iters);
  for (int i = 0; i < cap; ++i) {
    Vec u = W * v;
    const Scalar previous = sigma;
    sigma = u.norm();
    if (sigma == Scalar(0)) return sigma;
    if (i >= iters && std::abs(sigma - previous) <= Scalar(rel_tol) * sigma) break;
    Vec next = W.transpose() * u;
    const Scalar n = next.norm();
    if (n == Scalar(0)) return sigma;
    v = next / n;
  }
  return std::max(sigma, static_cast<Scalar>((W * v).norm()));
}

struct SpectralOptions {
  double bound = 2.0;
  int iters = 50;
  std::uint64_t seed = 0;
  /// Continue past `iters` until successive estimates agree to this relative tolerance.
  double rel_tol = 1e-12;
  int max_iters = 20000;
};

/// Rescale every 2-D tensor whose name starts with one of `prefixes` and whose
/// estimated spectral norm exceeds the bound (relative slack 1e-12) by bound / sigma. Other tensors
/// are returned bit-identical.
ParamStore spectral_project(ParamStore params, const std::vector<std::string>& prefixes,
                            const SpectralOptions& opts = {});

/// Largest estimated spectral norm over the selected 2-D tensors.
double max_spectral_norm(const ParamStore& params, const std::vector<std::string>& prefixes,
                         const SpectralOptions& opts = {});

/// Xavier-uniform weights (U(-b, b), b = sqrt(6 / (fan_in + fan_out))) for
/// every 2-D tensor and zero for everything else, in registration order.
void xavier_init(ParamStore& params, std::uint64_t seed);

}  // namespace sldi
