#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "sldi/time_grid.hpp"

namespace sldi {

/// Brownian increments on a grid: column k holds dW over [knots[k], knots[k+1]].
struct BrownianPath {
  std::uint64_t seed = 0;
  Eigen::MatrixXd increments;  // m x steps

  Eigen::Index dim() const noexcept { return increments.rows(); }
  std::size_t steps() const noexcept { return static_cast<std::size_t>(increments.cols()); }

  BrownianPath antithetic() const { return {seed, -increments}; }
};

/// Increments sqrt(dt_k) * eps with eps ~ N(0, I_m); deterministic in seed.
BrownianPath sample_brownian(const TimeGrid& grid, Eigen::Index m, std::uint64_t seed);

/// Sum the increments of `fine` over each step of `coarse`. Every coarse knot
/// must also be a knot of `fine_grid`.
BrownianPath coarsen(const BrownianPath& fine, const TimeGrid& fine_grid, const TimeGrid& coarse);

}  // namespace sldi
