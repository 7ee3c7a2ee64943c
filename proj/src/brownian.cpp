#include "sldi/brownian.hpp"

#include <cmath>

#include "sldi/errors.hpp"
#include "sldi/rng.hpp"

namespace sldi {

BrownianPath sample_brownian(const TimeGrid& grid, Eigen::Index m, std::uint64_t seed) {
  if (m < 1) throw InvalidInput("Brownian dimension must be at least 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  BrownianPath path{seed, Eigen::MatrixXd(m, static_cast<Eigen::Index>(grid.steps()))};
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double scale = std::sqrt(grid.dt(k));
    for (Eigen::Index i = 0; i < m; ++i) path.increments(i, static_cast<Eigen::Index>(k)) = scale * normal(rng);
  }
  return path;
}

BrownianPath coarsen(const BrownianPath& fine, const TimeGrid& fine_grid, const TimeGrid& coarse) {
  if (fine.steps() != fine_grid.steps()) throw GridError("noise does not match the fine grid");
  BrownianPath out{fine.seed, Eigen::MatrixXd::Zero(fine.dim(), static_cast<Eigen::Index>(coarse.steps()))};
  std::size_t f = 0;
  const auto first = fine_grid.index_of(coarse.t0());
  if (!first) throw GridError("coarse grid start is not a fine knot");
  f = *first;
  for (std::size_t k = 0; k < coarse.steps(); ++k) {
    const auto end = fine_grid.index_of(coarse[k + 1]);
    if (!end || *end <= f) throw GridError("coarse knot is not a fine knot");
    for (; f < *end; ++f) out.increments.col(static_cast<Eigen::Index>(k)) += fine.increments.col(static_cast<Eigen::Index>(f));
  }
  return out;
}

}  // namespace sldi
