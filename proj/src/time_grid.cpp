#include "sldi/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sldi/errors.hpp"

namespace sldi {

TimeGrid::TimeGrid(std::vector<double> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw GridError("time grid needs at least one knot");
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (!std::isfinite(knots_[k])) throw GridError("non-finite knot " + std::to_string(k));
    if (k > 0 && !(knots_[k] > knots_[k - 1]))
      throw GridError("knots not strictly increasing at index " + std::to_string(k));
  }
}

TimeGrid TimeGrid::uniform(double t0, double t1, std::size_t steps) {
  if (steps == 0) {
    if (t0 != t1) throw GridError("zero-step grid requires t0 == t1");
    return TimeGrid({t0});
  }
  if (!(t1 > t0)) throw GridError("t1 must exceed t0");
  std::vector<double> k(steps + 1);
  const double h = (t1 - t0) / static_cast<double>(steps);
  for (std::size_t i = 0; i <= steps; ++i) k[i] = t0 + h * static_cast<double>(i);
  k.back() = t1;
  return TimeGrid(std::move(k));
}

TimeGrid TimeGrid::with_step(double t0, double t1, double dt) {
  if (!(dt > 0.0)) throw GridError("step size must be positive");
  if (t1 == t0) return TimeGrid({t0});
  if (!(t1 > t0)) throw GridError("t1 must exceed t0");
  const double ratio = (t1 - t0) / dt;
  const auto whole = static_cast<std::size_t>(std::floor(ratio + 1e-9));
  std::vector<double> k;
  k.reserve(whole + 2);
  for (std::size_t i = 0; i <= whole; ++i) k.push_back(t0 + dt * static_cast<double>(i));
  if (t1 - k.back() > 1e-9 * dt)
    k.push_back(t1);
  else
    k.back() = t1;
  return TimeGrid(std::move(k));
}

TimeGrid TimeGrid::merged(std::span<const double> extra, double snap) const {
  std::vector<double> out = knots_;
  for (double t : extra) {
    if (t < t0() - snap || t > t1() + snap) throw GridError("merged time outside the grid horizon");
    if (index_of(t, snap)) continue;
    out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  std::vector<double> dedup;
  dedup.reserve(out.size());
  for (double t : out)
    if (dedup.empty() || t - dedup.back() > snap) dedup.push_back(t);
  return TimeGrid(std::move(dedup));
}

std::optional<std::size_t> TimeGrid::index_of(double t, double tol) const {
  auto it = std::lower_bound(knots_.begin(), knots_.end(), t - tol);
  if (it != knots_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - knots_.begin());
  return std::nullopt;
}

}  // namespace sldi
