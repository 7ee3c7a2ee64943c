#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace sldi {

/// Strictly increasing simulation knots; knots.front() == t0, knots.back() == t1.
class TimeGrid {
 public:
  TimeGrid() : knots_{0.0} {}
  explicit TimeGrid(std::vector<double> knots);

  static TimeGrid uniform(double t0, double t1, std::size_t steps);
  /// Steps of size dt from t0; the final step is shortened to land on t1.
  static TimeGrid with_step(double t0, double t1, double dt);

  /// Grid with the extra times inserted as knots. Times within `snap` of an
  /// existing knot reuse that knot. Extra times must lie in [t0, t1].
  TimeGrid merged(std::span<const double> extra, double snap = 1e-10) const;

  double t0() const noexcept { return knots_.front(); }
  double t1() const noexcept { return knots_.back(); }
  std::size_t size() const noexcept { return knots_.size(); }
  std::size_t steps() const noexcept { return knots_.size() - 1; }
  double operator[](std::size_t k) const noexcept { return knots_[k]; }
  double dt(std::size_t k) const noexcept { return knots_[k + 1] - knots_[k]; }
  const std::vector<double>& knots() const noexcept { return knots_; }

  /// Knot index of t, if t coincides with a knot to within tol.
  std::optional<std::size_t> index_of(double t, double tol = 1e-10) const;

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> knots_;
};

}  // namespace sldi
