#include "sldi/convergence.hpp"

#include <algorithm>
#include <cmath>

#include "sldi/errors.hpp"
#include "sldi/rng.hpp"

namespace sldi {

AnalyticFixture AnalyticFixture::named(const std::string& name) {
  if (name == "gbm") return {};
  if (name == "ou") return {Kind::ou, 1.0, 1.0, 1.0, std::sqrt(2.0)};
  throw InvalidInput("unknown analytic fixture '" + name + "'");
}

double AnalyticFixture::exact_mean() const {
  return kind == Kind::gbm ? z0 * std::exp(rate * horizon) : z0 * std::exp(-rate * horizon);
}

std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / den;
}

ErrorTable strong_weak_error(const AnalyticFixture& fx, Scheme scheme, const std::vector<double>& dts,
                             std::size_t n_paths, std::uint64_t seed) {
  if (dts.empty() || n_paths == 0) throw InvalidInput("need at least one step size and one path");
  double finest = *std::min_element(dts.begin(), dts.end());
  if (!(finest > 0.0)) throw InvalidInput("step sizes must be positive");
  const bool gbm = fx.kind == AnalyticFixture::Kind::gbm;
  const double ref_dt = gbm ? finest : finest / 16.0;
  const auto steps_for = [&](double dt) {
    const double r = fx.horizon / dt;
    const auto n = static_cast<std::size_t>(std::llround(r));
    if (n == 0 || std::abs(r - static_cast<double>(n)) > 1e-9 * r)
      throw InvalidInput("step sizes must divide the horizon");
    return n;
  };
  const std::size_t n_ref = steps_for(ref_dt);
  const TimeGrid ref_grid = TimeGrid::uniform(0.0, fx.horizon, n_ref);

  ParamStore store;
  const SdeModel model = gbm ? fixtures::gbm(store, "fixture", fx.rate, fx.vol)
                             : fixtures::ou(store, "fixture", fx.rate, fx.vol);
  std::vector<TimeGrid> grids;
  for (double dt : dts) {
    const std::size_t n = steps_for(dt);
    if (n_ref % n != 0) throw InvalidInput("step sizes must nest in the finest grid");
    grids.push_back(TimeGrid::uniform(0.0, fx.horizon, n));
  }

  std::vector<double> abs_sum(dts.size(), 0.0), abs_sq(dts.size(), 0.0), diff_sum(dts.size(), 0.0);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Constant(1, fx.z0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    const BrownianPath fine = sample_brownian(ref_grid, 1, derive_seed(seed, {p}));
    double reference;
    if (gbm) {
      const double w = fine.increments.sum();
      reference = fx.z0 * std::exp((fx.rate - 0.5 * fx.vol * fx.vol) * fx.horizon + fx.vol * w);
    } else {
      const double decay = std::exp(-fx.rate * ref_dt), half = std::exp(-0.5 * fx.rate * ref_dt);
      reference = fx.z0;
      for (Eigen::Index k = 0; k < fine.increments.cols(); ++k)
        reference = decay * reference + fx.vol * half * fine.increments(0, k);
    }
    for (std::size_t j = 0; j < dts.size(); ++j) {
      const BrownianPath noise = coarsen(fine, ref_grid, grids[j]);
      const LatentPath path = simulate_path(model, z0, grids[j], noise, scheme);
      const double err = path.states(0, path.states.cols() - 1) - reference;
      abs_sum[j] += std::abs(err);
      abs_sq[j] += err * err;
      diff_sum[j] += err;
    }
  }
  ErrorTable table;
  std::vector<double> xs, strong, weak;
  const auto n = static_cast<double>(n_paths);
  for (std::size_t j = 0; j < dts.size(); ++j) {
    ErrorRow row;
    row.dt = dts[j];
    row.strong = abs_sum[j] / n;
    row.weak = std::abs(diff_sum[j] / n);
    const double var = n > 1 ? std::max(0.0, (abs_sq[j] - n * row.strong * row.strong) / (n - 1)) : 0.0;
    row.strong_se = std::sqrt(var / n);
    table.rows.push_back(row);
    xs.push_back(row.dt);
    strong.push_back(row.strong);
    weak.push_back(row.weak);
  }
  table.strong_slope = loglog_slope(xs, strong);
  table.weak_slope = loglog_slope(xs, weak);
  return table;
}

}  // namespace sldi
