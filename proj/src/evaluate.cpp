#include "sldi/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "sldi/errors.hpp"
#include "sldi/objective.hpp"
#include "sldi/rng.hpp"
#include "sldi/trainer.hpp"

namespace sldi {

std::string EvalMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["sequences"] = sequences;
  j["heldout"] = heldout;
  j["elbo"] = elbo;
  j["rmse"] = rmse;
  j["nll"] = nll;
  j["coverage50"] = coverage50;
  j["coverage90"] = coverage90;
  j["increment_autocorr"] = increment_autocorr;
  return j.dump();
}

double plotting_position_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidInput("quantile of an empty sample");
  const auto n = static_cast<double>(sorted.size());
  const double h = std::clamp(p * (n + 1.0), 1.0, n);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  if (lo >= sorted.size()) return sorted.back();
  return sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]);
}

namespace {

double lag_one_autocorr(const LatentPath& path) {
  const Eigen::Index steps = path.states.cols() - 1;
  if (steps < 3) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < path.states.rows(); ++i) {
    const Eigen::ArrayXd inc =
        (path.states.row(i).tail(steps) - path.states.row(i).head(steps)).transpose().array();
    const Eigen::ArrayXd c = inc - inc.mean();
    const double den = c.square().sum();
    total += den > 0.0 ? (c.head(steps - 1) * c.tail(steps - 1)).sum() / den : 0.0;
  }
  return total / static_cast<double>(path.states.rows());
}

}  // namespace

EvalMetrics evaluate(const SldiModel& model, const Eigen::VectorXd& params, const std::vector<ObservationSeq>& data,
                     const TrainConfig& cfg, std::size_t samples, std::uint64_t seed) {
  if (samples < 2) throw InvalidInput("evaluation needs at least two predictive samples");
  const ModelSpec& spec = model.spec();
  const Eigen::Index d = spec.latent_dim, n = spec.obs_dim;
  for (const auto& s : data)
    if (s.dim() != n)
      throw ConfigError("sequence dimension " + std::to_string(s.dim()) + " does not match the model (" +
                        std::to_string(n) + ")");
  EvalMetrics m;
  m.sequences = data.size();
  if (data.empty()) return m;
  m.elbo = validation_elbo(model, params, data, cfg, samples, seed);

  const SdeModel post = model.posterior_sde(params);
  const double cut = cfg.run.context_fraction * cfg.objective.horizon;
  double sq_err = 0.0, nll = 0.0, autocorr = 0.0;
  std::size_t in50 = 0, in90 = 0, timestamps = 0, paths = 0;

  for (std::size_t i = 0; i < data.size(); ++i) {
    const ObservationSeq& seq = data[i];
    const ObservationSeq context = seq.prefix_until(cut);
    ObservationSeq target = seq.suffix_after(cut);
    if (target.length() == 0) target = seq;
    const GaussianDist q = model.encoder.encode(params, context);
    const TimeGrid grid = simulation_grid(seq, cfg.objective.horizon, cfg.objective.dt);
    std::vector<std::size_t> knots;
    for (double t : target.timestamps) knots.push_back(*grid.index_of(t));

    const auto T = static_cast<Eigen::Index>(target.length());
    std::vector<Eigen::MatrixXd> means(samples), vars(samples);
    Eigen::MatrixXd draws(n * T, static_cast<Eigen::Index>(samples));
    for (std::size_t s = 0; s < samples; ++s) {
      const std::uint64_t sd = derive_seed(seed, {i, s});
      const SampleDraw draw = draw_sample(grid, d, sd);
      Rng noise_rng(derive_seed(sd, {2}));
      means[s].resize(n, T);
      vars[s].resize(n, T);
      try {
        const LatentPath path = simulate_path(post, reparam_sample(q, draw.eps), grid, draw.noise);
        autocorr += lag_one_autocorr(path);
        ++paths;
        for (Eigen::Index j = 0; j < T; ++j) {
          const Eigen::VectorXd out = model.decoder.eval(params, path.state(knots[static_cast<std::size_t>(j)]));
          means[s].col(j) = out.head(n);
          vars[s].col(j) = spec.noise == NoiseModel::fixed ? Eigen::VectorXd::Constant(n, spec.obs_var)
                                                           : Eigen::VectorXd(out.tail(n).array().exp());
        }
      } catch (const NumericalBlowup&) {
        means[s].setConstant(NAN);
        vars[s].setConstant(NAN);
      }
      const Eigen::VectorXd eps = standard_normal(noise_rng, n * T);
      for (Eigen::Index j = 0; j < T; ++j)
        draws.col(static_cast<Eigen::Index>(s)).segment(j * n, n) =
            means[s].col(j) + (vars[s].col(j).array().sqrt() * eps.segment(j * n, n).array()).matrix();
    }

    for (Eigen::Index j = 0; j < T; ++j) {
      const Eigen::VectorXd x = target.values.col(j);
      Eigen::VectorXd mean_pred = Eigen::VectorXd::Zero(n);
      std::vector<double> logp;
      std::size_t ok = 0;
      for (std::size_t s = 0; s < samples; ++s) {
        if (!means[s].col(j).allFinite()) continue;
        mean_pred += means[s].col(j);
        ++ok;
        const Eigen::ArrayXd v = vars[s].col(j).array();
        logp.push_back(-0.5 * ((2.0 * M_PI * v).log() + (x - means[s].col(j)).array().square() / v).sum());
      }
      if (ok == 0) throw NumericsError("every predictive sample diverged");
      mean_pred /= static_cast<double>(ok);
      sq_err += (mean_pred - x).squaredNorm();
      const double mx = *std::max_element(logp.begin(), logp.end());
      double acc = 0.0;
      for (double lp : logp) acc += std::exp(lp - mx);
      nll -= mx + std::log(acc / static_cast<double>(samples));
      ++timestamps;
      for (Eigen::Index c = 0; c < n; ++c) {
        std::vector<double> xs;
        for (std::size_t s = 0; s < samples; ++s) {
          const double v = draws(j * n + c, static_cast<Eigen::Index>(s));
          if (std::isfinite(v)) xs.push_back(v);
        }
        std::sort(xs.begin(), xs.end());
        const double v = x[c];
        in50 += v >= plotting_position_quantile(xs, 0.25) && v <= plotting_position_quantile(xs, 0.75);
        in90 += v >= plotting_position_quantile(xs, 0.05) && v <= plotting_position_quantile(xs, 0.95);
        ++m.heldout;
      }
    }
  }
  m.rmse = std::sqrt(sq_err / static_cast<double>(m.heldout));
  m.nll = nll / static_cast<double>(timestamps);
  m.coverage50 = static_cast<double>(in50) / static_cast<double>(m.heldout);
  m.coverage90 = static_cast<double>(in90) / static_cast<double>(m.heldout);
  m.increment_autocorr = paths ? autocorr / static_cast<double>(paths) : 0.0;
  return m;
}

}  // namespace sldi
