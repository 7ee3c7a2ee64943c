#include "sldi/variational.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sldi/errors.hpp"

namespace sldi {

Eigen::VectorXd diffusion_diagonal(DiffusionMode mode, Eigen::Index d, const Eigen::VectorXd& raw) {
  switch (mode) {
    case DiffusionMode::diagonal: return raw;
    case DiffusionMode::scalar: return Eigen::VectorXd::Constant(d, raw[0]);
    case DiffusionMode::full: break;
  }
  throw UnsupportedScheme("pathwise KL needs diagonal or scalar diffusion");
}

double girsanov_kl_path(const LatentPath& path, const SdeModel& posterior, const NeuralField& prior_drift) {
  if (posterior.mode == DiffusionMode::full) throw UnsupportedScheme("pathwise KL needs diagonal or scalar diffusion");
  double kl = 0.0;
  for (std::size_t k = 0; k < path.grid.steps(); ++k) {
    const Eigen::VectorXd x = state_time(path.state(k), path.grid[k]);
    const Eigen::VectorXd mu_q = posterior.drift.eval(posterior.params, x);
    const Eigen::VectorXd mu_p = prior_drift.eval(posterior.params, x);
    const Eigen::VectorXd s = diffusion_diagonal(posterior.mode, posterior.d, posterior.diffusion.eval(posterior.params, x));
    kl += transition_kl_step(mu_q, mu_p, s, path.grid.dt(k));
  }
  return kl;
}

double emission_from_output(const Eigen::VectorXd& out, const Eigen::VectorXd& x, NoiseModel noise, double obs_var) {
  constexpr double log_2pi = 1.8378770664093453;
  const Eigen::Index n = x.size();
  if (noise == NoiseModel::fixed) {
    if (!(obs_var > 0.0)) throw InvalidInput("observation variance must be positive");
    if (out.size() != n) throw ShapeError("decoder output does not match the observation");
    return -0.5 * static_cast<double>(n) * (log_2pi + std::log(obs_var)) - (x - out).squaredNorm() / (2.0 * obs_var);
  }
  if (out.size() != 2 * n) throw ShapeError("heteroscedastic decoder needs 2n outputs");
  const Eigen::ArrayXd logvar = out.tail(n).array();
  const Eigen::ArrayXd r = (x - out.head(n)).array();
  return -0.5 * (static_cast<double>(n) * log_2pi + logvar.sum()) - 0.5 * (r.square() * (-logvar).exp()).sum();
}

Eigen::VectorXd emission_output_grad(const Eigen::VectorXd& out, const Eigen::VectorXd& x, NoiseModel noise,
                                     double obs_var) {
  const Eigen::Index n = x.size();
  if (noise == NoiseModel::fixed) return (x - out) / obs_var;
  Eigen::VectorXd g(2 * n);
  const Eigen::ArrayXd inv = (-out.tail(n).array()).exp();
  const Eigen::ArrayXd r = (x - out.head(n)).array();
  g.head(n) = (r * inv).matrix();
  g.tail(n) = (-0.5 + 0.5 * r.square() * inv).matrix();
  return g;
}

double emission_loglik(const NeuralField& decoder, const Eigen::VectorXd& params, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& x, NoiseModel noise, double obs_var) {
  return emission_from_output(decoder.eval(params, z), x, noise, obs_var);
}

double path_energy_penalty(const LatentPath& path, const NeuralField& drift, const Eigen::VectorXd& params,
                           double lambda) {
  if (lambda < 0.0) throw InvalidInput("penalty weight must be non-negative");
  if (lambda == 0.0) return 0.0;
  double e = 0.0;
  for (std::size_t k = 0; k < path.grid.steps(); ++k)
    e += drift.eval(params, state_time(path.state(k), path.grid[k])).squaredNorm() * path.grid.dt(k);
  return lambda * e;
}

double kl_anneal(std::uint64_t step, const AnnealSchedule& s, const EntropyTracker* tracker, Eigen::Index latent_dim) {
  if (s.kind == AnnealSchedule::Kind::constant || s.warmup == 0) return 1.0;
  const double ramp = std::min(1.0, static_cast<double>(step) / static_cast<double>(s.warmup));
  if (s.kind == AnnealSchedule::Kind::linear_warmup || tracker == nullptr || !tracker->seeded) return ramp;
  const double ratio = std::exp(2.0 * (s.reference_entropy - tracker->average) / static_cast<double>(latent_dim));
  return std::clamp(ramp * std::clamp(ratio, 0.5, 2.0), 0.0, 1.0);
}

double antithetic_estimate(const std::function<double(const BrownianPath&)>& payoff, const BrownianPath& noise) {
  return 0.5 * (payoff(noise) + payoff(noise.antithetic()));
}

}  // namespace sldi
