#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "sldi/brownian.hpp"
#include "sldi/gaussian.hpp"
#include "sldi/neural_field.hpp"
#include "sldi/sde.hpp"

namespace sldi {

enum class PosteriorMode { shared_dynamics, separate_drift };
enum class NoiseModel { fixed, heteroscedastic };

/// Per-term record of the training objective. Every field is a batch average.
struct ElboBreakdown {
  double recon = 0.0;
  double kl_z0 = 0.0;
  double kl_path = 0.0;
  double r_path = 0.0;
  double adjoint_penalty = 0.0;
  double total = 0.0;
  double annealing_weight = 1.0;

  /// recon - w (kl_z0 + kl_path) - r_path - adjoint_penalty, summed in that order.
  static double combine(double recon, double kl_z0, double kl_path, double r_path, double adjoint_penalty, double w) {
    return recon - w * (kl_z0 + kl_path) - r_path - adjoint_penalty;
  }
  double recombined() const { return combine(recon, kl_z0, kl_path, r_path, adjoint_penalty, annealing_weight); }
};

/// KL between the Euler-Maruyama transitions N(z + mu_q dt, S^2 dt) and
/// N(z + mu_p dt, S^2 dt) with diagonal S: (dt / 2) sum_i (mu_q,i - mu_p,i)^2 / S_i^2.
template <typename A, typename B, typename C>
typename A::Scalar transition_kl_step(const Eigen::MatrixBase<A>& mu_q, const Eigen::MatrixBase<B>& mu_p,
                                      const Eigen::MatrixBase<C>& sigma_diag, typename A::Scalar dt) {
  return dt / 2 * ((mu_q - mu_p).array() / sigma_diag.array()).square().sum();
}

/// Diagonal of Sigma from a raw diffusion output (diagonal or scalar mode).
/// Throws UnsupportedScheme for full diffusion.
Eigen::VectorXd diffusion_diagonal(DiffusionMode mode, Eigen::Index d, const Eigen::VectorXd& raw);

/// Sum of transition_kl_step along the path, with mu_q the posterior drift that
/// generated it and mu_p the prior drift; both share the diffusion of `posterior`.
double girsanov_kl_path(const LatentPath& path, const SdeModel& posterior, const NeuralField& prior_drift);

/// Gaussian log-density of x under the decoder at latent z.
/// Fixed mode uses variance obs_var; heteroscedastic mode reads log-variances
/// from the decoder's second output head (outputs n..2n-1).
double emission_loglik(const NeuralField& decoder, const Eigen::VectorXd& params, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& x, NoiseModel noise, double obs_var);

/// Cotangent of emission_loglik with respect to the decoder output.
Eigen::VectorXd emission_output_grad(const Eigen::VectorXd& out, const Eigen::VectorXd& x, NoiseModel noise,
                                     double obs_var);
double emission_from_output(const Eigen::VectorXd& out, const Eigen::VectorXd& x, NoiseModel noise, double obs_var);

/// lambda * sum_k |mu(z_k, t_k)|^2 dt_k over the left knots of each step.
double path_energy_penalty(const LatentPath& path, const NeuralField& drift, const Eigen::VectorXd& params,
                           double lambda);

/// KL annealing weight in [0, 1].
struct AnnealSchedule {
  enum class Kind { constant, linear_warmup, entropy_aware };
  Kind kind = Kind::linear_warmup;
  std::uint64_t warmup = 500;
  /// Reference entropy (nats), defaults to that of the standard-normal prior.
  double reference_entropy = 0.0;
};

/// Running average of the posterior entropy, consumed by the entropy-aware schedule.
struct EntropyTracker {
  double decay = 0.99;
  double average = 0.0;
  bool seeded = false;
  void update(double entropy) {
    average = seeded ? decay * average + (1.0 - decay) * entropy : entropy;
    seeded = true;
  }
};

/// constant -> 1; linear_warmup(K) -> min(1, step / K); entropy_aware ->
/// clamp(min(1, step / K) * clamp(r, 0.5, 2), 0, 1), where r is the ratio of the
/// entropy powers exp(2 H / d) of the reference and of the running posterior.
/// K == 0 behaves as constant.
double kl_anneal(std::uint64_t step, const AnnealSchedule& schedule, const EntropyTracker* tracker = nullptr,
                 Eigen::Index latent_dim = 1);

/// (payoff(noise) + payoff(-noise)) / 2.
double antithetic_estimate(const std::function<double(const BrownianPath&)>& payoff, const BrownianPath& noise);

}  // namespace sldi
