#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "sldi/brownian.hpp"
#include "sldi/model.hpp"
#include "sldi/observation.hpp"
#include "sldi/time_grid.hpp"
#include "sldi/variational.hpp"

namespace sldi {

/// How the path block of the gradient is computed: exact reverse sweep of the
/// solver, or the continuous adjoint without / with the diffusion terms.
enum class GradMode { tape, adjoint, adjoint_corrected };

const char* to_string(GradMode m);

struct ObjectiveConfig {
  double dt = 1.0 / 32.0;
  double horizon = 2.0;
  /// Path-energy weight.
  double lambda = 0.01;
  /// Co-adjoint supervision weight.
  double beta = 0.1;
  std::size_t mc_samples = 1;
  GradMode grad_mode = GradMode::tape;
  /// Pair every draw with its negation (z0 noise and Brownian increments).
  bool antithetic = false;
};

/// Steps of cfg.dt on [0, max(horizon, last observation)] with every
/// observation time inserted as a knot.
TimeGrid simulation_grid(const ObservationSeq& obs, double horizon, double dt);

struct SampleDraw {
  Eigen::VectorXd eps;  // z0 reparameterisation noise
  BrownianPath noise;
  SampleDraw negated() const { return {-eps, noise.antithetic()}; }
};

SampleDraw draw_sample(const TimeGrid& grid, Eigen::Index d, std::uint64_t seed);

struct SampleTerms {
  double recon = 0.0;
  double kl_z0 = 0.0;
  double kl_path = 0.0;
  double r_path = 0.0;
  double adjoint_penalty = 0.0;
  double entropy = 0.0;  // of q(z0 | x)

  double total(double w) const { return ElboBreakdown::combine(recon, kl_z0, kl_path, r_path, adjoint_penalty, w); }
};

/// One Monte Carlo sample of the objective. When `grad` is set, d total / d params
/// is added to it. The co-adjoint penalty is supervised by an adjoint trace on
/// the detached path, so its gradient reaches only the "coadj" parameters.
/// Throws NumericalBlowup when the latent path diverges.
SampleTerms sample_objective(const SldiModel& model, const Eigen::VectorXd& params, const ObservationSeq& obs,
                             const ObjectiveConfig& cfg, const TimeGrid& grid, const SampleDraw& draw, double kl_weight,
                             Eigen::VectorXd* grad);

struct ElboResult {
  ElboBreakdown breakdown;
  Eigen::VectorXd grad;  // d total / d params, averaged over evaluated samples
  std::size_t samples = 0;
  std::size_t blowups = 0;
  double mean_entropy = 0.0;
};

/// Batch ELBO averaged over sequences and samples. Diverging samples are
/// skipped and counted. Sample s of sequence i uses derive_seed(seed, {i, s}).
ElboResult elbo(const SldiModel& model, const Eigen::VectorXd& params, const std::vector<ObservationSeq>& batch,
                const ObjectiveConfig& cfg, std::uint64_t seed, double kl_weight, bool want_grad);

struct LogLikEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// log (1/N) sum_s w_s with w_s = p(x | path_s) p(z0_s) / q(z0_s | x), times the
/// Euler-Maruyama transition ratio p/q along the path in separate-drift mode.
/// The standard error is the delta-method value sd(w) / (sqrt(N) mean(w)).
/// Throws NumericsError when every weight vanishes.
LogLikEstimate is_loglik(const SldiModel& model, const Eigen::VectorXd& params, const ObservationSeq& obs,
                         const ObjectiveConfig& cfg, std::size_t n_samples, std::uint64_t seed);

}  // namespace sldi
