#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/neural_field.hpp"
#include "sldi/sde.hpp"

namespace sldi {

/// Forward pass of simulate_path with every field cache kept.
struct SolverTape {
  const SdeModel* model = nullptr;
  LatentPath path;
  std::vector<StepRecord> records;
};

/// Simulate with Euler-Maruyama and keep the tape. The model must outlive the result.
SolverTape record_path(const SdeModel& model, const Eigen::VectorXd& z0, const TimeGrid& grid,
                       const BrownianPath& noise);

struct SolverGradient {
  Eigen::VectorXd param_grad;  // length of model.params
  Eigen::VectorXd z0_grad;
  Eigen::MatrixXd state_cotangents;  // d x knots, total dL/dz_k
};

/// Exact reverse sweep of the recorded Euler-Maruyama recursion. `knot_cotangents`
/// (d x knots) holds the explicit partial derivatives of the loss at each knot.
/// Throws InvalidState when `tape` is null.
SolverGradient backprop_through_solver(const SolverTape* tape, const Eigen::MatrixXd& knot_cotangents);

enum class AdjointMode { drift_only, with_diffusion_correction };

/// Where the coefficients of the backward step from t_{k+1} to t_k are read:
/// at the stored left knot (z_k, t_k) or at the step's starting point (z_{k+1}, t_{k+1}).
enum class AdjointStencil { left_knot, right_knot };

struct AdjointTrace {
  TimeGrid grid;
  Eigen::MatrixXd adjoints;    // d x knots
  Eigen::MatrixXd increments;  // d x steps: a_{k+1} - a_k from the ODE part only
  Eigen::VectorXd param_grad;
};

/// Explicit Euler integration of
///   da/dt = -a^T (d mu/dz - sum_i dSigma_i/dz dSigma_i/dz^T)
/// backwards over the stored path, with the terminal value and any per-knot
/// jumps taken from `knot_cotangents` (d x knots):
///   a_k = a_{k+1} + dt_k (J_mu - C)^T a_{k+1} + cotangent_k,
/// with J_mu and C read according to `stencil`. drift_only drops C. The
/// parameter gradient accumulates a_{k+1}^T dmu/dtheta dt_k, plus
/// a_{k+1}^T (dSigma/dtheta) dW_k at the left knot in with_diffusion_correction mode.
/// With the left-knot stencil and Sigma = 0 this reproduces the discrete reverse sweep.
/// Throws GridError when the cotangents do not match the path grid.
AdjointTrace adjoint_backward(const SdeModel& model, const LatentPath& path, const Eigen::MatrixXd& knot_cotangents,
                              AdjointMode mode, AdjointStencil stencil = AdjointStencil::left_knot);

/// Terminal-only convenience overload.
AdjointTrace adjoint_from_terminal(const SdeModel& model, const LatentPath& path, const Eigen::VectorXd& terminal,
                              AdjointMode mode, AdjointStencil stencil = AdjointStencil::left_knot);

/// sum_i dSigma_i/dz dSigma_i/dz^T at (z, t), Sigma_i the i-th column of Sigma.
Eigen::MatrixXd diffusion_correction(const SdeModel& model, const Eigen::VectorXd& z, double t);

/// beta * sum_k |refs_k - increments_k / dt_k|^2 dt_k. refs is d x steps.
double adjoint_consistency_penalty(const AdjointTrace& trace, const Eigen::MatrixXd& refs, double beta);

/// a - A(z, t) dt.
Eigen::VectorXd co_adjoint_step(const NeuralField& field, const Eigen::VectorXd& params, const Eigen::VectorXd& z,
                                double t, double dt, const Eigen::VectorXd& a);

/// sum_k |A(z_k, t_k) + increments_k / dt_k|^2 dt_k. When `param_grad` is set the
/// gradient with respect to the field parameters (path held fixed) is added, scaled by `scale`.
double co_adjoint_train_loss(const NeuralField& field, const Eigen::VectorXd& params, const LatentPath& path,
                             const AdjointTrace& trace, Eigen::VectorXd* param_grad = nullptr, double scale = 1.0);

/// out = alpha * raw + (1 - alpha) * running; then running <- rho * running + (1 - rho) * raw.
/// An empty running average is seeded with the first raw gradient.
struct EwmaSmoother {
  double alpha = 0.9;
  double rho = 0.99;
  Eigen::VectorXd running;
};

Eigen::VectorXd variance_clip(const Eigen::VectorXd& raw, EwmaSmoother& smoother);

/// Gradient-variance study on the scalar OU terminal-loss fixture
/// dz = (a z + c) dt + s dW, loss (z_T - target)^2, gradient with respect to (a, c).
struct VarianceFixture {
  double theta = 1.0;
  double sigma = 0.5;
  double z0 = 2.0;
  double horizon = 1.0;
  double target = 0.0;
  std::size_t steps = 32;
  double alpha = 0.9;
  double rho = 0.99;
  /// Gradients drawn before measurement so the clipped estimator starts from a warm average.
  std::size_t warmup = 50;
};

struct EstimatorStats {
  std::string name;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // per coordinate, unbiased
  double trace_variance = 0.0;
};

struct VarianceReport {
  std::vector<EstimatorStats> estimators;  // plain, antithetic, variance_clipped
  /// |mean_antithetic - mean_plain| / SE of the difference, largest over coordinates.
  double antithetic_bias_z = 0.0;
};

/// plain averages two independent paths, antithetic averages a path and its
/// negation, variance_clipped feeds the plain estimates through variance_clip.
/// Throws InvalidInput when n_seeds < 2.
VarianceReport gradient_variance_report(const VarianceFixture& fx, std::size_t n_seeds, std::uint64_t seed);

}  // namespace sldi
