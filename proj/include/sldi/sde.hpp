#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "sldi/brownian.hpp"
#include "sldi/neural_field.hpp"
#include "sldi/time_grid.hpp"

namespace sldi {

/// How the diffusion network output is read as the d x m matrix Sigma.
///  - diagonal: output d, m == d, Sigma = diag(output)
///  - scalar:   output 1, m == d, Sigma = output * I
///  - full:     output d*m, row-major d x m
enum class DiffusionMode { full, diagonal, scalar };

enum class Scheme { em, milstein };

/// Ito SDE dz = mu(z, t) dt + Sigma(z, t) dW. Both fields take [z; t] as input.
struct SdeModel {
  NeuralField drift;
  NeuralField diffusion;
  Eigen::Index d = 1;
  Eigen::Index m = 1;
  DiffusionMode mode = DiffusionMode::diagonal;
  Eigen::VectorXd params;

  /// Checks the field shapes against (d, m, mode); throws ShapeError.
  void validate() const;

  Eigen::VectorXd drift_at(const Eigen::VectorXd& z, double t) const;
  /// Raw diffusion-network output at (z, t).
  Eigen::VectorXd diffusion_raw(const Eigen::VectorXd& z, double t) const;
  Eigen::MatrixXd diffusion_matrix(const Eigen::VectorXd& z, double t) const;
};

/// [z; t], the input of every (state, time) field.
Eigen::VectorXd state_time(const Eigen::VectorXd& z, double t);

/// Sigma * dW for a raw diffusion output.
Eigen::VectorXd apply_diffusion(DiffusionMode mode, Eigen::Index d, Eigen::Index m, const Eigen::VectorXd& raw,
                                const Eigen::VectorXd& dW);

/// z + mu dt + Sigma dW.
Eigen::VectorXd em_step(const SdeModel& model, const Eigen::VectorXd& z, double t, double dt,
                        const Eigen::VectorXd& dW);

/// Euler-Maruyama plus 0.5 Sigma_ii dSigma_ii/dz_i (dW_i^2 - dt) per coordinate.
/// Throws UnsupportedScheme in full-diffusion mode.
Eigen::VectorXd milstein_step(const SdeModel& model, const Eigen::VectorXd& z, double t, double dt,
                              const Eigen::VectorXd& dW);

/// Field caches of one Euler-Maruyama step, kept for reverse-mode sweeps.
struct StepRecord {
  NeuralField::Cache drift;
  NeuralField::Cache diffusion;
};

struct LatentPath {
  TimeGrid grid;
  Eigen::MatrixXd states;  // d x knots
  BrownianPath noise;

  Eigen::VectorXd state(std::size_t k) const { return states.col(static_cast<Eigen::Index>(k)); }
};

/// Simulate on `grid` with the given increments. When `record` is set, the
/// drift and diffusion caches of each step are stored (EM only).
/// Throws NumericalBlowup with the step index on a non-finite state.
LatentPath simulate_path(const SdeModel& model, const Eigen::VectorXd& z0, const TimeGrid& grid,
                         const BrownianPath& noise, Scheme scheme = Scheme::em,
                         std::vector<StepRecord>* record = nullptr);

/// sum_k |z_{k+1} - z_k|^2 / dt_k. Diverges as dt -> 0 for diffusions; diagnostic only.
double raw_increment_energy(const LatentPath& path);

/// Affine-field constructors for the closed-form fixtures. All store their
/// parameters in `store` under `prefix`.
namespace fixtures {

/// Scalar linear SDE dz = (a z + c) dt + (s z + b) dW, identity output activations.
SdeModel linear_scalar(ParamStore& store, const std::string& prefix, double a, double c, double s, double b);
/// Geometric Brownian motion dz = r z dt + vol z dW.
SdeModel gbm(ParamStore& store, const std::string& prefix, double r, double vol);
/// Ornstein-Uhlenbeck dz = -theta z dt + sigma dW.
SdeModel ou(ParamStore& store, const std::string& prefix, double theta, double sigma);
/// Linear SDE dz = A z dt + B dW with full diffusion (m = B.cols()).
SdeModel linear(ParamStore& store, const std::string& prefix, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace fixtures

}  // namespace sldi
