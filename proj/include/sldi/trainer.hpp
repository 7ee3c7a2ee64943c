#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/config.hpp"
#include "sldi/errors.hpp"
#include "sldi/model.hpp"
#include "sldi/observation.hpp"

namespace sldi {

/// Bias-corrected adaptive-moment descent on a loss gradient.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  /// params -= lr * m_hat / (sqrt(v_hat) + eps). Entries where `mask` is zero are left untouched.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& loss_grad, const Eigen::VectorXd* mask = nullptr);
  std::uint64_t iterations() const noexcept { return t_; }
  void set_lr(double lr) noexcept { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  std::uint64_t t_ = 0;
};

/// Raised when too many samples of a batch diverge or the gradient is not finite.
class TrainingAborted : public NumericsError {
 public:
  TrainingAborted(std::size_t step, const std::string& what)
      : NumericsError("training aborted at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct MetricsRecord {
  std::size_t step = 0;
  ElboBreakdown breakdown;
  double grad_norm = 0.0;
  std::size_t samples = 0;
  std::size_t blowups = 0;
  double spectral_max = 0.0;
  double mean_entropy = 0.0;
  std::optional<double> val_elbo;

  /// One JSON object on a single line.
  std::string to_json() const;
};

struct TrainHooks {
  /// Called once on the freshly initialised model, before the first spectral projection.
  std::function<void(SldiModel& model)> after_init;
  /// Called after the optimizer step and spectral projection of every step.
  std::function<void(std::size_t step, const SldiModel& model)> after_step;
};

struct TrainResult {
  std::vector<MetricsRecord> history;
  /// Validation ELBO before the first step and after the last (NaN without a validation set).
  double initial_val_elbo = 0.0;
  double final_val_elbo = 0.0;
};

/// Learning rate of step `step` (1-based) of `steps` under cosine decay to lr * final_fraction.
double cosine_lr(double lr, double final_fraction, std::size_t step, std::size_t steps);

/// Seed streams of a run: initialisation, batch selection, objective samples, validation.
std::uint64_t init_seed(std::uint64_t run_seed);
std::uint64_t validation_seed(std::uint64_t run_seed);

/// ELBO with unit KL weight and no penalties, averaged over `samples` draws per sequence.
double validation_elbo(const SldiModel& model, const Eigen::VectorXd& params, const std::vector<ObservationSeq>& data,
                       const TrainConfig& cfg, std::size_t samples, std::uint64_t seed);

/// Initialise `model` from the run seed, project it under the spectral bound, then run
/// cfg.optim.steps optimizer steps on `train_set`. When `out_dir` is set the directory
/// receives config.ini, metrics.jsonl (deterministic), timing.jsonl (wall clock),
/// ckpt-<step>.ckpt every checkpoint_every steps and final.ckpt.
/// Throws ConfigError for settings training cannot honour and TrainingAborted on divergence.
TrainResult train(SldiModel& model, const TrainConfig& cfg, const std::vector<ObservationSeq>& train_set,
                  const std::vector<ObservationSeq>& val_set, const std::optional<std::filesystem::path>& out_dir,
                  const TrainHooks& hooks = {});

}  // namespace sldi
