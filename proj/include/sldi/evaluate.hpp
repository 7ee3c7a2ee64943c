#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/config.hpp"
#include "sldi/model.hpp"
#include "sldi/observation.hpp"

namespace sldi {

struct EvalMetrics {
  std::size_t sequences = 0;
  /// Held-out scalar observations scored.
  std::size_t heldout = 0;
  double elbo = 0.0;
  double rmse = 0.0;
  /// Mean negative log predictive density per held-out timestamp.
  double nll = 0.0;
  double coverage50 = 0.0;
  double coverage90 = 0.0;
  /// Mean lag-one autocorrelation of latent path increments; descriptive only.
  double increment_autocorr = 0.0;

  std::string to_json() const;
};

/// Quantile of sorted samples with plotting position p (n + 1), linearly
/// interpolated and clamped to the sample range.
double plotting_position_quantile(const std::vector<double>& sorted, double p);

/// Condition on the observations with t <= context_fraction * horizon and score
/// the rest (every observation when nothing lies beyond the context window).
/// `samples` posterior-predictive draws are used per sequence; draw s of
/// sequence i derives from derive_seed(seed, {i, s}).
/// Throws ConfigError when a sequence does not match the model's observation dimension.
EvalMetrics evaluate(const SldiModel& model, const Eigen::VectorXd& params, const std::vector<ObservationSeq>& data,
                     const TrainConfig& cfg, std::size_t samples, std::uint64_t seed);

}  // namespace sldi
