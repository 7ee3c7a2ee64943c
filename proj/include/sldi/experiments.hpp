#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sldi/adjoint.hpp"
#include "sldi/convergence.hpp"
#include "sldi/kalman.hpp"
#include "sldi/model.hpp"
#include "sldi/observation.hpp"

namespace sldi {

// ---------------------------------------------------------------- gradcheck

struct GradcheckRow {
  std::string fixture;
  std::string block;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  /// Dimensions and widths of the checked models; latent_dim and obs_dim must be at most 3.
  ModelSpec base;
  /// Corrupt the weight cotangent of one field: drift, postdrift, diffusion, dec or coadj.
  std::optional<std::string> fault_block;
  std::uint64_t seed = 0;
};

constexpr double kTapeTolerance = 1e-6;
constexpr double kAdjointTolerance = 1e-3;

/// Per-block comparison of analytic gradients with central differences.
///  - "shared-hetero" and "separate-fixed": objective gradient per parameter block
///    against differences of the objective (threshold 1e-6, relative floor 1e-3);
///  - "solver-full": reverse sweep through a full-diffusion solve (threshold 1e-6);
///  - "adjoint-sigma0": continuous adjoint against the reverse sweep at dt = 2^-10
///    with zero diffusion, both stencils, as norm-relative errors (threshold 1e-3).
/// Throws ConfigError when a dimension exceeds 3 and InvalidInput for an unknown fault block.
std::vector<GradcheckRow> gradcheck(const GradcheckOptions& opts);

/// "fixture <f> block <b> max_rel_err <x> threshold <t> PASS|FAIL", one line per row.
std::string format_gradcheck(const std::vector<GradcheckRow>& rows);
bool all_pass(const std::vector<GradcheckRow>& rows);

// -------------------------------------------------------------- convergence

/// CSV with header scheme,dt,strong_error,strong_se,weak_error,strong_slope,weak_slope.
std::string convergence_csv(const std::vector<std::pair<Scheme, ErrorTable>>& tables);

// --------------------------------------------------------- variance report

/// CSV with header estimator,mean_a,mean_c,var_a,var_c,trace_variance,bias_z; bias_z
/// is filled for the antithetic row only.
std::string variance_csv(const VarianceReport& report);

// ------------------------------------------------------- linear-Gaussian data

/// Exact draws of the system at `times` (strictly increasing, >= 0), z(0) from the prior.
std::vector<ObservationSeq> sample_lgs(const LinearGaussianSystem& sys, const std::vector<double>& times,
                                       std::size_t n, std::uint64_t seed);

/// Smoothed N(mean, cov) of z(0) given the observations.
GaussianDist kalman_z0_posterior(const LinearGaussianSystem& sys, const ObservationSeq& obs);

// ----------------------------------------------------------- theorem ladder

struct LadderRung {
  Eigen::Index width = 4;  // encoder hidden width
  double dt = 0.125;
};

/// Encoder-only training on a scalar linear-Gaussian system whose generative
/// part is fixed to the truth, so q(z0 | x) can be compared with the smoother.
struct LadderOptions {
  std::vector<LadderRung> rungs{{4, 1.0 / 8}, {16, 1.0 / 32}, {64, 1.0 / 128}};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double drift = -1.0;
  double diffusion = 0.1;
  double emission = 1.0;
  double obs_var = 0.1;
  std::vector<double> obs_times{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  std::size_t n_train = 2000;
  std::size_t n_test = 200;
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  double lr = 3e-3;
  double lr_final_fraction = 0.01;
  /// Sequences and posterior paths used for the path-marginal discrepancy.
  std::size_t marginal_sequences = 16;
  std::size_t marginal_paths = 256;
  /// Frozen pass threshold on the seed-averaged top-rung KL (nats).
  double threshold = 0.05;
  std::uint64_t data_seed = 12345;
};

struct LadderRow {
  std::uint64_t seed = 0;
  Eigen::Index width = 0;
  double dt = 0.0;
  /// Test-set mean of KL(q(z0 | x) || smoother posterior of z0).
  double kl_z0 = 0.0;
  /// Same KL for the best q reachable under shared prior dynamics on this grid.
  double floor_kl = 0.0;
  /// Mean over sequences of the largest |mean| and |variance| gap between model
  /// path marginals and smoothed marginals at the observation times.
  double mean_discrepancy = 0.0;
  double var_discrepancy = 0.0;
};

struct LadderReport {
  std::vector<LadderRow> rows;  // seed-major, rung order
  /// Seeds whose KL strictly decreases along the rungs; absent with fewer than two rungs.
  std::optional<std::size_t> monotone_seeds;
  double top_rung_mean_kl = 0.0;
  double threshold = 0.0;
  /// monotone in at least all-but-one seed and top rung below threshold; absent with fewer than two rungs.
  std::optional<bool> pass;
};

/// Throws InvalidInput for an empty rung or seed list.
LadderReport theorem_ladder(const LadderOptions& opts);

/// CSV with header seed,width,dt,kl_z0,floor_kl,mean_discrepancy,var_discrepancy.
std::string ladder_csv(const LadderReport& report);
/// "top_rung_mean_kl=... threshold=... monotone_seeds=... verdict=PASS|FAIL|none".
std::string ladder_summary(const LadderReport& report);

}  // namespace sldi
