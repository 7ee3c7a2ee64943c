#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/gaussian.hpp"
#include "sldi/observation.hpp"
#include "sldi/param_store.hpp"

namespace sldi {

/// Gated-update recurrent cell: u = sigmoid(Wu s + bu), c = tanh(Wc s + bc),
/// h' = h + u * (c - h), with step input s = [x; gap; h].
struct GatedCell {
  Eigen::Index input_dim = 0;  // x plus the gap feature
  Eigen::Index hidden = 0;
  Eigen::Index wu = 0, bu = 0, wc = 0, bc = 0;

  GatedCell() = default;
  GatedCell(ParamStore& store, const std::string& name, Eigen::Index input_dim, Eigen::Index hidden);

  struct Step {
    Eigen::VectorXd in, u, c, h_prev;
  };

  Eigen::VectorXd step(const Eigen::VectorXd& params, const Eigen::VectorXd& x_gap, const Eigen::VectorXd& h,
                       Step* record) const;
  /// Backprop one step: given dL/dh', returns dL/dh and accumulates parameter cotangents.
  Eigen::VectorXd step_vjp(const Eigen::VectorXd& params, const Step& rec, const Eigen::VectorXd& dh_next,
                           Eigen::Ref<Eigen::VectorXd> param_grad) const;
};

/// Bidirectional gated-recurrent encoder producing q(z0 | x) = N(mean, diag exp(logvar)).
/// Inter-observation gaps are fed to every cell step, so irregular sampling is seen by the network.
class RecurrentEncoder {
 public:
  struct Cache {
    std::vector<GatedCell::Step> fwd, bwd;
    Eigen::VectorXd features;  // [h_fwd; h_bwd]
    Eigen::VectorXd mean, logvar;
  };

  RecurrentEncoder() = default;
  RecurrentEncoder(ParamStore& store, const std::string& name, Eigen::Index obs_dim, Eigen::Index latent_dim,
                   Eigen::Index hidden);

  Eigen::Index obs_dim() const noexcept { return obs_dim_; }
  Eigen::Index latent_dim() const noexcept { return latent_dim_; }
  Eigen::Index hidden() const noexcept { return fwd_.hidden; }
  const std::string& name() const noexcept { return name_; }

  /// Encode the first `valid` observations (all when absent); `origin` is the
  /// time the latent process starts, used for the first forward gap.
  GaussianDist encode(const Eigen::VectorXd& params, const ObservationSeq& obs, std::optional<std::size_t> valid = {},
                      double origin = 0.0, Cache* cache = nullptr) const;

  /// Accumulates the parameter cotangent for cotangents on (mean, logvar).
  void vjp(const Eigen::VectorXd& params, const Cache& cache, const Eigen::VectorXd& d_mean,
           const Eigen::VectorXd& d_logvar, Eigen::Ref<Eigen::VectorXd> param_grad) const;

  Eigen::Index readout_weight_offset() const noexcept { return out_w_; }
  Eigen::Index readout_bias_offset() const noexcept { return out_b_; }

 private:
  std::string name_;
  Eigen::Index obs_dim_ = 0, latent_dim_ = 0;
  GatedCell fwd_, bwd_;
  Eigen::Index out_w_ = 0, out_b_ = 0;
};

}  // namespace sldi
