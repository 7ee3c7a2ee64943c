#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/encoder.hpp"
#include "sldi/neural_field.hpp"
#include "sldi/param_store.hpp"
#include "sldi/sde.hpp"
#include "sldi/variational.hpp"

namespace sldi {

/// Architecture of the latent SDE model. Empty hidden lists give affine fields.
struct ModelSpec {
  Eigen::Index latent_dim = 2;
  Eigen::Index obs_dim = 2;
  DiffusionMode diffusion_mode = DiffusionMode::diagonal;
  std::vector<Eigen::Index> drift_hidden{32};
  std::vector<Eigen::Index> diffusion_hidden{16};
  std::vector<Eigen::Index> decoder_hidden{32};
  std::vector<Eigen::Index> coadjoint_hidden{16};
  Eigen::Index encoder_hidden = 16;
  PosteriorMode posterior = PosteriorMode::shared_dynamics;
  NoiseModel noise = NoiseModel::fixed;
  double obs_var = 0.1;

  /// Throws ConfigError on non-positive sizes or an inconsistent mode.
  void validate() const;
};

/// Encoder "enc", prior drift "drift", posterior drift "postdrift" (separate
/// mode only), diffusion "diffusion" (softplus output), decoder "dec" and
/// co-adjoint field "coadj", all in one ParamStore.
class SldiModel {
 public:
  explicit SldiModel(const ModelSpec& spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  ParamStore& store() noexcept { return store_; }
  const ParamStore& store() const noexcept { return store_; }
  const Eigen::VectorXd& params() const noexcept { return store_.flat(); }

  /// Xavier-uniform weights and zero biases.
  void initialize(std::uint64_t seed);

  /// dz = drift dt + diffusion dW with the given parameters.
  SdeModel prior_sde(const Eigen::VectorXd& params) const;
  /// The dynamics that generate latent paths: postdrift in separate mode, the prior otherwise.
  SdeModel posterior_sde(const Eigen::VectorXd& params) const;

  /// Weight-matrix prefixes held under the spectral bound.
  std::vector<std::string> constrained_prefixes() const;

  RecurrentEncoder encoder;
  NeuralField drift;
  NeuralField postdrift;
  NeuralField diffusion;
  NeuralField decoder;
  NeuralField coadj;

 private:
  ModelSpec spec_;
  ParamStore store_;
};

const char* to_string(DiffusionMode m);
const char* to_string(PosteriorMode m);
const char* to_string(NoiseModel m);

}  // namespace sldi
