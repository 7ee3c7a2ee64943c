#include "sldi/model.hpp"

#include "sldi/errors.hpp"
#include "sldi/spectral.hpp"

namespace sldi {

void ModelSpec::validate() const {
  if (latent_dim < 1 || obs_dim < 1 || encoder_hidden < 1) throw ConfigError("model dimensions must be positive");
  for (const auto* list : {&drift_hidden, &diffusion_hidden, &decoder_hidden, &coadjoint_hidden})
    for (auto w : *list)
      if (w < 1) throw ConfigError("hidden widths must be positive");
  if (noise == NoiseModel::fixed && !(obs_var > 0.0)) throw ConfigError("obs_var must be positive");
  if (posterior == PosteriorMode::separate_drift && diffusion_mode == DiffusionMode::full)
    throw ConfigError("separate posterior drift needs diagonal or scalar diffusion");
}

SldiModel::SldiModel(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  const Eigen::Index d = spec.latent_dim, n = spec.obs_dim;
  const Eigen::Index diff_out = spec.diffusion_mode == DiffusionMode::diagonal ? d
                                : spec.diffusion_mode == DiffusionMode::scalar ? 1
                                                                               : d * d;
  encoder = RecurrentEncoder(store_, "enc", n, d, spec.encoder_hidden);
  drift = NeuralField(store_, "drift", FieldSpec::mlp(d + 1, spec.drift_hidden, d));
  if (spec.posterior == PosteriorMode::separate_drift)
    postdrift = NeuralField(store_, "postdrift", FieldSpec::mlp(d + 1, spec.drift_hidden, d));
  diffusion = NeuralField(store_, "diffusion",
                          FieldSpec::mlp(d + 1, spec.diffusion_hidden, diff_out, Activation::tanh, Activation::softplus));
  decoder = NeuralField(store_, "dec", FieldSpec::mlp(d, spec.decoder_hidden, spec.noise == NoiseModel::fixed ? n : 2 * n));
  coadj = NeuralField(store_, "coadj", FieldSpec::mlp(d + 1, spec.coadjoint_hidden, d));
}

void SldiModel::initialize(std::uint64_t seed) { xavier_init(store_, seed); }

SdeModel SldiModel::prior_sde(const Eigen::VectorXd& params) const {
  SdeModel m{drift, diffusion, spec_.latent_dim, spec_.latent_dim, spec_.diffusion_mode, params};
  m.validate();
  return m;
}

SdeModel SldiModel::posterior_sde(const Eigen::VectorXd& params) const {
  if (spec_.posterior == PosteriorMode::shared_dynamics) return prior_sde(params);
  SdeModel m{postdrift, diffusion, spec_.latent_dim, spec_.latent_dim, spec_.diffusion_mode, params};
  m.validate();
  return m;
}

std::vector<std::string> SldiModel::constrained_prefixes() const {
  std::vector<std::string> p{"drift.", "diffusion."};
  if (spec_.posterior == PosteriorMode::separate_drift) p.push_back("postdrift.");
  return p;
}

const char* to_string(DiffusionMode m) {
  switch (m) {
    case DiffusionMode::full: return "full";
    case DiffusionMode::diagonal: return "diagonal";
    case DiffusionMode::scalar: return "scalar";
  }
  return "diagonal";
}

const char* to_string(PosteriorMode m) { return m == PosteriorMode::shared_dynamics ? "shared" : "separate"; }
const char* to_string(NoiseModel m) { return m == NoiseModel::fixed ? "fixed" : "heteroscedastic"; }

}  // namespace sldi
