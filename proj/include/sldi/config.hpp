#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sldi/dataset.hpp"
#include "sldi/model.hpp"
#include "sldi/objective.hpp"
#include "sldi/sde.hpp"
#include "sldi/variational.hpp"

namespace sldi {

struct OptimConfig {
  double lr = 1e-3;
  /// Cosine decay from lr to lr * lr_final_fraction over the run; 1 keeps lr constant.
  double lr_final_fraction = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t steps = 5000;
  bool variance_clip = true;
  double alpha = 0.9;
  double rho = 0.99;
  double spectral_bound = 2.0;
  int spectral_iters = 50;
  /// Parameter-name prefixes that are updated; empty means every parameter.
  std::vector<std::string> train_prefixes;
  /// Abort when more than this fraction of a batch's samples diverge.
  double blowup_abort = 0.5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t log_every = 50;
  std::size_t checkpoint_every = 1000;
  /// Validation ELBO is logged every this many steps (0 disables).
  std::size_t eval_every = 500;
  std::size_t eval_samples = 64;
  /// Held-out evaluation conditions on observations with t <= fraction * horizon.
  double context_fraction = 0.5;
  /// Dataset file used by train / eval.
  std::string data;
};

struct GenerateConfig {
  std::string generator = "ou";
  GenOptions options;
  OuParams ou;
  GbmParams gbm;
  SinusoidParams sinusoid;
};

/// Everything a run depends on. Sections of the config file:
/// [model], [objective], [optim], [anneal], [run], [generate].
struct TrainConfig {
  ModelSpec model;
  ObjectiveConfig objective;
  Scheme scheme = Scheme::em;
  OptimConfig optim;
  AnnealSchedule anneal;
  RunConfig run;
  GenerateConfig generate;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Parse "[section]" headers and "key = value" lines; '#' and ';' start comments.
/// Unknown sections or keys, duplicates, malformed and out-of-range values throw ConfigError
/// naming the line. Keys absent from the text keep their defaults.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Every field, written so that parse_config(to_config_text(c)) == c.
std::string to_config_text(const TrainConfig& c);
void save_config(const std::filesystem::path& path, const TrainConfig& c);

bool operator==(const TrainConfig& a, const TrainConfig& b);

DiffusionMode parse_diffusion_mode(const std::string& s);
PosteriorMode parse_posterior(const std::string& s);
NoiseModel parse_noise(const std::string& s);
GradMode parse_grad_mode(const std::string& s);
Scheme parse_scheme(const std::string& s);
AnnealSchedule::Kind parse_anneal_kind(const std::string& s);
const char* to_string(Scheme s);
const char* to_string(AnnealSchedule::Kind k);

}  // namespace sldi
