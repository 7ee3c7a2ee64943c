#include "sldi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "sldi/adjoint.hpp"
#include "sldi/checkpoint.hpp"
#include "sldi/rng.hpp"
#include "sldi/spectral.hpp"

namespace sldi {

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& g, const Eigen::VectorXd* mask) {
  if (g.size() != params.size()) throw ShapeError("gradient and parameters differ in length");
  if (m_.size() == 0) {
    m_ = Eigen::VectorXd::Zero(params.size());
    v_ = Eigen::VectorXd::Zero(params.size());
  }
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * g;
  v_ = b2_ * v_ + (1.0 - b2_) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  Eigen::VectorXd delta = (lr_ * (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_)).matrix();
  if (mask) delta = delta.cwiseProduct(*mask);
  params -= delta;
}

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["total"] = breakdown.total;
  j["recon"] = breakdown.recon;
  j["kl_z0"] = breakdown.kl_z0;
  j["kl_path"] = breakdown.kl_path;
  j["r_path"] = breakdown.r_path;
  j["adjoint_penalty"] = breakdown.adjoint_penalty;
  j["annealing_weight"] = breakdown.annealing_weight;
  j["grad_norm"] = grad_norm;
  j["samples"] = samples;
  j["blowups"] = blowups;
  j["spectral_max"] = spectral_max;
  j["posterior_entropy"] = mean_entropy;
  if (val_elbo) j["val_elbo"] = *val_elbo;
  return j.dump();
}

double cosine_lr(double lr, double final_fraction, std::size_t step, std::size_t steps) {
  if (steps <= 1 || final_fraction == 1.0) return lr;
  const double progress = static_cast<double>(step - 1) / static_cast<double>(steps - 1);
  return lr * (final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

std::uint64_t init_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {0}); }
std::uint64_t validation_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {3}); }

double validation_elbo(const SldiModel& model, const Eigen::VectorXd& params, const std::vector<ObservationSeq>& data,
                       const TrainConfig& cfg, std::size_t samples, std::uint64_t seed) {
  if (data.empty()) return NAN;
  ObjectiveConfig oc = cfg.objective;
  oc.lambda = 0.0;
  oc.beta = 0.0;
  oc.antithetic = false;
  oc.mc_samples = samples;
  return elbo(model, params, data, oc, seed, 1.0, false).breakdown.total;
}

namespace {

std::vector<ObservationSeq> draw_batch(const std::vector<ObservationSeq>& data, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<ObservationSeq> batch;
  batch.reserve(size);
  for (std::size_t i = 0; i < size; ++i) batch.push_back(data[pick(rng)]);
  return batch;
}

Eigen::VectorXd train_mask(const SldiModel& model, const std::vector<std::string>& prefixes) {
  if (prefixes.empty()) return Eigen::VectorXd::Ones(model.params().size());
  Eigen::VectorXd m = Eigen::VectorXd::Zero(model.params().size());
  for (const auto& p : prefixes) {
    const Eigen::VectorXd part = model.store().mask(p);
    if (part.sum() == 0.0) throw ConfigError("optim.train_prefixes: no parameters match '" + p + "'");
    m = m.cwiseMax(part);
  }
  return m;
}

std::map<std::string, std::string> checkpoint_meta(const TrainConfig& cfg, std::size_t step) {
  return {{"step", std::to_string(step)},
          {"seed", std::to_string(cfg.run.seed)},
          {"latent_dim", std::to_string(cfg.model.latent_dim)},
          {"obs_dim", std::to_string(cfg.model.obs_dim)},
          {"posterior", to_string(cfg.model.posterior)},
          {"diffusion", to_string(cfg.model.diffusion_mode)},
          {"noise", to_string(cfg.model.noise)}};
}

}  // namespace

TrainResult train(SldiModel& model, const TrainConfig& cfg, const std::vector<ObservationSeq>& train_set,
                  const std::vector<ObservationSeq>& val_set, const std::optional<std::filesystem::path>& out_dir,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.scheme != Scheme::em)
    throw ConfigError("training differentiates the Euler-Maruyama recursion; use scheme = em");
  if (train_set.empty() && cfg.optim.steps > 0) throw ConfigError("the training split is empty");
  for (const auto* set : {&train_set, &val_set})
    for (const auto& s : *set)
      if (s.dim() != cfg.model.obs_dim)
        throw ConfigError("observation dimension " + std::to_string(s.dim()) + " does not match model.obs_dim = " +
                          std::to_string(cfg.model.obs_dim));

  const SpectralOptions spec_opts{cfg.optim.spectral_bound, cfg.optim.spectral_iters, 0};
  const auto prefixes = model.constrained_prefixes();
  model.initialize(init_seed(cfg.run.seed));
  if (hooks.after_init) hooks.after_init(model);
  model.store() = spectral_project(model.store(), prefixes, spec_opts);
  const Eigen::VectorXd mask = train_mask(model, cfg.optim.train_prefixes);

  std::ofstream metrics, timing;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    save_config(*out_dir / "config.ini", cfg);
    metrics.open(*out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    timing.open(*out_dir / "timing.jsonl", std::ios::binary | std::ios::trunc);
    if (!metrics || !timing) throw ConfigError("cannot write to " + out_dir->string());
  }

  TrainResult result;
  const std::uint64_t vseed = validation_seed(cfg.run.seed);
  result.initial_val_elbo = validation_elbo(model, model.params(), val_set, cfg, cfg.run.eval_samples, vseed);

  Adam adam(cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps);
  EwmaSmoother smoother{cfg.optim.alpha, cfg.optim.rho, {}};
  EntropyTracker tracker;
  AnnealSchedule schedule = cfg.anneal;
  if (schedule.kind == AnnealSchedule::Kind::entropy_aware && schedule.reference_entropy == 0.0)
    schedule.reference_entropy = GaussianDist::standard(cfg.model.latent_dim).entropy();
  const auto t_start = std::chrono::steady_clock::now();

  for (std::size_t step = 1; step <= cfg.optim.steps; ++step) {
    const auto batch = draw_batch(train_set, cfg.optim.batch_size, derive_seed(cfg.run.seed, {1, step}));
    const double w = kl_anneal(step - 1, schedule, &tracker, cfg.model.latent_dim);
    const ElboResult r = elbo(model, model.params(), batch, cfg.objective, derive_seed(cfg.run.seed, {2, step}), w, true);
    const auto attempted = static_cast<double>(r.samples + r.blowups);
    if (static_cast<double>(r.blowups) > cfg.optim.blowup_abort * attempted)
      throw TrainingAborted(step, std::to_string(r.blowups) + " of " + std::to_string(r.samples + r.blowups) +
                                      " samples diverged (limit " + std::to_string(cfg.optim.blowup_abort) + ")");
    if (!r.grad.allFinite()) throw TrainingAborted(step, "non-finite gradient");
    tracker.update(r.mean_entropy);

    Eigen::VectorXd g = r.grad.cwiseProduct(mask);
    if (cfg.optim.variance_clip) g = variance_clip(g, smoother);
    Eigen::VectorXd params = model.params();
    adam.set_lr(cosine_lr(cfg.optim.lr, cfg.optim.lr_final_fraction, step, cfg.optim.steps));
    adam.step(params, -g, &mask);
    model.store().set_flat(params);
    model.store() = spectral_project(model.store(), prefixes, spec_opts);
    if (hooks.after_step) hooks.after_step(step, model);

    const bool log = step % cfg.run.log_every == 0 || step == cfg.optim.steps;
    const bool eval = cfg.run.eval_every > 0 && step % cfg.run.eval_every == 0 && !val_set.empty();
    if (log || eval) {
      MetricsRecord rec;
      rec.step = step;
      rec.breakdown = r.breakdown;
      rec.grad_norm = r.grad.norm();
      rec.samples = r.samples;
      rec.blowups = r.blowups;
      rec.spectral_max = max_spectral_norm(model.store(), prefixes, spec_opts);
      rec.mean_entropy = r.mean_entropy;
      if (eval) rec.val_elbo = validation_elbo(model, model.params(), val_set, cfg, cfg.run.eval_samples, vseed);
      if (out_dir) {
        metrics << rec.to_json() << '\n';
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        timing << nlohmann::ordered_json{{"step", step}, {"wall_seconds", secs}}.dump() << '\n';
      }
      result.history.push_back(std::move(rec));
    }
    if (out_dir && cfg.run.checkpoint_every > 0 && step % cfg.run.checkpoint_every == 0)
      save_checkpoint(*out_dir / ("ckpt-" + std::to_string(step) + ".ckpt"),
                      make_checkpoint(model.store(), checkpoint_meta(cfg, step)));
  }

  result.final_val_elbo = validation_elbo(model, model.params(), val_set, cfg, cfg.run.eval_samples, vseed);
  if (out_dir) save_checkpoint(*out_dir / "final.ckpt", make_checkpoint(model.store(), checkpoint_meta(cfg, cfg.optim.steps)));
  return result;
}

}  // namespace sldi
