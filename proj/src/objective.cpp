#include "sldi/objective.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sldi/adjoint.hpp"
#include "sldi/errors.hpp"
#include "sldi/rng.hpp"
#include "sldi/tape.hpp"

namespace sldi {

const char* to_string(GradMode m) {
  switch (m) {
    case GradMode::tape: return "tape";
    case GradMode::adjoint: return "adjoint";
    case GradMode::adjoint_corrected: return "adjoint-corrected";
  }
  return "tape";
}

TimeGrid simulation_grid(const ObservationSeq& obs, double horizon, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("step size must be positive");
  if (!obs.timestamps.empty() && obs.timestamps.front() < 0.0)
    throw GridError("observations before the latent origin t = 0");
  const double end = std::max(horizon, obs.timestamps.empty() ? 0.0 : obs.timestamps.back());
  return TimeGrid::with_step(0.0, end, dt).merged(obs.timestamps);
}

SampleDraw draw_sample(const TimeGrid& grid, Eigen::Index d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0}));
  return {standard_normal(rng, d), sample_brownian(grid, d, derive_seed(seed, {1}))};
}

namespace {

std::vector<std::size_t> observation_knots(const ObservationSeq& obs, const TimeGrid& grid) {
  std::vector<std::size_t> knots;
  for (double t : obs.timestamps) {
    const auto k = grid.index_of(t);
    if (!k) throw GridError("observation time is not a knot of the simulation grid");
    knots.push_back(*k);
  }
  return knots;
}

double obs_variance(const SldiModel& model) { return model.spec().obs_var; }

// Cotangent on the raw diffusion output for a cotangent on the diagonal of Sigma.
Eigen::VectorXd diag_to_raw(DiffusionMode mode, const Eigen::VectorXd& g) {
  if (mode == DiffusionMode::scalar) return Eigen::VectorXd::Constant(1, g.sum());
  return g;
}

}  // namespace

SampleTerms sample_objective(const SldiModel& model, const Eigen::VectorXd& params, const ObservationSeq& obs,
                             const ObjectiveConfig& cfg, const TimeGrid& grid, const SampleDraw& draw, double kl_weight,
                             Eigen::VectorXd* grad) {
  const ModelSpec& spec = model.spec();
  const Eigen::Index d = spec.latent_dim;
  const bool separate = spec.posterior == PosteriorMode::separate_drift;
  const std::vector<std::size_t> obs_knots = observation_knots(obs, grid);
  const auto K = static_cast<Eigen::Index>(grid.size());
  SampleTerms terms;
  Tape tape(params.size());

  // q(z0 | x) and the reparameterised initial state.
  RecurrentEncoder::Cache enc_cache;
  const GaussianDist q = model.encoder.encode(params, obs, {}, 0.0, &enc_cache);
  terms.entropy = q.entropy();
  Eigen::VectorXd enc_out(2 * d);
  enc_out << enc_cache.mean, enc_cache.logvar;
  const VarId v_enc = tape.variable(enc_out);
  tape.add_node([&](Tape& t) {
    if (!t.has_grad(v_enc)) return;
    const Eigen::VectorXd g = t.grad(v_enc);
    model.encoder.vjp(params, enc_cache, g.head(d), g.tail(d), t.param_grad());
  });

  const Eigen::VectorXd sd = (0.5 * enc_cache.logvar.array()).exp().matrix();
  const VarId v_z0 = tape.variable(q.mean + sd.cwiseProduct(draw.eps));
  tape.add_node([&](Tape& t) {
    if (!t.has_grad(v_z0)) return;
    const Eigen::VectorXd g = t.grad(v_z0);
    auto& ge = t.grad(v_enc);
    ge.head(d) += g;
    ge.tail(d) += 0.5 * g.cwiseProduct(sd).cwiseProduct(draw.eps);
  });

  const GaussianDist prior0 = GaussianDist::standard(d);
  terms.kl_z0 = gaussian_kl(q, prior0);
  const VarId v_kl0 = tape.variable(Eigen::VectorXd::Constant(1, terms.kl_z0));
  tape.add_node([&](Tape& t) {
    if (!t.has_grad(v_kl0)) return;
    const double g = t.grad(v_kl0)[0];
    auto& ge = t.grad(v_enc);
    ge.head(d) += g * q.mean;
    ge.tail(d) += g * 0.5 * (q.var.array() - 1.0).matrix();
  });

  // Latent path from the generating dynamics.
  const SdeModel post = model.posterior_sde(params);
  const SolverTape solver = record_path(post, tape.value(v_z0), grid, draw.noise);
  const LatentPath& path = solver.path;
  const VarId v_path = tape.variable(Eigen::Map<const Eigen::VectorXd>(path.states.data(), d * K));
  tape.add_node([&](Tape& t) {
    if (!t.has_grad(v_path)) return;
    const Eigen::Map<const Eigen::MatrixXd> C(t.grad(v_path).data(), d, K);
    if (cfg.grad_mode == GradMode::tape) {
      const SolverGradient sg = backprop_through_solver(&solver, C);
      t.param_grad() += sg.param_grad;
      t.grad(v_z0) += sg.z0_grad;
    } else {
      const AdjointTrace tr =
          adjoint_backward(post, path, Eigen::MatrixXd(C),
                           cfg.grad_mode == GradMode::adjoint ? AdjointMode::drift_only
                                                              : AdjointMode::with_diffusion_correction);
      t.param_grad() += tr.param_grad;
      t.grad(v_z0) += tr.adjoints.col(0);
    }
  });

  // Reconstruction at the observation knots.
  std::vector<NeuralField::Cache> dec_caches(obs_knots.size());
  for (std::size_t j = 0; j < obs_knots.size(); ++j) {
    const Eigen::VectorXd& out = model.decoder.forward(params, path.state(obs_knots[j]), dec_caches[j]);
    terms.recon += emission_from_output(out, obs.values.col(static_cast<Eigen::Index>(j)), spec.noise, obs_variance(model));
  }
  const VarId v_recon = tape.variable(Eigen::VectorXd::Constant(1, terms.recon));
  tape.add_node([&](Tape& t) {
    if (!t.has_grad(v_recon)) return;
    const double g = t.grad(v_recon)[0];
    auto& gp = t.grad(v_path);
    for (std::size_t j = 0; j < obs_knots.size(); ++j) {
      const Eigen::VectorXd cot =
          g * emission_output_grad(dec_caches[j].output, obs.values.col(static_cast<Eigen::Index>(j)), spec.noise,
                                   obs_variance(model));
      gp.segment(d * static_cast<Eigen::Index>(obs_knots[j]), d) +=
          model.decoder.vjp(params, dec_caches[j], cot, t.param_grad());
    }
  });

  // Pathwise KL between posterior and prior drifts sharing one diffusion.
  struct KlStep {
    NeuralField::Cache q, p, s;
  };
  std::vector<KlStep> kl_steps;
  VarId v_klp = tape.variable(Eigen::VectorXd::Zero(1));
  if (separate) {
    kl_steps.resize(grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const Eigen::VectorXd x = state_time(path.state(k), grid[k]);
      const auto& mq = model.postdrift.forward(params, x, kl_steps[k].q);
      const auto& mp = model.drift.forward(params, x, kl_steps[k].p);
      const Eigen::VectorXd s = diffusion_diagonal(spec.diffusion_mode, d, model.diffusion.forward(params, x, kl_steps[k].s));
      terms.kl_path += transition_kl_step(mq, mp, s, grid.dt(k));
    }
    v_klp = tape.variable(Eigen::VectorXd::Constant(1, terms.kl_path));
    tape.add_node([&](Tape& t) {
      if (!t.has_grad(v_klp)) return;
      const double g = t.grad(v_klp)[0];
      auto& gp = t.grad(v_path);
      for (std::size_t k = 0; k < grid.steps(); ++k) {
        const auto& st = kl_steps[k];
        const double dt = grid.dt(k);
        const Eigen::ArrayXd s = diffusion_diagonal(spec.diffusion_mode, d, st.s.output).array();
        const Eigen::ArrayXd r = (st.q.output - st.p.output).array();
        const Eigen::VectorXd g_mu = (g * dt * r / s.square()).matrix();
        const Eigen::VectorXd g_s = (-g * dt * r.square() / s.cube()).matrix();
        Eigen::VectorXd gx = model.postdrift.vjp(params, st.q, g_mu, t.param_grad());
        gx += model.drift.vjp(params, st.p, -g_mu, t.param_grad());
        gx += model.diffusion.vjp(params, st.s, diag_to_raw(spec.diffusion_mode, g_s), t.param_grad());
        gp.segment(d * static_cast<Eigen::Index>(k), d) += gx.head(d);
      }
    });
  }

  // Drift energy of the generating dynamics.
  std::vector<NeuralField::Cache> energy_caches;
  VarId v_energy = tape.variable(Eigen::VectorXd::Zero(1));
  if (cfg.lambda > 0.0) {
    energy_caches.resize(grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k)
      terms.r_path += post.drift.forward(params, state_time(path.state(k), grid[k]), energy_caches[k]).squaredNorm() *
                      grid.dt(k);
    terms.r_path *= cfg.lambda;
    v_energy = tape.variable(Eigen::VectorXd::Constant(1, terms.r_path));
    tape.add_node([&](Tape& t) {
      if (!t.has_grad(v_energy)) return;
      const double g = t.grad(v_energy)[0];
      auto& gp = t.grad(v_path);
      for (std::size_t k = 0; k < grid.steps(); ++k) {
        const Eigen::VectorXd cot = (2.0 * g * cfg.lambda * grid.dt(k)) * energy_caches[k].output;
        gp.segment(d * static_cast<Eigen::Index>(k), d) +=
            post.drift.vjp(params, energy_caches[k], cot, t.param_grad()).head(d);
      }
    });
  } else if (cfg.lambda < 0.0) {
    throw InvalidInput("path-energy weight must be non-negative");
  }

  // Co-adjoint supervision on the detached path.
  if (cfg.beta > 0.0) {
    Eigen::MatrixXd inject = Eigen::MatrixXd::Zero(d, K);
    for (std::size_t j = 0; j < obs_knots.size(); ++j) {
      const Eigen::VectorXd cot = emission_output_grad(dec_caches[j].output, obs.values.col(static_cast<Eigen::Index>(j)),
                                                       spec.noise, obs_variance(model));
      inject.col(static_cast<Eigen::Index>(obs_knots[j])) += model.decoder.vjp_input(params, dec_caches[j], cot);
    }
    const AdjointTrace trace = adjoint_backward(
        post, path, inject,
        cfg.grad_mode == GradMode::adjoint ? AdjointMode::drift_only : AdjointMode::with_diffusion_correction);
    terms.adjoint_penalty =
        cfg.beta * co_adjoint_train_loss(model.coadj, params, path, trace, grad, -cfg.beta);
  } else if (cfg.beta < 0.0) {
    throw InvalidInput("co-adjoint weight must be non-negative");
  }

  if (grad) {
    const VarId v_total = ad::linear_combination(
        tape, {{1.0, v_recon}, {-kl_weight, v_kl0}, {-kl_weight, v_klp}, {-1.0, v_energy}});
    tape.backward(v_total);
    *grad += tape.param_grad();
  }
  return terms;
}

ElboResult elbo(const SldiModel& model, const Eigen::VectorXd& params, const std::vector<ObservationSeq>& batch,
                const ObjectiveConfig& cfg, std::uint64_t seed, double kl_weight, bool want_grad) {
  if (cfg.mc_samples < 1) throw InvalidInput("at least one Monte Carlo sample per sequence");
  ElboResult res;
  res.breakdown.annealing_weight = kl_weight;
  if (want_grad) res.grad = Eigen::VectorXd::Zero(params.size());
  const Eigen::Index d = model.spec().latent_dim;
  SampleTerms sum;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TimeGrid grid = simulation_grid(batch[i], cfg.horizon, cfg.dt);
    const std::size_t draws = cfg.antithetic ? 2 * cfg.mc_samples : cfg.mc_samples;
    SampleDraw base;
    for (std::size_t s = 0; s < draws; ++s) {
      const bool mirrored = cfg.antithetic && s % 2 == 1;
      if (!mirrored) base = draw_sample(grid, d, derive_seed(seed, {i, cfg.antithetic ? s / 2 : s}));
      try {
        const SampleTerms t = sample_objective(model, params, batch[i], cfg, grid, mirrored ? base.negated() : base,
                                               kl_weight, want_grad ? &res.grad : nullptr);
        sum.recon += t.recon;
        sum.kl_z0 += t.kl_z0;
        sum.kl_path += t.kl_path;
        sum.r_path += t.r_path;
        sum.adjoint_penalty += t.adjoint_penalty;
        sum.entropy += t.entropy;
        ++res.samples;
      } catch (const NumericalBlowup&) {
        ++res.blowups;
      }
    }
  }
  if (res.samples > 0) {
    const auto n = static_cast<double>(res.samples);
    auto& b = res.breakdown;
    b.recon = sum.recon / n;
    b.kl_z0 = sum.kl_z0 / n;
    b.kl_path = sum.kl_path / n;
    b.r_path = sum.r_path / n;
    b.adjoint_penalty = sum.adjoint_penalty / n;
    b.total = b.recombined();
    res.mean_entropy = sum.entropy / n;
    if (want_grad) res.grad /= n;
  } else {
    res.breakdown.total = -INFINITY;
  }
  return res;
}

LogLikEstimate is_loglik(const SldiModel& model, const Eigen::VectorXd& params, const ObservationSeq& obs,
                         const ObjectiveConfig& cfg, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw InvalidInput("importance sampling needs at least one sample");
  const ModelSpec& spec = model.spec();
  const Eigen::Index d = spec.latent_dim;
  const bool separate = spec.posterior == PosteriorMode::separate_drift;
  const TimeGrid grid = simulation_grid(obs, cfg.horizon, cfg.dt);
  const std::vector<std::size_t> knots = observation_knots(obs, grid);
  const GaussianDist q = model.encoder.encode(params, obs);
  const SdeModel post = model.posterior_sde(params);

  std::vector<double> logw;
  logw.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const SampleDraw draw = draw_sample(grid, d, derive_seed(seed, {0, s}));
    const Eigen::VectorXd z0 = reparam_sample(q, draw.eps);
    double lw = 0.0;
    // log p(z0) - log q(z0)
    lw += -0.5 * z0.squaredNorm() + 0.5 * draw.eps.squaredNorm() + 0.5 * q.var.array().log().sum();
    try {
      const LatentPath path = simulate_path(post, z0, grid, draw.noise);
      for (std::size_t j = 0; j < knots.size(); ++j)
        lw += emission_loglik(model.decoder, params, path.state(knots[j]), obs.values.col(static_cast<Eigen::Index>(j)),
                              spec.noise, spec.obs_var);
      if (separate) {
        for (std::size_t k = 0; k < grid.steps(); ++k) {
          const Eigen::VectorXd x = state_time(path.state(k), grid[k]);
          const double dt = grid.dt(k);
          const Eigen::ArrayXd s2 = diffusion_diagonal(spec.diffusion_mode, d, model.diffusion.eval(params, x)).array().square();
          const Eigen::VectorXd dz = path.state(k + 1) - path.state(k);
          const Eigen::ArrayXd rp = (dz - dt * model.drift.eval(params, x)).array();
          const Eigen::ArrayXd rq = (dz - dt * model.postdrift.eval(params, x)).array();
          lw += ((rq.square() - rp.square()) / (2.0 * s2 * dt)).sum();
        }
      }
    } catch (const NumericalBlowup&) {
      lw = -INFINITY;
    }
    logw.push_back(lw);
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(mx)) throw NumericsError("all importance weights vanished");
  double sw = 0.0, sw2 = 0.0;
  for (double lw : logw) {
    const double w = std::exp(lw - mx);
    sw += w;
    sw2 += w * w;
  }
  const auto n = static_cast<double>(n_samples);
  const double mean = sw / n;
  LogLikEstimate est;
  est.value = mx + std::log(mean);
  if (n_samples > 1) {
    const double var = std::max(0.0, (sw2 - n * mean * mean) / (n - 1.0));
    est.se = std::sqrt(var / n) / mean;
  }
  return est;
}

}  // namespace sldi
