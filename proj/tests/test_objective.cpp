#include <doctest.h>

#include <cmath>

#include "sldi/dataset.hpp"
#include "sldi/errors.hpp"
#include "sldi/finite_diff.hpp"
#include "sldi/objective.hpp"

using namespace sldi;

namespace {

std::vector<ObservationSeq> small_batch(std::size_t n, Eigen::Index dim, std::uint64_t seed) {
  GenOptions opt;
  opt.n_seq = n;
  opt.steps = 8;
  opt.horizon = 1.0;
  opt.keep_prob = 0.7;
  opt.seed = seed;
  OuParams p;
  p.dim = static_cast<std::size_t>(dim);
  std::vector<ObservationSeq> out;
  for (const auto& r : gen_ou(opt, p).records) out.push_back(r.seq);
  return out;
}

ModelSpec small_spec(PosteriorMode posterior, NoiseModel noise, DiffusionMode mode) {
  ModelSpec s;
  s.latent_dim = 2;
  s.obs_dim = 2;
  s.drift_hidden = {6};
  s.diffusion_hidden = {4};
  s.decoder_hidden = {5};
  s.coadjoint_hidden = {4};
  s.encoder_hidden = 5;
  s.posterior = posterior;
  s.noise = noise;
  s.diffusion_mode = mode;
  return s;
}

}  // namespace

TEST_CASE("model layout") {
  SldiModel shared(small_spec(PosteriorMode::shared_dynamics, NoiseModel::fixed, DiffusionMode::diagonal));
  CHECK_FALSE(shared.store().contains("postdrift.l0.w"));
  CHECK(shared.store().contains("coadj.l1.b"));
  CHECK(shared.decoder.output_dim() == 2);
  CHECK(shared.constrained_prefixes() == std::vector<std::string>{"drift.", "diffusion."});
  SldiModel separate(small_spec(PosteriorMode::separate_drift, NoiseModel::heteroscedastic, DiffusionMode::scalar));
  CHECK(separate.store().contains("postdrift.l0.w"));
  CHECK(separate.decoder.output_dim() == 4);
  CHECK(separate.diffusion.output_dim() == 1);
  CHECK(separate.constrained_prefixes().size() == 3);

  ModelSpec bad = small_spec(PosteriorMode::shared_dynamics, NoiseModel::fixed, DiffusionMode::diagonal);
  bad.latent_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec(PosteriorMode::separate_drift, NoiseModel::fixed, DiffusionMode::full);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_spec(PosteriorMode::shared_dynamics, NoiseModel::fixed, DiffusionMode::diagonal);
  bad.obs_var = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("simulation grid contains every observation time") {
  const ObservationSeq obs{{0.1, 0.33, 2.5}, Eigen::MatrixXd::Zero(1, 3), {}};
  const TimeGrid g = simulation_grid(obs, 2.0, 0.25);
  CHECK(g.t1() == 2.5);
  for (double t : obs.timestamps) CHECK(g.index_of(t).has_value());
  CHECK(g.index_of(1.75).has_value());
  const ObservationSeq early{{-0.1}, Eigen::MatrixXd::Zero(1, 1), {}};
  CHECK_THROWS_AS(simulation_grid(early, 2.0, 0.25), GridError);
}

TEST_CASE("ELBO breakdown identity and sample accounting") {
  SldiModel model(small_spec(PosteriorMode::separate_drift, NoiseModel::fixed, DiffusionMode::diagonal));
  model.initialize(3);
  const auto batch = small_batch(3, 2, 1);
  ObjectiveConfig cfg;
  cfg.dt = 1.0 / 16;
  cfg.horizon = 1.0;
  cfg.mc_samples = 2;
  const ElboResult r = elbo(model, model.params(), batch, cfg, 5, 0.4, true);
  CHECK(r.samples == 6);
  CHECK(r.blowups == 0);
  CHECK(r.breakdown.annealing_weight == 0.4);
  CHECK(r.breakdown.total == r.breakdown.recombined());
  CHECK(r.breakdown.kl_path > 0.0);
  CHECK(r.breakdown.r_path > 0.0);
  CHECK(r.breakdown.adjoint_penalty > 0.0);
  CHECK(r.grad.size() == model.params().size());

  const ElboResult again = elbo(model, model.params(), batch, cfg, 5, 0.4, true);
  CHECK(again.breakdown.total == r.breakdown.total);
  CHECK(again.grad == r.grad);

  cfg.antithetic = true;
  CHECK(elbo(model, model.params(), batch, cfg, 5, 0.4, false).samples == 12);
}

TEST_CASE("matched posterior drift has zero pathwise KL") {
  SldiModel model(small_spec(PosteriorMode::separate_drift, NoiseModel::fixed, DiffusionMode::diagonal));
  model.initialize(8);
  Eigen::VectorXd p = model.params();
  for (std::size_t l = 0; l < model.drift.layers().size(); ++l) {
    const auto& a = model.drift.layers()[l];
    const auto& b = model.postdrift.layers()[l];
    p.segment(b.w_offset, b.rows * b.cols) = p.segment(a.w_offset, a.rows * a.cols);
    p.segment(b.b_offset, b.rows) = p.segment(a.b_offset, a.rows);
  }
  ObjectiveConfig cfg;
  cfg.horizon = 1.0;
  const ElboResult r = elbo(model, p, small_batch(2, 2, 4), cfg, 1, 1.0, false);
  CHECK(r.breakdown.kl_path == 0.0);
}

TEST_CASE("diverging paths are counted, not averaged") {
  SldiModel model(small_spec(PosteriorMode::shared_dynamics, NoiseModel::fixed, DiffusionMode::diagonal));
  model.initialize(2);
  Eigen::VectorXd p = model.params();
  const auto& out = model.drift.layers().back();
  p.segment(out.b_offset, out.rows).setConstant(1e308);
  ObjectiveConfig cfg;
  cfg.horizon = 4.0;
  const ElboResult r = elbo(model, p, small_batch(2, 2, 4), cfg, 1, 1.0, true);
  CHECK(r.samples == 0);
  CHECK(r.blowups == 2);
  CHECK(r.breakdown.total == -INFINITY);
}

TEST_CASE("tape gradient of the objective matches finite differences per block") {
  struct Fixture {
    PosteriorMode posterior;
    NoiseModel noise;
    DiffusionMode mode;
  };
  for (const Fixture fx : {Fixture{PosteriorMode::shared_dynamics, NoiseModel::heteroscedastic, DiffusionMode::diagonal},
                           Fixture{PosteriorMode::separate_drift, NoiseModel::fixed, DiffusionMode::scalar}}) {
    SldiModel model(small_spec(fx.posterior, fx.noise, fx.mode));
    model.initialize(13);
    const auto batch = small_batch(2, 2, 6);
    ObjectiveConfig cfg;
    cfg.dt = 1.0 / 16;
    cfg.horizon = 1.0;
    cfg.beta = 0.0;
    cfg.lambda = 0.05;
    const double w = 0.7;
    const Eigen::VectorXd p = model.params();
    const Eigen::VectorXd g = elbo(model, p, batch, cfg, 3, w, true).grad;
    const auto f = [&](const Eigen::VectorXd& q) { return elbo(model, q, batch, cfg, 3, w, false).breakdown.total; };
    for (const char* block : {"enc.", "drift.", "postdrift.", "diffusion.", "dec."}) {
      const Eigen::VectorXd mask = model.store().mask(block);
      if (mask.sum() == 0.0) continue;
      const Eigen::VectorXd fd = finite_diff_grad(f, p, 1e-5, mask);
      CAPTURE(block);
      CHECK(max_relative_error(g.cwiseProduct(mask), fd, 1e-3) < 1e-6);
      CHECK(g.cwiseProduct(mask).norm() > 0.0);
    }

    SUBCASE("co-adjoint block under stop-gradient supervision") {
      cfg.beta = 0.3;
      const Eigen::VectorXd gb = elbo(model, p, batch, cfg, 3, w, true).grad;
      const Eigen::VectorXd mask = model.store().mask("coadj.");
      const auto fb = [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd full = p;
        full += (q - p).cwiseProduct(mask);
        return elbo(model, full, batch, cfg, 3, w, false).breakdown.total;
      };
      CHECK(max_relative_error(gb.cwiseProduct(mask), finite_diff_grad(fb, p, 1e-5, mask), 1e-3) < 1e-6);
      CHECK(max_relative_error(gb - gb.cwiseProduct(mask), g, 1e-9) < 1e-12);
    }
  }
}

TEST_CASE("importance-sampled log-likelihood") {
  SldiModel model(small_spec(PosteriorMode::separate_drift, NoiseModel::fixed, DiffusionMode::diagonal));
  model.initialize(4);
  const auto batch = small_batch(1, 2, 9);
  ObjectiveConfig cfg;
  cfg.horizon = 1.0;
  cfg.lambda = 0.0;
  cfg.beta = 0.0;
  const LogLikEstimate one = is_loglik(model, model.params(), batch[0], cfg, 1, 2);
  CHECK(one.se == 0.0);
  CHECK(std::isfinite(one.value));
  const LogLikEstimate many = is_loglik(model, model.params(), batch[0], cfg, 2000, 2);
  const ElboResult e = [&] {
    ObjectiveConfig c = cfg;
    c.mc_samples = 2000;
    return elbo(model, model.params(), batch, c, 7, 1.0, false);
  }();
  CHECK(many.se > 0.0);
  CHECK(e.breakdown.total <= many.value + 3.0 * many.se);
  CHECK_THROWS_AS(is_loglik(model, model.params(), batch[0], cfg, 0, 2), InvalidInput);
}
