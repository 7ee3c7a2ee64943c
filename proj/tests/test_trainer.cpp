#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "model_fixtures.hpp"
#include "sldi/checkpoint.hpp"
#include "sldi/dataset.hpp"
#include "sldi/errors.hpp"
#include "sldi/evaluate.hpp"
#include "sldi/spectral.hpp"
#include "sldi/trainer.hpp"

using namespace sldi;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sldi_test_trainer" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.latent_dim = 2;
  c.model.obs_dim = 1;
  c.model.drift_hidden = {6};
  c.model.diffusion_hidden = {4};
  c.model.decoder_hidden = {5};
  c.model.coadjoint_hidden = {4};
  c.model.encoder_hidden = 5;
  c.objective.dt = 1.0 / 8;
  c.objective.horizon = 1.0;
  c.optim.steps = 6;
  c.optim.batch_size = 3;
  c.optim.lr = 1e-2;
  c.run.log_every = 2;
  c.run.eval_every = 3;
  c.run.eval_samples = 2;
  c.run.checkpoint_every = 4;
  return c;
}

Dataset tiny_data(std::uint64_t seed = 4) {
  GenOptions opt;
  opt.n_seq = 10;
  opt.steps = 8;
  opt.horizon = 1.0;
  opt.keep_prob = 0.6;
  opt.seed = seed;
  opt.train_fraction = 0.6;
  opt.val_fraction = 0.2;
  return gen_ou(opt, OuParams{});
}

}  // namespace

TEST_CASE("adam step and learning-rate schedule") {
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 0.0;
  adam.step(p, g);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-7));
  CHECK(p[2] == 0.0);
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(3);
  mask[0] = 0.0;
  const double before = p[0];
  adam.step(p, g, &mask);
  CHECK(p[0] == before);
  CHECK(adam.iterations() == 2);
  CHECK_THROWS_AS(adam.step(p, Eigen::VectorXd::Zero(2)), ShapeError);

  CHECK(cosine_lr(0.1, 0.01, 1, 11) == 0.1);
  CHECK(cosine_lr(0.1, 0.01, 11, 11) == doctest::Approx(0.001));
  CHECK(cosine_lr(0.1, 0.01, 6, 11) == doctest::Approx(0.0505));
  CHECK(cosine_lr(0.1, 1.0, 7, 11) == 0.1);
}

TEST_CASE("metrics records are single-line JSON with a fixed key order") {
  MetricsRecord r;
  r.step = 3;
  r.breakdown.total = -1.5;
  const std::string j = r.to_json();
  CHECK(j.find('\n') == std::string::npos);
  CHECK(j.rfind("{\"step\":3,\"total\":-1.5,\"recon\"", 0) == 0);
  CHECK(j.find("val_elbo") == std::string::npos);
  r.val_elbo = 2.0;
  CHECK(r.to_json().find("\"val_elbo\":2.0") != std::string::npos);
}

TEST_CASE("zero steps or zero learning rate leave the projected initialisation") {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config();
  SldiModel reference(c.model);
  reference.initialize(init_seed(c.run.seed));
  reference.store() = spectral_project(reference.store(), reference.constrained_prefixes(),
                                       {c.optim.spectral_bound, c.optim.spectral_iters, 0});

  c.optim.steps = 0;
  const fs::path dir = scratch("zero_steps");
  SldiModel m0(c.model);
  train(m0, c, ds.split(Split::train), ds.split(Split::val), dir);
  SldiModel loaded(c.model);
  restore(loaded.store(), load_checkpoint(dir / "final.ckpt"));
  CHECK(loaded.params() == reference.params());
  CHECK(slurp(dir / "metrics.jsonl").empty());

  c.optim.steps = 5;
  c.optim.lr = 0.0;
  SldiModel m1(c.model);
  train(m1, c, ds.split(Split::train), ds.split(Split::val), std::nullopt);
  CHECK(m1.params() == reference.params());
}

TEST_CASE("the optimizer consumes exactly the gradient of the objective") {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config();
  c.optim.steps = 1;
  c.optim.variance_clip = false;
  c.optim.spectral_bound = 1e6;
  c.optim.lr = 1e-3;
  c.anneal.kind = AnnealSchedule::Kind::constant;
  const std::vector<ObservationSeq> one{ds.records[0].seq};
  SldiModel model(c.model);
  Eigen::VectorXd p0;
  TrainHooks hooks;
  hooks.after_init = [&](SldiModel& m) { p0 = m.params(); };
  train(model, c, one, {}, std::nullopt, hooks);

  const std::vector<ObservationSeq> batch(c.optim.batch_size, one[0]);
  SldiModel probe(c.model);
  const Eigen::VectorXd g = elbo(probe, p0, batch, c.objective, derive_seed(c.run.seed, {2, 1}), 1.0, true).grad;
  const Eigen::VectorXd expected = p0 + (c.optim.lr * g.array() / (g.array().abs() + c.optim.eps)).matrix();
  CHECK((model.params() - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("spectral guard holds after every step and training is reproducible") {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config();
  c.optim.spectral_bound = 0.6;
  c.optim.lr = 0.05;
  double worst = 0.0;
  TrainHooks hooks;
  hooks.after_step = [&](std::size_t, const SldiModel& m) {
    worst = std::max(worst, max_spectral_norm(m.store(), m.constrained_prefixes(), {0.6, 200, 7}));
  };
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  SldiModel ma(c.model), mb(c.model);
  const TrainResult ra = train(ma, c, ds.split(Split::train), ds.split(Split::val), a, hooks);
  train(mb, c, ds.split(Split::train), ds.split(Split::val), b);
  CHECK(worst <= 0.6 * 1.001);
  CHECK(slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl"));
  CHECK(slurp(a / "final.ckpt") == slurp(b / "final.ckpt"));
  CHECK(slurp(a / "ckpt-4.ckpt") == slurp(b / "ckpt-4.ckpt"));
  CHECK(fs::exists(a / "timing.jsonl"));
  CHECK(parse_config(slurp(a / "config.ini")) == c);

  // log_every = 2 and eval_every = 3 over 6 steps: steps 2, 3, 4, 6.
  REQUIRE(ra.history.size() == 4);
  CHECK(ra.history[1].step == 3);
  CHECK(ra.history[1].val_elbo.has_value());
  CHECK_FALSE(ra.history[0].val_elbo.has_value());
  CHECK(std::isfinite(ra.initial_val_elbo));
  CHECK(std::isfinite(ra.final_val_elbo));

  TrainConfig other = c;
  other.run.seed = 1;
  const fs::path o = scratch("run_other");
  SldiModel mo(c.model);
  train(mo, other, ds.split(Split::train), ds.split(Split::val), o);
  CHECK(slurp(a / "metrics.jsonl") != slurp(o / "metrics.jsonl"));
}

TEST_CASE("training rejects inconsistent settings and aborts on divergence") {
  const Dataset ds = tiny_data();
  TrainConfig c = tiny_config();
  SldiModel m(c.model);
  TrainConfig mil = c;
  mil.scheme = Scheme::milstein;
  CHECK_THROWS_AS(train(m, mil, ds.split(Split::train), {}, std::nullopt), ConfigError);
  TrainConfig wide = c;
  wide.model.obs_dim = 2;
  SldiModel mw(wide.model);
  CHECK_THROWS_AS(train(mw, wide, ds.split(Split::train), {}, std::nullopt), ConfigError);
  CHECK_THROWS_AS(train(m, c, {}, {}, std::nullopt), ConfigError);
  TrainConfig bad_prefix = c;
  bad_prefix.optim.train_prefixes = {"nothing."};
  CHECK_THROWS_AS(train(m, bad_prefix, ds.split(Split::train), {}, std::nullopt), ConfigError);

  TrainConfig far = c;
  far.objective.horizon = 4.0;
  TrainHooks hooks;
  hooks.after_init = [](SldiModel& mm) {
    Eigen::VectorXd p = mm.params();
    p.segment(mm.drift.layers().back().b_offset, 2).setConstant(1e308);
    mm.store().set_flat(p);
  };
  try {
    train(m, far, ds.split(Split::train), {}, std::nullopt, hooks);
    FAIL("expected an abort");
  } catch (const TrainingAborted& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("plotting-position quantiles") {
  const std::vector<double> xs{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(plotting_position_quantile(xs, 0.5) == 5.0);
  CHECK(plotting_position_quantile(xs, 0.25) == doctest::Approx(2.5));
  CHECK(plotting_position_quantile(xs, 0.01) == 1.0);
  CHECK(plotting_position_quantile(xs, 0.99) == 9.0);
  CHECK(plotting_position_quantile({4.0}, 0.3) == 4.0);
  CHECK_THROWS_AS(plotting_position_quantile({}, 0.5), InvalidInput);
}

TEST_CASE("an exact decoder on noiseless constant data has zero error") {
  SldiModel m = testing::oracle_ou_model(0.0, 0.0, 1e-4, 0.7, 1e-30);
  ObservationSeq seq;
  seq.timestamps = {0.0, 0.3, 0.6, 1.1, 1.7, 2.0};
  seq.values = Eigen::MatrixXd::Constant(1, 6, 0.7);
  TrainConfig c;
  c.model = m.spec();
  const EvalMetrics e = evaluate(m, m.params(), {seq, seq}, c, 8, 3);
  CHECK(e.sequences == 2);
  CHECK(e.heldout == 6);
  CHECK(e.rmse < 1e-12);
  CHECK(e.to_json().find("\"coverage90\"") != std::string::npos);
}

TEST_CASE("the true OU model is calibrated") {
  const double theta = 1.0, sigma = 0.5, noise = 0.1;
  GenOptions opt;
  opt.n_seq = 300;
  opt.steps = 64;
  opt.horizon = 2.0;
  opt.keep_prob = 0.25;
  opt.seed = 21;
  OuParams p;
  p.theta = theta;
  p.sigma = sigma;
  p.obs_noise = noise;
  const Dataset ds = gen_ou(opt, p);
  std::vector<ObservationSeq> all;
  for (const auto& r : ds.records) all.push_back(r.seq);
  SldiModel m = testing::oracle_ou_model(theta, sigma, noise * noise, p.z0_mean, p.z0_std * p.z0_std);
  TrainConfig c;
  c.model = m.spec();
  c.objective.horizon = 2.0;
  c.objective.dt = 2.0 / 64;
  const EvalMetrics e = evaluate(m, m.params(), all, c, 64, 5);
  CHECK(e.coverage90 >= 0.85);
  CHECK(e.coverage90 <= 0.95);
  CHECK(e.coverage50 == doctest::Approx(0.5).epsilon(0.1));
  const EvalMetrics again = evaluate(m, m.params(), all, c, 64, 5);
  CHECK(again.to_json() == e.to_json());

  CHECK_THROWS_AS(evaluate(m, m.params(), {ObservationSeq{{0.5}, Eigen::MatrixXd::Zero(2, 1), {}}}, c, 4, 1),
                  ConfigError);
  CHECK_THROWS_AS(evaluate(m, m.params(), all, c, 1, 1), InvalidInput);
}
