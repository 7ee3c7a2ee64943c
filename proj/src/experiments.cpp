#include "sldi/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sldi/config.hpp"
#include "sldi/dataset.hpp"
#include "sldi/errors.hpp"
#include "sldi/expm.hpp"
#include "sldi/finite_diff.hpp"
#include "sldi/objective.hpp"
#include "sldi/rng.hpp"
#include "sldi/spectral.hpp"
#include "sldi/tape.hpp"
#include "sldi/trainer.hpp"

namespace sldi {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdFloor = 1e-3;

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", x);
  return buf;
}

std::vector<ObservationSeq> gradcheck_batch(Eigen::Index dim, std::uint64_t seed) {
  GenOptions opt;
  opt.n_seq = 2;
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

NeuralField* field_by_name(SldiModel& model, const std::string& name) {
  if (name == "drift") return &model.drift;
  if (name == "postdrift") return &model.postdrift;
  if (name == "diffusion") return &model.diffusion;
  if (name == "dec") return &model.decoder;
  if (name == "coadj") return &model.coadj;
  return nullptr;
}

void objective_rows(const std::string& fixture, ModelSpec spec, const GradcheckOptions& opts,
                    std::vector<GradcheckRow>& rows) {
  SldiModel model(spec);
  model.initialize(derive_seed(opts.seed, {11}));
  if (opts.fault_block) {
    NeuralField* f = field_by_name(model, *opts.fault_block);
    if (f && !f->layers().empty()) f->set_vjp_fault(1.5);
  }
  const auto batch = gradcheck_batch(spec.obs_dim, derive_seed(opts.seed, {12}));
  ObjectiveConfig cfg;
  cfg.dt = 1.0 / 16;
  cfg.horizon = 1.0;
  cfg.lambda = 0.05;
  const double w = 0.7;
  const std::uint64_t sample_seed = derive_seed(opts.seed, {13});
  const Eigen::VectorXd p = model.params();

  for (const char* block : {"enc", "drift", "postdrift", "diffusion", "dec", "coadj"}) {
    const Eigen::VectorXd mask = model.store().mask(std::string(block) + ".");
    if (mask.sum() == 0.0) continue;
    // The co-adjoint supervision is the only term that reaches the coadj block.
    cfg.beta = std::string(block) == "coadj" ? 0.3 : 0.0;
    const Eigen::VectorXd g = elbo(model, p, batch, cfg, sample_seed, w, true).grad.cwiseProduct(mask);
    const auto f = [&](const Eigen::VectorXd& q) { return elbo(model, q, batch, cfg, sample_seed, w, false).breakdown.total; };
    const double err = max_relative_error(g, finite_diff_grad(f, p, kFdStep, mask), kFdFloor);
    rows.push_back({fixture, block, err, kTapeTolerance, err < kTapeTolerance});
  }
}

void solver_full_row(const GradcheckOptions& opts, std::vector<GradcheckRow>& rows) {
  const Eigen::Index d = opts.base.latent_dim;
  ParamStore store;
  SdeModel m;
  m.d = m.m = d;
  m.mode = DiffusionMode::full;
  m.drift = NeuralField(store, "drift", FieldSpec::mlp(d + 1, {6}, d));
  m.diffusion = NeuralField(store, "diffusion", FieldSpec::mlp(d + 1, {4}, d * d));
  xavier_init(store, derive_seed(opts.seed, {21}));
  m.params = store.flat();
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 16);
  const BrownianPath noise = sample_brownian(grid, d, derive_seed(opts.seed, {22}));
  const Eigen::VectorXd z0 = Eigen::VectorXd::LinSpaced(d, 0.4, -0.3);
  const auto loss = [&](const LatentPath& path) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < path.states.cols(); ++k) s += path.states.col(k).squaredNorm() * (1.0 + 0.1 * k);
    return s;
  };
  const SolverTape tape = record_path(m, z0, grid, noise);
  Eigen::MatrixXd cot = tape.path.states;
  for (Eigen::Index k = 0; k < cot.cols(); ++k) cot.col(k) *= 2.0 * (1.0 + 0.1 * k);
  const SolverGradient g = backprop_through_solver(&tape, cot);
  const auto by_params = [&](const Eigen::VectorXd& q) {
    SdeModel mm = m;
    mm.params = q;
    return loss(simulate_path(mm, z0, grid, noise));
  };
  const auto by_z0 = [&](const Eigen::VectorXd& z) { return loss(simulate_path(m, z, grid, noise)); };
  const double ep = max_relative_error(g.param_grad, finite_diff_grad(by_params, m.params, kFdStep), kFdFloor);
  const double ez = max_relative_error(g.z0_grad, finite_diff_grad(by_z0, z0, kFdStep), kFdFloor);
  rows.push_back({"solver-full", "params", ep, kTapeTolerance, ep < kTapeTolerance});
  rows.push_back({"solver-full", "z0", ez, kTapeTolerance, ez < kTapeTolerance});
}

double norm_relative(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  const double scale = std::max(ref.norm(), 1e-12);
  return (a - ref).norm() / scale;
}

void adjoint_rows(const GradcheckOptions& opts, std::vector<GradcheckRow>& rows) {
  const Eigen::Index d = opts.base.latent_dim;
  ParamStore store;
  SdeModel m;
  m.d = m.m = d;
  m.mode = DiffusionMode::diagonal;
  m.drift = NeuralField(store, "drift", FieldSpec::mlp(d + 1, opts.base.drift_hidden, d));
  m.diffusion = NeuralField(store, "diffusion", FieldSpec::mlp(d + 1, {}, d));
  xavier_init(store, derive_seed(opts.seed, {31}));
  store = spectral_project(store, {"drift."});
  m.params = store.flat();
  m.params.tail(store.size() - m.diffusion.layers()[0].w_offset).setZero();

  const std::size_t steps = 1024;
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, steps);
  const Eigen::VectorXd z0 = Eigen::VectorXd::LinSpaced(d, 0.5, -0.5);
  const SolverTape tape = record_path(m, z0, grid, sample_brownian(grid, d, derive_seed(opts.seed, {32})));
  Eigen::MatrixXd cot = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k : {steps / 4, steps / 2, 3 * steps / 4, steps}) {
    const auto c = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd target = Eigen::VectorXd::Constant(d, 0.1 * static_cast<double>(c) / steps);
    cot.col(c) = 2.0 * (tape.path.states.col(c) - target);
  }
  const SolverGradient exact = backprop_through_solver(&tape, cot);
  const Eigen::VectorXd drift_mask = store.mask("drift.");
  const Eigen::VectorXd exact_drift = exact.param_grad.cwiseProduct(drift_mask);

  const auto add = [&](const std::string& block, double err) {
    rows.push_back({"adjoint-sigma0", block, err, kAdjointTolerance, err < kAdjointTolerance});
  };
  const AdjointTrace left = adjoint_backward(m, tape.path, cot, AdjointMode::drift_only, AdjointStencil::left_knot);
  const AdjointTrace right = adjoint_backward(m, tape.path, cot, AdjointMode::drift_only, AdjointStencil::right_knot);
  const AdjointTrace corrected =
      adjoint_backward(m, tape.path, cot, AdjointMode::with_diffusion_correction, AdjointStencil::left_knot);
  add("drift/left-knot", norm_relative(left.param_grad, exact_drift));
  add("drift/right-knot", norm_relative(right.param_grad, exact_drift));
  add("all/corrected", norm_relative(corrected.param_grad, exact.param_grad));
  add("z0/left-knot", norm_relative(left.adjoints.col(0), exact.z0_grad));
  add("z0/right-knot", norm_relative(right.adjoints.col(0), exact.z0_grad));
}

}  // namespace

std::vector<GradcheckRow> gradcheck(const GradcheckOptions& opts) {
  if (opts.base.latent_dim > 3 || opts.base.obs_dim > 3)
    throw ConfigError("gradcheck runs on models with latent_dim and obs_dim at most 3");
  opts.base.validate();
  if (opts.fault_block) {
    const auto& b = *opts.fault_block;
    if (b != "drift" && b != "postdrift" && b != "diffusion" && b != "dec" && b != "coadj")
      throw InvalidInput("cannot inject a fault into block '" + b + "'");
  }
  std::vector<GradcheckRow> rows;
  ModelSpec a = opts.base;
  a.posterior = PosteriorMode::shared_dynamics;
  a.noise = NoiseModel::heteroscedastic;
  a.diffusion_mode = DiffusionMode::diagonal;
  objective_rows("shared-hetero", a, opts, rows);
  ModelSpec b = opts.base;
  b.posterior = PosteriorMode::separate_drift;
  b.noise = NoiseModel::fixed;
  b.diffusion_mode = DiffusionMode::scalar;
  objective_rows("separate-fixed", b, opts, rows);
  solver_full_row(opts, rows);
  adjoint_rows(opts, rows);
  return rows;
}

std::string format_gradcheck(const std::vector<GradcheckRow>& rows) {
  std::ostringstream os;
  for (const auto& r : rows)
    os << "fixture " << r.fixture << " block " << r.block << " max_rel_err " << num(r.max_rel_err) << " threshold "
       << num(r.threshold) << ' ' << (r.pass ? "PASS" : "FAIL") << '\n';
  return os.str();
}

bool all_pass(const std::vector<GradcheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.pass; });
}

std::string convergence_csv(const std::vector<std::pair<Scheme, ErrorTable>>& tables) {
  std::ostringstream os;
  os << "scheme,dt,strong_error,strong_se,weak_error,strong_slope,weak_slope\n";
  for (const auto& [scheme, table] : tables) {
    const std::string ss = table.strong_slope ? num(*table.strong_slope) : "";
    const std::string ws = table.weak_slope ? num(*table.weak_slope) : "";
    for (const auto& r : table.rows)
      os << to_string(scheme) << ',' << num(r.dt) << ',' << num(r.strong) << ',' << num(r.strong_se) << ','
         << num(r.weak) << ',' << ss << ',' << ws << '\n';
  }
  return os.str();
}

std::string variance_csv(const VarianceReport& report) {
  std::ostringstream os;
  os << "estimator,mean_a,mean_c,var_a,var_c,trace_variance,bias_z\n";
  for (const auto& e : report.estimators) {
    os << e.name << ',' << num(e.mean[0]) << ',' << num(e.mean[1]) << ',' << num(e.variance[0]) << ','
       << num(e.variance[1]) << ',' << num(e.trace_variance) << ',';
    if (e.name == "antithetic") os << num(report.antithetic_bias_z);
    os << '\n';
  }
  return os.str();
}

std::vector<ObservationSeq> sample_lgs(const LinearGaussianSystem& sys, const std::vector<double>& times,
                                       std::size_t n, std::uint64_t seed) {
  sys.validate();
  if (times.empty() || times.front() < 0.0 || !std::is_sorted(times.begin(), times.end()) ||
      std::adjacent_find(times.begin(), times.end()) != times.end())
    throw InvalidInput("observation times must be non-negative and strictly increasing");
  const Eigen::Index d = sys.A.rows(), p = sys.C.rows();
  std::vector<Eigen::MatrixXd> F, L;
  double prev = 0.0;
  for (double t : times) {
    Eigen::MatrixXd f = Eigen::MatrixXd::Identity(d, d), q = Eigen::MatrixXd::Zero(d, d);
    if (t > prev) discretize_linear<double>(sys.A, sys.B, t - prev, f, q);
    F.push_back(f);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(q);
    Eigen::MatrixXd l = ldlt.transpositionsP().transpose() * Eigen::MatrixXd(ldlt.matrixL()) *
                        ldlt.vectorD().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    L.push_back(l);
    prev = t;
  }
  const Eigen::VectorXd obs_sd = sys.R.diagonal().cwiseSqrt();
  std::vector<ObservationSeq> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i}));
    Eigen::VectorXd z = reparam_sample(sys.prior, standard_normal(rng, d));
    ObservationSeq seq;
    seq.timestamps = times;
    seq.values.resize(p, static_cast<Eigen::Index>(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j) {
      z = F[j] * z + L[j] * standard_normal(rng, d);
      seq.values.col(static_cast<Eigen::Index>(j)) = sys.C * z + obs_sd.cwiseProduct(standard_normal(rng, p));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

GaussianDist kalman_z0_posterior(const LinearGaussianSystem& sys, const ObservationSeq& obs) {
  std::vector<double> knots{0.0};
  for (double t : obs.timestamps)
    if (t > 0.0) knots.push_back(t);
  const SmootherResult s = kalman_smoother(sys, obs, TimeGrid(knots));
  return {s.means.front(), s.covs.front().diagonal()};
}

namespace {

double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

TrainConfig ladder_config(const LadderOptions& o, const LadderRung& rung, std::uint64_t seed) {
  TrainConfig c;
  c.model.latent_dim = 1;
  c.model.obs_dim = 1;
  c.model.diffusion_mode = DiffusionMode::diagonal;
  c.model.drift_hidden = {};
  c.model.diffusion_hidden = {};
  c.model.decoder_hidden = {};
  c.model.coadjoint_hidden = {};
  c.model.encoder_hidden = rung.width;
  c.model.posterior = PosteriorMode::shared_dynamics;
  c.model.noise = NoiseModel::fixed;
  c.model.obs_var = o.obs_var;
  c.objective.dt = rung.dt;
  c.objective.horizon = o.obs_times.back();
  c.objective.lambda = 0.0;
  c.objective.beta = 0.0;
  c.objective.mc_samples = 1;
  c.optim.lr = o.lr;
  c.optim.lr_final_fraction = o.lr_final_fraction;
  c.optim.steps = o.steps;
  c.optim.batch_size = o.batch_size;
  c.optim.train_prefixes = {"enc."};
  c.anneal.kind = AnnealSchedule::Kind::constant;
  c.run.seed = seed;
  c.run.eval_every = 0;
  c.run.log_every = o.steps + 1;
  c.run.checkpoint_every = 0;
  return c;
}

void pin_generative_part(SldiModel& model, const LadderOptions& o) {
  Eigen::VectorXd p = model.params();
  model.drift.weight(p, 0)(0, 0) = o.drift;
  model.drift.weight(p, 0)(0, 1) = 0.0;
  p[model.drift.layers()[0].b_offset] = 0.0;
  model.diffusion.weight(p, 0).setZero();
  p[model.diffusion.layers()[0].b_offset] = softplus_inverse(o.diffusion);
  model.decoder.weight(p, 0)(0, 0) = o.emission;
  p[model.decoder.layers()[0].b_offset] = 0.0;
  model.store().set_flat(p);
}

/// Optimal q(z0 | x) of the shared-dynamics objective on the simulation grid: the
/// mean path factor g_j multiplies z0, so the Gaussian terms combine in closed form.
GaussianDist shared_dynamics_optimum(const LadderOptions& o, const ObservationSeq& obs, double dt) {
  const TimeGrid grid = simulation_grid(obs, o.obs_times.back(), dt);
  double precision = 1.0, shift = 0.0, g = 1.0;
  std::size_t j = 0;
  for (std::size_t k = 0; k < grid.size() && j < obs.length(); ++k) {
    if (k > 0) g *= 1.0 + o.drift * grid.dt(k - 1);
    if (std::abs(grid[k] - obs.timestamps[j]) < 1e-10) {
      precision += o.emission * o.emission * g * g / o.obs_var;
      shift += o.emission * g * obs.values(0, static_cast<Eigen::Index>(j)) / o.obs_var;
      ++j;
    }
  }
  return {Eigen::VectorXd::Constant(1, shift / precision), Eigen::VectorXd::Constant(1, 1.0 / precision)};
}

}  // namespace

LadderReport theorem_ladder(const LadderOptions& o) {
  if (o.rungs.empty() || o.seeds.empty()) throw InvalidInput("the ladder needs at least one rung and one seed");
  LinearGaussianSystem sys{Eigen::MatrixXd::Constant(1, 1, o.drift), Eigen::MatrixXd::Constant(1, 1, o.diffusion),
                           Eigen::MatrixXd::Constant(1, 1, o.emission), Eigen::MatrixXd::Constant(1, 1, o.obs_var),
                           GaussianDist::standard(1)};
  const auto train_set = sample_lgs(sys, o.obs_times, o.n_train, derive_seed(o.data_seed, {1}));
  const auto test_set = sample_lgs(sys, o.obs_times, o.n_test, derive_seed(o.data_seed, {2}));
  std::vector<GaussianDist> truth;
  std::vector<SmootherResult> smoothed;
  std::vector<double> knots{0.0};
  knots.insert(knots.end(), o.obs_times.begin(), o.obs_times.end());
  if (knots[1] == 0.0) knots.erase(knots.begin());
  const TimeGrid obs_grid(knots);
  for (const auto& x : test_set) {
    smoothed.push_back(kalman_smoother(sys, x, obs_grid));
    truth.push_back({smoothed.back().means.front(), smoothed.back().covs.front().diagonal()});
  }

  LadderReport rep;
  rep.threshold = o.threshold;
  for (std::uint64_t seed : o.seeds) {
    for (const LadderRung& rung : o.rungs) {
      const TrainConfig cfg = ladder_config(o, rung, seed);
      SldiModel model(cfg.model);
      TrainHooks hooks;
      hooks.after_init = [&](SldiModel& m) { pin_generative_part(m, o); };
      train(model, cfg, train_set, {}, std::nullopt, hooks);

      LadderRow row{seed, rung.width, rung.dt, 0.0, 0.0, 0.0, 0.0};
      const Eigen::VectorXd& p = model.params();
      for (std::size_t i = 0; i < test_set.size(); ++i) {
        row.kl_z0 += gaussian_kl(model.encoder.encode(p, test_set[i]), truth[i]);
        row.floor_kl += gaussian_kl(shared_dynamics_optimum(o, test_set[i], rung.dt), truth[i]);
      }
      row.kl_z0 /= static_cast<double>(test_set.size());
      row.floor_kl /= static_cast<double>(test_set.size());

      const SdeModel dyn = model.posterior_sde(p);
      const std::size_t n_marg = std::min(o.marginal_sequences, test_set.size());
      for (std::size_t i = 0; i < n_marg; ++i) {
        const ObservationSeq& x = test_set[i];
        const GaussianDist q = model.encoder.encode(p, x);
        const TimeGrid grid = simulation_grid(x, cfg.objective.horizon, rung.dt);
        const auto J = static_cast<Eigen::Index>(x.length());
        Eigen::ArrayXd s1 = Eigen::ArrayXd::Zero(J), s2 = Eigen::ArrayXd::Zero(J);
        for (std::size_t s = 0; s < o.marginal_paths; ++s) {
          const SampleDraw draw = draw_sample(grid, 1, derive_seed(seed, {99, i, s}));
          const LatentPath path = simulate_path(dyn, reparam_sample(q, draw.eps), grid, draw.noise);
          for (Eigen::Index j = 0; j < J; ++j) {
            const double z = path.states(0, static_cast<Eigen::Index>(*grid.index_of(x.timestamps[j])));
            s1[j] += z;
            s2[j] += z * z;
          }
        }
        const auto N = static_cast<double>(o.marginal_paths);
        const Eigen::ArrayXd mean = s1 / N;
        const Eigen::ArrayXd var = (s2 - N * mean.square()) / (N - 1.0);
        double dm = 0.0, dv = 0.0;
        for (Eigen::Index j = 0; j < J; ++j) {
          const std::size_t k = *obs_grid.index_of(x.timestamps[j]);
          dm = std::max(dm, std::abs(mean[j] - smoothed[i].means[k][0]));
          dv = std::max(dv, std::abs(var[j] - smoothed[i].covs[k](0, 0)));
        }
        row.mean_discrepancy += dm / static_cast<double>(n_marg);
        row.var_discrepancy += dv / static_cast<double>(n_marg);
      }
      rep.rows.push_back(row);
    }
  }

  const std::size_t R = o.rungs.size();
  for (std::size_t s = 0; s < o.seeds.size(); ++s) rep.top_rung_mean_kl += rep.rows[s * R + R - 1].kl_z0;
  rep.top_rung_mean_kl /= static_cast<double>(o.seeds.size());
  if (R >= 2) {
    std::size_t mono = 0;
    for (std::size_t s = 0; s < o.seeds.size(); ++s) {
      bool ok = true;
      for (std::size_t r = 1; r < R; ++r) ok = ok && rep.rows[s * R + r].kl_z0 < rep.rows[s * R + r - 1].kl_z0;
      mono += ok;
    }
    rep.monotone_seeds = mono;
    const std::size_t need = o.seeds.size() > 1 ? o.seeds.size() - 1 : 1;
    rep.pass = mono >= need && rep.top_rung_mean_kl < o.threshold;
  }
  return rep;
}

std::string ladder_csv(const LadderReport& rep) {
  std::ostringstream os;
  os << "seed,width,dt,kl_z0,floor_kl,mean_discrepancy,var_discrepancy\n";
  for (const auto& r : rep.rows)
    os << r.seed << ',' << r.width << ',' << num(r.dt) << ',' << num(r.kl_z0) << ',' << num(r.floor_kl) << ','
       << num(r.mean_discrepancy) << ',' << num(r.var_discrepancy) << '\n';
  return os.str();
}

std::string ladder_summary(const LadderReport& rep) {
  std::ostringstream os;
  os << "top_rung_mean_kl=" << num(rep.top_rung_mean_kl) << " threshold=" << num(rep.threshold)
     << " monotone_seeds=" << (rep.monotone_seeds ? std::to_string(*rep.monotone_seeds) : "n/a")
     << " verdict=" << (rep.pass ? (*rep.pass ? "PASS" : "FAIL") : "none") << '\n';
  return os.str();
}

}  // namespace sldi
