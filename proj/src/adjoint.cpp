#include "sldi/adjoint.hpp"

#include <algorithm>
#include <cmath>

#include "sldi/errors.hpp"
#include "sldi/rng.hpp"

namespace sldi {

namespace {

// Cotangent on the raw diffusion output for a cotangent g on Sigma dW.
Eigen::VectorXd diffusion_raw_cotangent(DiffusionMode mode, Eigen::Index d, Eigen::Index m, const Eigen::VectorXd& g,
                                        const Eigen::VectorXd& dW) {
  switch (mode) {
    case DiffusionMode::diagonal: return g.cwiseProduct(dW);
    case DiffusionMode::scalar: return Eigen::VectorXd::Constant(1, g.dot(dW));
    case DiffusionMode::full: {
      RowMatrix outer = g * dW.transpose();
      return Eigen::Map<const Eigen::VectorXd>(outer.data(), d * m);
    }
  }
  return {};
}

void check_cotangents(const LatentPath& path, const Eigen::MatrixXd& c) {
  if (c.cols() != static_cast<Eigen::Index>(path.grid.size()) || c.rows() != path.states.rows())
    throw GridError("cotangents must be d x knots on the path grid");
}

}  // namespace

SolverTape record_path(const SdeModel& model, const Eigen::VectorXd& z0, const TimeGrid& grid,
                       const BrownianPath& noise) {
  SolverTape tape;
  tape.model = &model;
  tape.path = simulate_path(model, z0, grid, noise, Scheme::em, &tape.records);
  return tape;
}

SolverGradient backprop_through_solver(const SolverTape* tape, const Eigen::MatrixXd& knot_cotangents) {
  if (tape == nullptr || tape->model == nullptr) throw InvalidState("no solver tape was recorded");
  const SdeModel& model = *tape->model;
  const LatentPath& path = tape->path;
  check_cotangents(path, knot_cotangents);
  if (tape->records.size() != path.grid.steps()) throw InvalidState("solver tape is incomplete");

  SolverGradient out;
  out.param_grad = Eigen::VectorXd::Zero(model.params.size());
  out.state_cotangents = knot_cotangents;
  const Eigen::Index d = model.d;
  for (std::size_t k = path.grid.steps(); k-- > 0;) {
    const auto col = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd g = out.state_cotangents.col(col + 1);
    const double dt = path.grid.dt(k);
    const Eigen::VectorXd dW = path.noise.increments.col(col);
    const auto& rec = tape->records[k];
    const Eigen::VectorXd gx_mu = model.drift.vjp(model.params, rec.drift, dt * g, out.param_grad);
    const Eigen::VectorXd gx_sigma = model.diffusion.vjp(
        model.params, rec.diffusion, diffusion_raw_cotangent(model.mode, d, model.m, g, dW), out.param_grad);
    out.state_cotangents.col(col) += g + gx_mu.head(d) + gx_sigma.head(d);
  }
  out.z0_grad = out.state_cotangents.col(0);
  return out;
}

Eigen::MatrixXd diffusion_correction(const SdeModel& model, const Eigen::VectorXd& z, double t) {
  const Eigen::Index d = model.d;
  const Eigen::MatrixXd J = model.diffusion.jacobian(model.params, state_time(z, t)).leftCols(d);
  switch (model.mode) {
    case DiffusionMode::diagonal: return J.rowwise().squaredNorm().asDiagonal();
    case DiffusionMode::scalar: return J.row(0).squaredNorm() * Eigen::MatrixXd::Identity(d, d);
    case DiffusionMode::full: {
      Eigen::MatrixXd C = Eigen::MatrixXd::Zero(d, d);
      Eigen::MatrixXd Ji(d, d);
      for (Eigen::Index i = 0; i < model.m; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) Ji.row(j) = J.row(j * model.m + i);
        C.noalias() += Ji * Ji.transpose();
      }
      return C;
    }
  }
  return {};
}

AdjointTrace adjoint_backward(const SdeModel& model, const LatentPath& path, const Eigen::MatrixXd& knot_cotangents,
                              AdjointMode mode, AdjointStencil stencil) {
  check_cotangents(path, knot_cotangents);
  const Eigen::Index d = model.d;
  const std::size_t steps = path.grid.steps();
  AdjointTrace trace{path.grid, Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(path.grid.size())),
                     Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(steps)),
                     Eigen::VectorXd::Zero(model.params.size())};
  trace.adjoints.col(static_cast<Eigen::Index>(steps)) = knot_cotangents.col(static_cast<Eigen::Index>(steps));
  NeuralField::Cache cache;
  for (std::size_t k = steps; k-- > 0;) {
    const auto col = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd a = trace.adjoints.col(col + 1);
    const double dt = path.grid.dt(k);
    const std::size_t at = stencil == AdjointStencil::left_knot ? k : k + 1;
    const Eigen::VectorXd z = path.state(at);
    const double t = path.grid[at];
    const Eigen::VectorXd x = state_time(z, t);

    Eigen::MatrixXd coeff = model.drift.jacobian(model.params, x).leftCols(d);
    if (mode == AdjointMode::with_diffusion_correction) coeff -= diffusion_correction(model, z, t);
    const Eigen::VectorXd da = dt * coeff.transpose() * a;

    model.drift.forward(model.params, x, cache);
    model.drift.vjp(model.params, cache, dt * a, trace.param_grad);
    if (mode == AdjointMode::with_diffusion_correction) {
      const Eigen::VectorXd xl = state_time(path.state(k), path.grid[k]);
      model.diffusion.forward(model.params, xl, cache);
      model.diffusion.vjp(model.params, cache,
                          diffusion_raw_cotangent(model.mode, d, model.m, a, path.noise.increments.col(col)),
                          trace.param_grad);
    }
    trace.increments.col(col) = -da;
    trace.adjoints.col(col) = a + da + knot_cotangents.col(col);
  }
  return trace;
}

AdjointTrace adjoint_from_terminal(const SdeModel& model, const LatentPath& path, const Eigen::VectorXd& terminal,
                              AdjointMode mode, AdjointStencil stencil) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(path.states.rows(), path.states.cols());
  if (terminal.size() != c.rows()) throw ShapeError("terminal cotangent has the wrong dimension");
  c.col(c.cols() - 1) = terminal;
  return adjoint_backward(model, path, c, mode, stencil);
}

double adjoint_consistency_penalty(const AdjointTrace& trace, const Eigen::MatrixXd& refs, double beta) {
  if (beta < 0.0) throw InvalidInput("penalty weight must be non-negative");
  if (refs.cols() != trace.increments.cols() || refs.rows() != trace.increments.rows())
    throw GridError("reference cotangents do not match the adjoint trace");
  if (beta == 0.0) return 0.0;
  double s = 0.0;
  for (Eigen::Index k = 0; k < refs.cols(); ++k) {
    const double dt = trace.grid.dt(static_cast<std::size_t>(k));
    s += (refs.col(k) - trace.increments.col(k) / dt).squaredNorm() * dt;
  }
  return beta * s;
}

Eigen::VectorXd co_adjoint_step(const NeuralField& field, const Eigen::VectorXd& params, const Eigen::VectorXd& z,
                                double t, double dt, const Eigen::VectorXd& a) {
  if (!(dt > 0.0)) throw InvalidInput("step size must be positive");
  return a - dt * field.eval(params, state_time(z, t));
}

double co_adjoint_train_loss(const NeuralField& field, const Eigen::VectorXd& params, const LatentPath& path,
                             const AdjointTrace& trace, Eigen::VectorXd* param_grad, double scale) {
  if (!(trace.grid == path.grid) || trace.increments.cols() != static_cast<Eigen::Index>(path.grid.steps()))
    throw GridError("adjoint trace and path are on different grids");
  double loss = 0.0;
  NeuralField::Cache cache;
  for (std::size_t k = 0; k < path.grid.steps(); ++k) {
    const double dt = path.grid.dt(k);
    const Eigen::VectorXd& pred = field.forward(params, state_time(path.state(k), path.grid[k]), cache);
    const Eigen::VectorXd r = pred + trace.increments.col(static_cast<Eigen::Index>(k)) / dt;
    loss += r.squaredNorm() * dt;
    if (param_grad) field.vjp(params, cache, (2.0 * dt * scale) * r, *param_grad);
  }
  return loss;
}

Eigen::VectorXd variance_clip(const Eigen::VectorXd& raw, EwmaSmoother& s) {
  if (s.running.size() == 0) s.running = raw;
  if (s.running.size() != raw.size()) throw ShapeError("gradient and running average differ in length");
  Eigen::VectorXd out = s.alpha * raw + (1.0 - s.alpha) * s.running;
  s.running = s.rho * s.running + (1.0 - s.rho) * raw;
  return out;
}

namespace {

struct Accumulator {
  Eigen::VectorXd sum, sq;
  std::size_t n = 0;
  void add(const Eigen::VectorXd& x) {
    if (n == 0) {
      sum = Eigen::VectorXd::Zero(x.size());
      sq = Eigen::VectorXd::Zero(x.size());
    }
    sum += x;
    sq += x.cwiseProduct(x);
    ++n;
  }
  EstimatorStats stats(std::string name) const {
    const auto nn = static_cast<double>(n);
    EstimatorStats s{std::move(name), sum / nn, {}, 0.0};
    s.variance = ((sq - nn * s.mean.cwiseProduct(s.mean)) / (nn - 1.0)).cwiseMax(0.0);
    s.trace_variance = s.variance.sum();
    return s;
  }
};

}  // namespace

VarianceReport gradient_variance_report(const VarianceFixture& fx, std::size_t n_seeds, std::uint64_t seed) {
  if (n_seeds < 2) throw InvalidInput("variance report needs at least two seeds");
  ParamStore store;
  const SdeModel model = fixtures::linear_scalar(store, "ou", -fx.theta, 0.0, 0.0, fx.sigma);
  const TimeGrid grid = TimeGrid::uniform(0.0, fx.horizon, fx.steps);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Constant(1, fx.z0);
  const Eigen::Index ia = model.drift.layers()[0].w_offset, ic = model.drift.layers()[0].b_offset;

  const auto gradient = [&](const BrownianPath& noise) {
    const SolverTape tape = record_path(model, z0, grid, noise);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(grid.size()));
    c(0, c.cols() - 1) = 2.0 * (tape.path.states(0, c.cols() - 1) - fx.target);
    const SolverGradient g = backprop_through_solver(&tape, c);
    return Eigen::Vector2d(g.param_grad[ia], g.param_grad[ic]).eval();
  };

  EwmaSmoother smoother{fx.alpha, fx.rho, {}};
  Accumulator plain, anti, clipped, diff;
  for (std::size_t p = 0; p < fx.warmup + n_seeds; ++p) {
    const BrownianPath n1 = sample_brownian(grid, 1, derive_seed(seed, {p, 0}));
    const BrownianPath n2 = sample_brownian(grid, 1, derive_seed(seed, {p, 1}));
    const Eigen::VectorXd g1 = gradient(n1);
    const Eigen::VectorXd gp = 0.5 * (g1 + gradient(n2));
    const Eigen::VectorXd gc = variance_clip(gp, smoother);
    if (p < fx.warmup) continue;
    const Eigen::VectorXd ga = 0.5 * (g1 + gradient(n1.antithetic()));
    plain.add(gp);
    anti.add(ga);
    clipped.add(gc);
    diff.add(ga - gp);
  }
  VarianceReport report;
  report.estimators = {plain.stats("plain"), anti.stats("antithetic"), clipped.stats("variance_clipped")};
  const EstimatorStats d = diff.stats("difference");
  for (Eigen::Index i = 0; i < d.mean.size(); ++i) {
    const double se = std::sqrt(d.variance[i] / static_cast<double>(diff.n));
    const double z = se > 0.0 ? std::abs(d.mean[i]) / se : (d.mean[i] == 0.0 ? 0.0 : INFINITY);
    report.antithetic_bias_z = std::max(report.antithetic_bias_z, z);
  }
  return report;
}

}  // namespace sldi
