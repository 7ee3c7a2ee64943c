#include "sldi/sde.hpp"

#include "sldi/errors.hpp"

namespace sldi {

Eigen::VectorXd state_time(const Eigen::VectorXd& z, double t) {
  Eigen::VectorXd x(z.size() + 1);
  x << z, t;
  return x;
}

void SdeModel::validate() const {
  if (drift.input_dim() != d + 1 || drift.output_dim() != d) throw ShapeError("drift must map d+1 -> d");
  if (diffusion.input_dim() != d + 1) throw ShapeError("diffusion input must be d+1");
  switch (mode) {
    case DiffusionMode::diagonal:
      if (m != d || diffusion.output_dim() != d) throw ShapeError("diagonal diffusion needs m == d and d outputs");
      break;
    case DiffusionMode::scalar:
      if (m != d || diffusion.output_dim() != 1) throw ShapeError("scalar diffusion needs m == d and one output");
      break;
    case DiffusionMode::full:
      if (diffusion.output_dim() != d * m) throw ShapeError("full diffusion needs d*m outputs");
      break;
  }
}

Eigen::VectorXd SdeModel::drift_at(const Eigen::VectorXd& z, double t) const {
  return drift.eval(params, state_time(z, t));
}

Eigen::VectorXd SdeModel::diffusion_raw(const Eigen::VectorXd& z, double t) const {
  return diffusion.eval(params, state_time(z, t));
}

Eigen::MatrixXd SdeModel::diffusion_matrix(const Eigen::VectorXd& z, double t) const {
  const Eigen::VectorXd raw = diffusion_raw(z, t);
  switch (mode) {
    case DiffusionMode::diagonal: return raw.asDiagonal();
    case DiffusionMode::scalar: return raw[0] * Eigen::MatrixXd::Identity(d, m);
    case DiffusionMode::full: return Eigen::Map<const RowMatrix>(raw.data(), d, m);
  }
  return {};
}

Eigen::VectorXd apply_diffusion(DiffusionMode mode, Eigen::Index d, Eigen::Index m, const Eigen::VectorXd& raw,
                                const Eigen::VectorXd& dW) {
  if (dW.size() != m) throw ShapeError("noise increment has the wrong dimension");
  switch (mode) {
    case DiffusionMode::diagonal: return raw.cwiseProduct(dW);
    case DiffusionMode::scalar: return raw[0] * dW;
    case DiffusionMode::full: return Eigen::Map<const RowMatrix>(raw.data(), d, m) * dW;
  }
  return {};
}

Eigen::VectorXd em_step(const SdeModel& model, const Eigen::VectorXd& z, double t, double dt,
                        const Eigen::VectorXd& dW) {
  if (!(dt > 0.0)) throw InvalidInput("step size must be positive");
  if (z.size() != model.d) throw ShapeError("state has the wrong dimension");
  const Eigen::VectorXd x = state_time(z, t);
  Eigen::VectorXd out = z + dt * model.drift.eval(model.params, x) +
                        apply_diffusion(model.mode, model.d, model.m, model.diffusion.eval(model.params, x), dW);
  if (!out.allFinite()) throw NumericalBlowup(0);
  return out;
}

Eigen::VectorXd milstein_step(const SdeModel& model, const Eigen::VectorXd& z, double t, double dt,
                              const Eigen::VectorXd& dW) {
  if (model.mode == DiffusionMode::full) throw UnsupportedScheme("Milstein needs diagonal or scalar diffusion");
  if (!(dt > 0.0)) throw InvalidInput("step size must be positive");
  if (z.size() != model.d) throw ShapeError("state has the wrong dimension");
  const Eigen::VectorXd x = state_time(z, t);
  const Eigen::VectorXd raw = model.diffusion.eval(model.params, x);
  const Eigen::MatrixXd J = model.diffusion.jacobian(model.params, x);
  Eigen::VectorXd out = z + dt * model.drift.eval(model.params, x) + apply_diffusion(model.mode, model.d, model.m, raw, dW);
  for (Eigen::Index i = 0; i < model.d; ++i) {
    const bool diag = model.mode == DiffusionMode::diagonal;
    const double s = diag ? raw[i] : raw[0];
    const double ds = diag ? J(i, i) : J(0, i);
    out[i] += 0.5 * s * ds * (dW[i] * dW[i] - dt);
  }
  if (!out.allFinite()) throw NumericalBlowup(0);
  return out;
}

LatentPath simulate_path(const SdeModel& model, const Eigen::VectorXd& z0, const TimeGrid& grid,
                         const BrownianPath& noise, Scheme scheme, std::vector<StepRecord>* record) {
  if (noise.steps() != grid.steps()) throw GridError("noise was not generated on this grid");
  if (grid.steps() > 0 && noise.dim() != model.m) throw GridError("noise dimension does not match the model");
  if (z0.size() != model.d) throw ShapeError("initial state has the wrong dimension");
  if (record && scheme != Scheme::em) throw UnsupportedScheme("only Euler-Maruyama steps can be recorded");
  LatentPath path{grid, Eigen::MatrixXd(model.d, static_cast<Eigen::Index>(grid.size())), noise};
  path.states.col(0) = z0;
  if (record) record->assign(grid.steps(), {});
  Eigen::VectorXd z = z0;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd dW = noise.increments.col(col);
    try {
      if (record) {
        const Eigen::VectorXd x = state_time(z, grid[k]);
        auto& rec = (*record)[k];
        const auto& mu = model.drift.forward(model.params, x, rec.drift);
        const auto& raw = model.diffusion.forward(model.params, x, rec.diffusion);
        z += grid.dt(k) * mu + apply_diffusion(model.mode, model.d, model.m, raw, dW);
        if (!z.allFinite()) throw NumericalBlowup(k);
      } else if (scheme == Scheme::em) {
        z = em_step(model, z, grid[k], grid.dt(k), dW);
      } else {
        z = milstein_step(model, z, grid[k], grid.dt(k), dW);
      }
    } catch (const NumericalBlowup&) {
      throw NumericalBlowup(k);
    }
    path.states.col(col + 1) = z;
  }
  return path;
}

double raw_increment_energy(const LatentPath& path) {
  double e = 0.0;
  for (std::size_t k = 0; k < path.grid.steps(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    e += (path.states.col(c + 1) - path.states.col(c)).squaredNorm() / path.grid.dt(k);
  }
  return e;
}

namespace fixtures {

namespace {

// Zero-depth affine field with identity output.
NeuralField affine(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out) {
  return NeuralField(store, name, FieldSpec{in, {{out, Activation::identity}}});
}

}  // namespace

SdeModel linear(ParamStore& store, const std::string& prefix, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index d = A.rows(), m = B.cols();
  SdeModel model{affine(store, prefix + ".drift", d + 1, d), affine(store, prefix + ".diffusion", d + 1, d * m), d, m,
                 DiffusionMode::full, {}};
  model.drift.weight(store.flat(), 0).leftCols(d) = A;
  const RowMatrix Brow = B;
  store.flat().segment(model.diffusion.layers()[0].b_offset, d * m) =
      Eigen::Map<const Eigen::VectorXd>(Brow.data(), d * m);
  model.params = store.flat();
  return model;
}

SdeModel linear_scalar(ParamStore& store, const std::string& prefix, double a, double c, double s, double b) {
  SdeModel model{affine(store, prefix + ".drift", 2, 1), affine(store, prefix + ".diffusion", 2, 1), 1, 1,
                 DiffusionMode::diagonal, {}};
  auto& p = store.flat();
  model.drift.weight(p, 0)(0, 0) = a;
  p[model.drift.layers()[0].b_offset] = c;
  model.diffusion.weight(p, 0)(0, 0) = s;
  p[model.diffusion.layers()[0].b_offset] = b;
  model.params = p;
  return model;
}

SdeModel gbm(ParamStore& store, const std::string& prefix, double r, double vol) {
  return linear_scalar(store, prefix, r, 0.0, vol, 0.0);
}

SdeModel ou(ParamStore& store, const std::string& prefix, double theta, double sigma) {
  return linear_scalar(store, prefix, -theta, 0.0, 0.0, sigma);
}

}  // namespace fixtures

}  // namespace sldi
