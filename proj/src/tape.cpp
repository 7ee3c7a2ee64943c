#include "sldi/tape.hpp"

#include <memory>

#include "sldi/errors.hpp"
#include "sldi/sde.hpp"

namespace sldi {

void Tape::backward(VarId out, double seed) {
  if (values_[out].size() != 1) throw ShapeError("backward() needs a scalar output");
  grad(out)[0] += seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(*this);
  swept_ = true;
}

namespace ad {

VarId apply_field(Tape& tape, const NeuralField& f, const Eigen::VectorXd& params, VarId x) {
  auto cache = std::make_shared<NeuralField::Cache>();
  const VarId y = tape.variable(f.forward(params, tape.value(x), *cache));
  tape.add_node([&f, &params, x, y, cache](Tape& t) {
    if (!t.has_grad(y)) return;
    t.grad(x) += f.vjp(params, *cache, t.grad(y), t.param_grad());
  });
  return y;
}

VarId apply_field(Tape& tape, const NeuralField& f, const Eigen::VectorXd& params, VarId z, double tau) {
  auto cache = std::make_shared<NeuralField::Cache>();
  const VarId y = tape.variable(f.forward(params, state_time(tape.value(z), tau), *cache));
  tape.add_node([&f, &params, z, y, cache](Tape& t) {
    if (!t.has_grad(y)) return;
    const Eigen::VectorXd g = f.vjp(params, *cache, t.grad(y), t.param_grad());
    t.grad(z) += g.head(g.size() - 1);
  });
  return y;
}

VarId linear_combination(Tape& tape, const std::vector<std::pair<double, VarId>>& terms) {
  if (terms.empty()) throw ShapeError("empty linear combination");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(tape.value(terms.front().second).size());
  for (const auto& [w, id] : terms) {
    if (tape.value(id).size() != v.size()) throw ShapeError("linear combination of unequal sizes");
    v += w * tape.value(id);
  }
  const VarId y = tape.variable(std::move(v));
  tape.add_node([terms, y](Tape& t) {
    if (!t.has_grad(y)) return;
    const Eigen::VectorXd g = t.grad(y);
    for (const auto& [w, id] : terms) t.grad(id) += w * g;
  });
  return y;
}

VarId squared_norm(Tape& tape, VarId x) {
  const VarId y = tape.variable(Eigen::VectorXd::Constant(1, tape.value(x).squaredNorm()));
  tape.add_node([x, y](Tape& t) {
    if (!t.has_grad(y)) return;
    t.grad(x) += 2.0 * t.grad(y)[0] * t.value(x);
  });
  return y;
}

}  // namespace ad

}  // namespace sldi
