#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sldi/neural_field.hpp"

namespace sldi {

using VarId = std::size_t;

/// Reverse-mode tape over vector-valued variables. Nodes are whole layer or
/// block applications carrying their own analytic vjp; backward() runs them in
/// reverse creation order, which is a topological order by construction.
/// Parameter cotangents accumulate into one flat vector matching the ParamStore.
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  explicit Tape(Eigen::Index n_params = 0) : param_grad_(Eigen::VectorXd::Zero(n_params)) {}

  VarId variable(Eigen::VectorXd value) {
    values_.push_back(std::move(value));
    grads_.emplace_back();
    return values_.size() - 1;
  }
  void add_node(Backward fn) { nodes_.push_back(std::move(fn)); }

  const Eigen::VectorXd& value(VarId id) const { return values_[id]; }
  /// Cotangent of a variable; zero until something flows into it.
  Eigen::VectorXd& grad(VarId id) {
    auto& g = grads_[id];
    if (g.size() != values_[id].size()) g = Eigen::VectorXd::Zero(values_[id].size());
    return g;
  }
  bool has_grad(VarId id) const { return grads_[id].size() == values_[id].size(); }

  Eigen::VectorXd& param_grad() noexcept { return param_grad_; }
  const Eigen::VectorXd& param_grad() const noexcept { return param_grad_; }

  /// Seeds d(out)/d(out) = seed (out must be scalar) and sweeps all nodes.
  void backward(VarId out, double seed = 1.0);

  std::size_t num_variables() const noexcept { return values_.size(); }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  bool swept() const noexcept { return swept_; }

 private:
  std::vector<Eigen::VectorXd> values_;
  std::vector<Eigen::VectorXd> grads_;
  std::vector<Backward> nodes_;
  Eigen::VectorXd param_grad_;
  bool swept_ = false;
};

namespace ad {

/// f([value(z); t]) recorded as one node.
VarId apply_field(Tape& tape, const NeuralField& f, const Eigen::VectorXd& params, VarId z, double t);
/// f(value(x)) recorded as one node.
VarId apply_field(Tape& tape, const NeuralField& f, const Eigen::VectorXd& params, VarId x);

/// sum_i w_i * x_i over equally sized variables.
VarId linear_combination(Tape& tape, const std::vector<std::pair<double, VarId>>& terms);

/// sum of squares of a vector variable, as a scalar variable.
VarId squared_norm(Tape& tape, VarId x);

}  // namespace ad

}  // namespace sldi
