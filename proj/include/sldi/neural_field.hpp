#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sldi/param_store.hpp"

namespace sldi {

enum class Activation { identity, tanh, softplus, sigmoid };

/// Lipschitz constant of the activation (all of ours are 1-Lipschitz, sigmoid is 1/4).
double lipschitz(Activation act);

struct LayerSpec {
  Eigen::Index width;
  Activation act;
};

/// Dense stack: input_dim -> layers[0].width -> ... ; the last entry is the output layer.
struct FieldSpec {
  Eigen::Index input_dim = 1;
  std::vector<LayerSpec> layers;

  /// Hidden tanh layers of the given widths followed by an output layer.
  static FieldSpec mlp(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                       Activation hidden_act = Activation::tanh, Activation out_act = Activation::identity);
};

/// Parameterised differentiable map whose weights live in a ParamStore.
/// Layer l computes act_l(W_l x + b_l) with W_l stored row-major as "<name>.l<l>.w".
class NeuralField {
 public:
  struct Layer {
    Eigen::Index rows, cols;
    Eigen::Index w_offset, b_offset;
    Activation act;
  };

  /// Per-layer inputs and pre-activations from a forward pass.
  struct Cache {
    std::vector<Eigen::VectorXd> inputs;
    std::vector<Eigen::VectorXd> pre;
    Eigen::VectorXd output;
  };

  NeuralField() = default;
  NeuralField(ParamStore& store, const std::string& name, const FieldSpec& spec);

  const std::string& name() const noexcept { return name_; }
  Eigen::Index input_dim() const noexcept { return input_dim_; }
  Eigen::Index output_dim() const noexcept { return layers_.empty() ? input_dim_ : layers_.back().rows; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Eigen::VectorXd eval(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  const Eigen::VectorXd& forward(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 Cache& cache) const;

  /// Returns J^T v and accumulates the parameter cotangent into param_grad (full store length).
  Eigen::VectorXd vjp(const Eigen::VectorXd& params, const Cache& cache, const Eigen::Ref<const Eigen::VectorXd>& v,
                      Eigen::Ref<Eigen::VectorXd> param_grad) const;
  /// Input-gradient only.
  Eigen::VectorXd vjp_input(const Eigen::VectorXd& params, const Cache& cache,
                            const Eigen::Ref<const Eigen::VectorXd>& v) const;

  /// J u for an input tangent u.
  Eigen::VectorXd jvp(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& u) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Eigen::Map<const RowMatrix> weight(const Eigen::VectorXd& params, std::size_t layer) const;
  Eigen::Map<RowMatrix> weight(Eigen::VectorXd& params, std::size_t layer) const;

  /// Test hook: multiplies the first layer's weight cotangent by `factor`.
  void set_vjp_fault(double factor) noexcept { fault_ = factor; }

 private:
  std::string name_;
  Eigen::Index input_dim_ = 0;
  std::vector<Layer> layers_;
  double fault_ = 1.0;
};

struct FieldVjp {
  Eigen::VectorXd input_grad;
  Eigen::VectorXd param_grad;
};

Eigen::VectorXd field_eval(const NeuralField& f, const Eigen::VectorXd& params, const Eigen::VectorXd& input);
FieldVjp field_vjp(const NeuralField& f, const Eigen::VectorXd& params, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& cotangent);

}  // namespace sldi
