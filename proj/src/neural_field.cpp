#include "sldi/neural_field.hpp"

#include <cmath>

#include "sldi/errors.hpp"

namespace sldi {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void activate(Activation act, Eigen::VectorXd& v) {
  switch (act) {
    case Activation::identity: break;
    case Activation::tanh: v = v.array().tanh(); break;
    case Activation::softplus: v = v.unaryExpr([](double x) { return softplus(x); }); break;
    case Activation::sigmoid: v = v.unaryExpr([](double x) { return sigmoid(x); }); break;
  }
}

// Elementwise derivative of the activation at the pre-activation values.
Eigen::VectorXd derivative(Activation act, const Eigen::VectorXd& pre) {
  switch (act) {
    case Activation::identity: return Eigen::VectorXd::Ones(pre.size());
    case Activation::tanh: return 1.0 - pre.array().tanh().square();
    case Activation::softplus: return pre.unaryExpr([](double x) { return sigmoid(x); });
    case Activation::sigmoid:
      return pre.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 - s);
      });
  }
  return Eigen::VectorXd::Ones(pre.size());
}

}  // namespace

double lipschitz(Activation act) { return act == Activation::sigmoid ? 0.25 : 1.0; }

FieldSpec FieldSpec::mlp(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                         Activation hidden_act, Activation out_act) {
  FieldSpec s{in, {}};
  for (auto w : hidden) s.layers.push_back({w, hidden_act});
  s.layers.push_back({out, out_act});
  return s;
}

NeuralField::NeuralField(ParamStore& store, const std::string& name, const FieldSpec& spec)
    : name_(name), input_dim_(spec.input_dim) {
  if (spec.input_dim < 1 || spec.layers.empty()) throw ShapeError("field " + name + " needs input and layers");
  Eigen::Index cols = spec.input_dim;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto rows = spec.layers[l].width;
    if (rows < 1) throw ShapeError("field " + name + " has an empty layer");
    const auto prefix = name + ".l" + std::to_string(l);
    const auto w = store.add(prefix + ".w", {rows, cols});
    const auto b = store.add(prefix + ".b", {rows});
    layers_.push_back({rows, cols, w, b, spec.layers[l].act});
    cols = rows;
  }
}

Eigen::Map<const RowMatrix> NeuralField::weight(const Eigen::VectorXd& params, std::size_t l) const {
  const auto& L = layers_[l];
  return {params.data() + L.w_offset, L.rows, L.cols};
}

Eigen::Map<RowMatrix> NeuralField::weight(Eigen::VectorXd& params, std::size_t l) const {
  const auto& L = layers_[l];
  return {params.data() + L.w_offset, L.rows, L.cols};
}

Eigen::VectorXd NeuralField::eval(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dim_) throw ShapeError("field " + name_ + ": input length mismatch");
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Eigen::VectorXd pre = weight(params, l) * h + params.segment(L.b_offset, L.rows);
    activate(L.act, pre);
    h = std::move(pre);
  }
  return h;
}

const Eigen::VectorXd& NeuralField::forward(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                                            Cache& cache) const {
  if (x.size() != input_dim_) throw ShapeError("field " + name_ + ": input length mismatch");
  cache.inputs.resize(layers_.size());
  cache.pre.resize(layers_.size());
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    cache.inputs[l] = std::move(h);
    cache.pre[l].noalias() = weight(params, l) * cache.inputs[l];
    cache.pre[l] += params.segment(L.b_offset, L.rows);
    h = cache.pre[l];
    activate(L.act, h);
  }
  cache.output = std::move(h);
  return cache.output;
}

Eigen::VectorXd NeuralField::vjp(const Eigen::VectorXd& params, const Cache& cache,
                                 const Eigen::Ref<const Eigen::VectorXd>& v,
                                 Eigen::Ref<Eigen::VectorXd> param_grad) const {
  if (v.size() != output_dim()) throw ShapeError("field " + name_ + ": cotangent length mismatch");
  Eigen::VectorXd g = v;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    g.array() *= derivative(L.act, cache.pre[l]).array();
    Eigen::Map<RowMatrix> gw(param_grad.data() + L.w_offset, L.rows, L.cols);
    const double scale = (l == 0) ? fault_ : 1.0;
    gw.noalias() += scale * g * cache.inputs[l].transpose();
    param_grad.segment(L.b_offset, L.rows) += g;
    g = weight(params, l).transpose() * g;
  }
  return g;
}

Eigen::VectorXd NeuralField::vjp_input(const Eigen::VectorXd& params, const Cache& cache,
                                       const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != output_dim()) throw ShapeError("field " + name_ + ": cotangent length mismatch");
  Eigen::VectorXd g = v;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    g.array() *= derivative(layers_[l].act, cache.pre[l]).array();
    g = weight(params, l).transpose() * g;
  }
  return g;
}

Eigen::VectorXd NeuralField::jvp(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& u) const {
  if (x.size() != input_dim_ || u.size() != input_dim_) throw ShapeError("field " + name_ + ": jvp shape mismatch");
  Eigen::VectorXd h = x, t = u;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Eigen::VectorXd pre = weight(params, l) * h + params.segment(L.b_offset, L.rows);
    t = (weight(params, l) * t).cwiseProduct(derivative(L.act, pre));
    activate(L.act, pre);
    h = std::move(pre);
  }
  return t;
}

Eigen::MatrixXd NeuralField::jacobian(const Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dim_) throw ShapeError("field " + name_ + ": input length mismatch");
  Eigen::VectorXd h = x;
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(input_dim_, input_dim_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    Eigen::VectorXd pre = weight(params, l) * h + params.segment(L.b_offset, L.rows);
    J = derivative(L.act, pre).asDiagonal() * (weight(params, l) * J);
    activate(L.act, pre);
    h = std::move(pre);
  }
  return J;
}

Eigen::VectorXd field_eval(const NeuralField& f, const Eigen::VectorXd& params, const Eigen::VectorXd& input) {
  return f.eval(params, input);
}

FieldVjp field_vjp(const NeuralField& f, const Eigen::VectorXd& params, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& cotangent) {
  NeuralField::Cache cache;
  f.forward(params, input, cache);
  FieldVjp out{Eigen::VectorXd(), Eigen::VectorXd::Zero(params.size())};
  out.input_grad = f.vjp(params, cache, cotangent, out.param_grad);
  return out;
}

}  // namespace sldi
