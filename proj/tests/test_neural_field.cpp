#include <doctest.h>

#include <cmath>

#include <Eigen/SVD>

#include "sldi/encoder.hpp"
#include "sldi/errors.hpp"
#include "sldi/finite_diff.hpp"
#include "sldi/neural_field.hpp"
#include "sldi/rng.hpp"
#include "sldi/spectral.hpp"

using namespace sldi;

namespace {

Eigen::VectorXd random_vec(Rng& rng, Eigen::Index n, double scale = 1.0) { return scale * standard_normal(rng, n); }

// Perturb every parameter so that biases are non-zero as well.
void jitter(ParamStore& store, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  store.flat() += random_vec(rng, store.size(), scale);
}

}  // namespace

TEST_CASE("field evaluation") {
  ParamStore store;
  const NeuralField affine(store, "a", FieldSpec{3, {{3, Activation::identity}}});
  SUBCASE("identity weights, zero bias is the identity map") {
    affine.weight(store.flat(), 0) = RowMatrix::Identity(3, 3);
    const Eigen::Vector3d x(0.5, -2.0, 7.0);
    CHECK(field_eval(affine, store.flat(), x) == x);
  }
  SUBCASE("zero weights give the bias") {
    store.flat().segment(affine.layers()[0].b_offset, 3) << 1.0, 2.0, 3.0;
    CHECK(field_eval(affine, store.flat(), Eigen::Vector3d(9, 9, 9)) == Eigen::Vector3d(1, 2, 3));
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(field_eval(affine, store.flat(), Eigen::Vector2d(1, 2)), ShapeError); }
  SUBCASE("deep random field is total on |x| <= 10") {
    ParamStore s2;
    const NeuralField deep(s2, "deep", FieldSpec::mlp(4, {16, 16}, 3, Activation::tanh, Activation::softplus));
    xavier_init(s2, 3);
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      const Eigen::VectorXd x = (Eigen::VectorXd::Random(4) * 10.0).eval();
      const auto y = field_eval(deep, s2.flat(), x);
      CHECK(y.allFinite());
      CHECK((y.array() > 0.0).all());
    }
  }
}

TEST_CASE("field vjp") {
  SUBCASE("affine adjoint is W^T v") {
    ParamStore store;
    const NeuralField f(store, "a", FieldSpec{3, {{2, Activation::identity}}});
    jitter(store, 1);
    const Eigen::Vector2d v(0.3, -1.2);
    const auto r = field_vjp(f, store.flat(), Eigen::Vector3d(1, 2, 3), v);
    CHECK((r.input_grad - f.weight(store.flat(), 0).transpose() * v).norm() < 1e-14);
  }
  SUBCASE("tanh'(0) = 1") {
    ParamStore store;
    const NeuralField f(store, "t", FieldSpec{1, {{1, Activation::tanh}}});
    f.weight(store.flat(), 0)(0, 0) = 1.0;
    const auto r = field_vjp(f, store.flat(), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
    CHECK(r.input_grad[0] == 1.0);
  }
  SUBCASE("parameter and input gradients match central differences") {
    for (auto out_act : {Activation::identity, Activation::softplus, Activation::sigmoid}) {
      ParamStore store;
      const NeuralField f(store, "f", FieldSpec::mlp(3, {8}, 2, Activation::tanh, out_act));
      xavier_init(store, 10);
      jitter(store, 11, 0.1);
      Rng rng(12);
      const Eigen::VectorXd x = random_vec(rng, 3), v = random_vec(rng, 2);
      const auto r = field_vjp(f, store.flat(), x, v);
      const auto loss_p = [&](const Eigen::VectorXd& p) { return v.dot(f.eval(p, x)); };
      const auto loss_x = [&](const Eigen::VectorXd& xx) { return v.dot(f.eval(store.flat(), xx)); };
      CHECK(max_relative_error(r.param_grad, finite_diff_grad(loss_p, store.flat(), 1e-5), 1e-3) < 1e-6);
      CHECK(max_relative_error(r.input_grad, finite_diff_grad(loss_x, x, 1e-5), 1e-3) < 1e-6);
    }
  }
  SUBCASE("jvp and vjp are exact adjoints") {
    ParamStore store;
    const NeuralField f(store, "f", FieldSpec::mlp(5, {12, 7}, 4, Activation::tanh, Activation::softplus));
    xavier_init(store, 20);
    jitter(store, 21, 0.2);
    Rng rng(22);
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = random_vec(rng, 5, 2.0), u = random_vec(rng, 5), v = random_vec(rng, 4);
      const double lhs = v.dot(f.jvp(store.flat(), x, u));
      const double rhs = field_vjp(f, store.flat(), x, v).input_grad.dot(u);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1e-300}) + 1e-15);
      CHECK((f.jacobian(store.flat(), x) * u - f.jvp(store.flat(), x, u)).norm() < 1e-12);
    }
  }
}

TEST_CASE("parameter store") {
  ParamStore store;
  store.add("x.w", {2, 3});
  store.add("x.b", {2});
  CHECK_THROWS_AS(store.add("x.b", {1}), InvalidInput);
  Rng rng(1);
  store.flat() = random_vec(rng, store.size());
  const auto before = store.flat();
  auto tensors = store.unflatten();
  CHECK(tensors.at("x.w").shape == std::vector<Eigen::Index>{2, 3});
  CHECK(tensors.at("x.w").data[1] == before[1]);
  store.flat().setZero();
  store.load(tensors);
  CHECK(store.flat() == before);
  tensors.at("x.b").shape = {3};
  CHECK_THROWS_AS(store.load(tensors), ShapeError);
  CHECK(store.mask("x.b").sum() == 2.0);
}

TEST_CASE("Xavier initialisation") {
  SUBCASE("1x1 bound is sqrt(3), biases zero") {
    ParamStore store;
    const NeuralField f(store, "f", FieldSpec{1, {{1, Activation::identity}}});
    for (std::uint64_t s = 0; s < 50; ++s) {
      store.flat().setConstant(5.0);
      xavier_init(store, s);
      CHECK(std::abs(store.flat()[f.layers()[0].w_offset]) <= std::sqrt(3.0));
      CHECK(store.flat()[f.layers()[0].b_offset] == 0.0);
    }
  }
  SUBCASE("deterministic in the seed") {
    ParamStore a, b;
    NeuralField(a, "f", FieldSpec::mlp(3, {5}, 2));
    NeuralField(b, "f", FieldSpec::mlp(3, {5}, 2));
    xavier_init(a, 9);
    xavier_init(b, 9);
    CHECK(a.flat() == b.flat());
  }
  SUBCASE("empirical variance within 5% of 2/(fan_in + fan_out)") {
    ParamStore store;
    const NeuralField f(store, "f", FieldSpec{100, {{100, Activation::identity}}});
    xavier_init(store, 5);
    const Eigen::Map<const Eigen::ArrayXd> w(store.flat().data(), 10000);
    const double var = (w - w.mean()).square().sum() / 9999.0;
    CHECK(std::abs(var / (2.0 / 200.0) - 1.0) < 0.05);
  }
}

TEST_CASE("spectral norm estimate") {
  CHECK(spectral_norm_estimate(Eigen::Matrix3d::Identity(), 1) == doctest::Approx(1.0).epsilon(1e-14));
  Eigen::Matrix2d D;
  D << 3, 0, 0, 1;
  CHECK(std::abs(spectral_norm_estimate(D, 50) - 3.0) < 1e-8);
  CHECK_THROWS_AS(spectral_norm_estimate(Eigen::MatrixXd(0, 3), 5), ShapeError);

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd W = Eigen::Map<Eigen::MatrixXd>(random_vec(rng, 64).data(), 8, 8);
    const double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(W).singularValues()[0];
    CHECK(std::abs(spectral_norm_estimate(W, 2000, 3) - svd) < 1e-6);
    double prev = 0.0;
    for (int it = 1; it <= 30; ++it) {
      const double s = spectral_norm_estimate(W, it, 3);
      CHECK(s >= prev * (1.0 - 1e-14));
      prev = s;
    }
  }
}

TEST_CASE("spectral projection") {
  ParamStore store;
  const NeuralField f(store, "drift", FieldSpec::mlp(2, {2}, 2, Activation::tanh));
  const NeuralField g(store, "dec", FieldSpec::mlp(2, {3}, 2, Activation::tanh));
  SUBCASE("no-op when every norm is within the bound") {
    xavier_init(store, 1);
    store.flat() *= 0.1;
    const auto out = spectral_project(store, {"drift", "dec"}, {1.0});
    CHECK(out.flat() == store.flat());
  }
  SUBCASE("2I with bound 1 becomes I; unselected tensors untouched") {
    f.weight(store.flat(), 0) = 2.0 * RowMatrix::Identity(2, 2);
    g.weight(store.flat(), 0).setConstant(10.0);
    const auto out = spectral_project(store, {"drift"}, {1.0});
    CHECK((f.weight(out.flat(), 0) - RowMatrix::Identity(2, 2)).norm() < 1e-14);
    CHECK(g.weight(out.flat(), 0) == g.weight(store.flat(), 0));
  }
  SUBCASE("idempotent up to estimation tolerance") {
    xavier_init(store, 2);
    store.flat() *= 5.0;
    const auto once = spectral_project(store, {"drift", "dec"}, {1.0});
    const auto twice = spectral_project(once, {"drift", "dec"}, {1.0});
    CHECK((twice.flat() - once.flat()).norm() <= 1e-6 * once.flat().norm());
    CHECK(max_spectral_norm(twice, {"drift", "dec"}, {1.0}) <= 1.0 + 1e-9);
  }
  SUBCASE("close leading singular values still end within the bound") {
    RowMatrix U = RowMatrix::Identity(3, 3);
    const double c = std::cos(0.4), s = std::sin(0.4);
    U.topLeftCorner(2, 2) << c, -s, s, c;
    RowMatrix W = RowMatrix::Zero(3, 2);
    W(0, 0) = 1.5;
    W(1, 1) = 1.4985;
    W = (U * W).eval();
    ParamStore near;
    near.add("drift.w", {3, 2});
    near.flat() = Eigen::Map<const Eigen::VectorXd>(W.data(), 6);
    CHECK(spectral_norm_estimate(W, 50, 0) < 1.5 * (1.0 - 1e-4));
    const auto out = spectral_project(near, {"drift"}, {1.0});
    const Eigen::Map<const RowMatrix> P(out.flat().data(), 3, 2);
    CHECK(Eigen::JacobiSVD<Eigen::MatrixXd>(Eigen::MatrixXd(P)).singularValues()[0] <= 1.0 + 1e-9);
  }
  SUBCASE("Jacobian norm bounded by the product of layer bounds") {
    ParamStore s;
    const NeuralField deep(s, "drift", FieldSpec::mlp(3, {16, 16}, 3, Activation::tanh));
    xavier_init(s, 3);
    s.flat() *= 4.0;
    const auto projected = spectral_project(s, {"drift"}, {1.5, 500});
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
      const auto J = deep.jacobian(projected.flat(), random_vec(rng, 3, 2.0));
      const double norm = Eigen::JacobiSVD<Eigen::MatrixXd>(J).singularValues()[0];
      CHECK(norm <= std::pow(1.5, 3) * (1.0 + 1e-6));
    }
  }
}

namespace {

ObservationSeq toy_sequence(Rng& rng, std::size_t n, Eigen::Index dim) {
  ObservationSeq s;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t += 0.1 + 0.2 * std::abs(standard_normal(rng, 1)[0]);
    s.timestamps.push_back(t);
  }
  s.values = Eigen::Map<Eigen::MatrixXd>(random_vec(rng, dim * static_cast<Eigen::Index>(n)).data(), dim,
                                         static_cast<Eigen::Index>(n));
  return s;
}

}  // namespace

TEST_CASE("recurrent encoder") {
  ParamStore store;
  const RecurrentEncoder enc(store, "enc", 2, 3, 5);
  xavier_init(store, 4);
  Rng rng(5);
  const auto seq = toy_sequence(rng, 6, 2);

  SUBCASE("zero readout weights give the readout bias") {
    store.flat().segment(enc.readout_weight_offset(), 6 * 10).setZero();
    store.flat().segment(enc.readout_bias_offset(), 6) << 0.1, 0.2, 0.3, -1.0, 0.0, 1.0;
    const auto q = enc.encode(store.flat(), seq);
    CHECK(q.mean == Eigen::Vector3d(0.1, 0.2, 0.3));
    CHECK((q.var - Eigen::Vector3d(std::exp(-1.0), 1.0, std::exp(1.0))).norm() < 1e-15);
  }
  SUBCASE("padding beyond the mask is ignored") {
    auto padded = seq;
    const auto a = enc.encode(store.flat(), seq, 4);
    padded.values.rightCols(2) = 100.0 * padded.values.rightCols(2).reverse().eval();
    const auto b = enc.encode(store.flat(), padded, 4);
    CHECK(a.mean == b.mean);
    CHECK(a.var == b.var);
  }
  SUBCASE("single observation and empty sequence") {
    const auto q = enc.encode(store.flat(), seq, 1);
    CHECK((q.var.array() > 0.0).all());
    CHECK(q.mean.allFinite());
    CHECK_THROWS_AS(enc.encode(store.flat(), ObservationSeq{{}, Eigen::MatrixXd(2, 0), {}}), InvalidInput);
  }
  SUBCASE("vjp matches central differences through both recurrent cells") {
    jitter(store, 6, 0.2);
    const Eigen::VectorXd dm = random_vec(rng, 3), dl = random_vec(rng, 3);
    RecurrentEncoder::Cache cache;
    enc.encode(store.flat(), seq, {}, 0.0, &cache);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(store.size());
    enc.vjp(store.flat(), cache, dm, dl, grad);
    const auto loss = [&](const Eigen::VectorXd& p) {
      const auto q = enc.encode(p, seq);
      return dm.dot(q.mean) + dl.dot(q.var.array().log().matrix());
    };
    CHECK(max_relative_error(grad, finite_diff_grad(loss, store.flat(), 1e-5), 1e-3) < 1e-6);
  }
}
