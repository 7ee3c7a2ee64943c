#include "sldi/encoder.hpp"

#include "sldi/errors.hpp"

namespace sldi {

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace

GatedCell::GatedCell(ParamStore& store, const std::string& name, Eigen::Index input_dim, Eigen::Index hidden)
    : input_dim(input_dim), hidden(hidden) {
  const Eigen::Index cols = input_dim + hidden;
  wu = store.add(name + ".wu", {hidden, cols});
  bu = store.add(name + ".bu", {hidden});
  wc = store.add(name + ".wc", {hidden, cols});
  bc = store.add(name + ".bc", {hidden});
}

Eigen::VectorXd GatedCell::step(const Eigen::VectorXd& params, const Eigen::VectorXd& x_gap, const Eigen::VectorXd& h,
                                Step* record) const {
  const Eigen::Index cols = input_dim + hidden;
  Eigen::Map<const RowMatrix> Wu(params.data() + wu, hidden, cols), Wc(params.data() + wc, hidden, cols);
  Eigen::VectorXd in(cols);
  in << x_gap, h;
  Eigen::VectorXd u = sigmoid(Wu * in + params.segment(bu, hidden));
  Eigen::VectorXd c = (Wc * in + params.segment(bc, hidden)).array().tanh().matrix();
  Eigen::VectorXd out = h + u.cwiseProduct(c - h);
  if (record) *record = {std::move(in), std::move(u), std::move(c), h};
  return out;
}

Eigen::VectorXd GatedCell::step_vjp(const Eigen::VectorXd& params, const Step& rec, const Eigen::VectorXd& dh_next,
                                    Eigen::Ref<Eigen::VectorXd> param_grad) const {
  const Eigen::Index cols = input_dim + hidden;
  Eigen::Map<const RowMatrix> Wu(params.data() + wu, hidden, cols), Wc(params.data() + wc, hidden, cols);
  const Eigen::ArrayXd du = dh_next.array() * (rec.c - rec.h_prev).array();
  const Eigen::ArrayXd dc = dh_next.array() * rec.u.array();
  const Eigen::VectorXd pre_u = (du * rec.u.array() * (1.0 - rec.u.array())).matrix();
  const Eigen::VectorXd pre_c = (dc * (1.0 - rec.c.array().square())).matrix();
  Eigen::Map<RowMatrix>(param_grad.data() + wu, hidden, cols).noalias() += pre_u * rec.in.transpose();
  Eigen::Map<RowMatrix>(param_grad.data() + wc, hidden, cols).noalias() += pre_c * rec.in.transpose();
  param_grad.segment(bu, hidden) += pre_u;
  param_grad.segment(bc, hidden) += pre_c;
  const Eigen::VectorXd d_in = Wu.transpose() * pre_u + Wc.transpose() * pre_c;
  return (dh_next.array() * (1.0 - rec.u.array())).matrix() + d_in.tail(hidden);
}

RecurrentEncoder::RecurrentEncoder(ParamStore& store, const std::string& name, Eigen::Index obs_dim,
                                   Eigen::Index latent_dim, Eigen::Index hidden)
    : name_(name), obs_dim_(obs_dim), latent_dim_(latent_dim) {
  if (obs_dim < 1 || latent_dim < 1 || hidden < 1) throw ShapeError("encoder dimensions must be positive");
  fwd_ = GatedCell(store, name + ".fwd", obs_dim + 1, hidden);
  bwd_ = GatedCell(store, name + ".bwd", obs_dim + 1, hidden);
  out_w_ = store.add(name + ".out.w", {2 * latent_dim, 2 * hidden});
  out_b_ = store.add(name + ".out.b", {2 * latent_dim});
}

GaussianDist RecurrentEncoder::encode(const Eigen::VectorXd& params, const ObservationSeq& obs,
                                      std::optional<std::size_t> valid, double origin, Cache* cache) const {
  const std::size_t n = valid.value_or(obs.length());
  if (n == 0 || n > obs.length()) throw InvalidInput("encoder needs a non-empty observation sequence");
  if (obs.dim() != obs_dim_) throw ShapeError("encoder observation dimension mismatch");
  const Eigen::Index H = fwd_.hidden;
  Cache local;
  Cache& c = cache ? *cache : local;
  c.fwd.assign(n, {});
  c.bwd.assign(n, {});

  Eigen::VectorXd x_gap(obs_dim_ + 1);
  Eigen::VectorXd hf = Eigen::VectorXd::Zero(H);
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = i == 0 ? origin : obs.timestamps[i - 1];
    x_gap << obs.values.col(static_cast<Eigen::Index>(i)), obs.timestamps[i] - prev;
    hf = fwd_.step(params, x_gap, hf, &c.fwd[i]);
  }
  Eigen::VectorXd hb = Eigen::VectorXd::Zero(H);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = n - 1 - r;
    const double gap = i + 1 < n ? obs.timestamps[i + 1] - obs.timestamps[i] : 0.0;
    x_gap << obs.values.col(static_cast<Eigen::Index>(i)), gap;
    hb = bwd_.step(params, x_gap, hb, &c.bwd[r]);
  }
  c.features.resize(2 * H);
  c.features << hf, hb;
  Eigen::Map<const RowMatrix> Wo(params.data() + out_w_, 2 * latent_dim_, 2 * H);
  const Eigen::VectorXd out = Wo * c.features + params.segment(out_b_, 2 * latent_dim_);
  c.mean = out.head(latent_dim_);
  c.logvar = out.tail(latent_dim_);
  return {c.mean, c.logvar.array().exp().matrix()};
}

void RecurrentEncoder::vjp(const Eigen::VectorXd& params, const Cache& cache, const Eigen::VectorXd& d_mean,
                           const Eigen::VectorXd& d_logvar, Eigen::Ref<Eigen::VectorXd> param_grad) const {
  const Eigen::Index H = fwd_.hidden;
  Eigen::VectorXd d_out(2 * latent_dim_);
  d_out << d_mean, d_logvar;
  Eigen::Map<const RowMatrix> Wo(params.data() + out_w_, 2 * latent_dim_, 2 * H);
  Eigen::Map<RowMatrix>(param_grad.data() + out_w_, 2 * latent_dim_, 2 * H).noalias() +=
      d_out * cache.features.transpose();
  param_grad.segment(out_b_, 2 * latent_dim_) += d_out;
  const Eigen::VectorXd d_feat = Wo.transpose() * d_out;
  Eigen::VectorXd dh = d_feat.head(H);
  for (std::size_t i = cache.fwd.size(); i-- > 0;) dh = fwd_.step_vjp(params, cache.fwd[i], dh, param_grad);
  dh = d_feat.tail(H);
  for (std::size_t r = cache.bwd.size(); r-- > 0;) dh = bwd_.step_vjp(params, cache.bwd[r], dh, param_grad);
}

}  // namespace sldi
