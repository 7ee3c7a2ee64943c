#pragma once

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace sldi {

/// Diagonal Gaussian N(mean, diag(var)).
struct GaussianDist {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;

  Eigen::Index dim() const noexcept { return mean.size(); }
  static GaussianDist standard(Eigen::Index d) {
    return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d)};
  }
  /// Differential entropy in nats.
  double entropy() const {
    constexpr double log_2pi_e = 2.8378770664093453;  // ln(2 pi e)
    return 0.5 * (static_cast<double>(var.size()) * log_2pi_e + var.array().log().sum());
  }
};

/// mean + sqrt(var) * eps.
inline Eigen::VectorXd reparam_sample(const GaussianDist& dist, const Eigen::Ref<const Eigen::VectorXd>& eps) {
  return dist.mean + (dist.var.array().sqrt() * eps.array()).matrix();
}

/// KL(N(mq, diag vq) || N(mp, diag vp)) in closed form.
template <typename A, typename B, typename C, typename D>
typename A::Scalar gaussian_kl(const Eigen::MatrixBase<A>& mean_q, const Eigen::MatrixBase<B>& var_q,
                               const Eigen::MatrixBase<C>& mean_p, const Eigen::MatrixBase<D>& var_p) {
  const auto ratio = (var_q.array() / var_p.array()).eval();
  const auto diff2 = (mean_q - mean_p).array().square().eval();
  return typename A::Scalar(0.5) * (ratio + diff2 / var_p.array() - 1 - ratio.log()).sum();
}

inline double gaussian_kl(const GaussianDist& q, const GaussianDist& p) {
  return gaussian_kl(q.mean, q.var, p.mean, p.var);
}

/// KL between full-covariance Gaussians, KL(N(mq, Pq) || N(mp, Pp)).
template <typename Scalar>
Scalar gaussian_kl_full(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& mq,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Pq,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& mp,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Pp) {
  const Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> lp(Pp), lq(Pq);
  const auto k = static_cast<Scalar>(mq.size());
  const Scalar trace = lp.solve(Pq).trace();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> diff = mp - mq;
  const Scalar maha = diff.dot(lp.solve(diff));
  const Scalar logdet_p = Scalar(2) * lp.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Scalar logdet_q = Scalar(2) * lq.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return Scalar(0.5) * (trace + maha - k + logdet_p - logdet_q);
}

}  // namespace sldi
