#include "sldi/kalman.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "sldi/errors.hpp"
#include "sldi/expm.hpp"

namespace sldi {

void LinearGaussianSystem::validate() const {
  const Eigen::Index d = A.rows();
  if (A.cols() != d || B.rows() != d || C.cols() != d) throw ShapeError("inconsistent linear system shapes");
  if (R.rows() != C.rows() || R.cols() != C.rows()) throw ShapeError("observation noise must be n x n");
  if (prior.dim() != d || prior.var.size() != d) throw ShapeError("prior dimension mismatch");
  if ((R.diagonal().array() <= 0.0).any()) throw InvalidInput("observation noise variances must be positive");
}

SmootherResult kalman_smoother(const LinearGaussianSystem& sys, const ObservationSeq& obs, const TimeGrid& grid) {
  sys.validate();
  obs.validate();
  if (obs.length() > 0 && obs.dim() != sys.C.rows()) throw ShapeError("observation dimension mismatch");
  constexpr double log_2pi = 1.8378770664093453;
  const std::size_t K = grid.size();
  std::vector<int> observed(K, -1);
  for (std::size_t j = 0; j < obs.length(); ++j) {
    const auto k = grid.index_of(obs.timestamps[j]);
    if (!k) throw GridError("observation time is not a grid knot");
    observed[*k] = static_cast<int>(j);
  }

  SmootherResult out;
  std::vector<Eigen::MatrixXd> F(K), P_pred(K);
  std::vector<Eigen::VectorXd> m_pred(K);
  Eigen::VectorXd m = sys.prior.mean;
  Eigen::MatrixXd P = sys.prior.var.asDiagonal();
  const auto n = static_cast<double>(sys.C.rows());
  for (std::size_t k = 0; k < K; ++k) {
    if (k > 0) {
      Eigen::MatrixXd Q;
      discretize_linear<double>(sys.A, sys.B, grid.dt(k - 1), F[k - 1], Q);
      m = F[k - 1] * m;
      P = F[k - 1] * P * F[k - 1].transpose() + Q;
      P = (0.5 * (P + P.transpose())).eval();
    }
    m_pred[k] = m;
    P_pred[k] = P;
    if (observed[k] >= 0) {
      const Eigen::VectorXd x = obs.values.col(observed[k]);
      const Eigen::VectorXd v = x - sys.C * m;
      const Eigen::MatrixXd S = sys.C * P * sys.C.transpose() + sys.R;
      const Eigen::LLT<Eigen::MatrixXd> llt(S);
      if (llt.info() != Eigen::Success) throw NumericsError("innovation covariance is not positive definite");
      const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      if (!std::isfinite(logdet)) throw NumericsError("innovation covariance is singular");
      const double lp = -0.5 * (n * log_2pi + logdet + v.dot(llt.solve(v)));
      out.innovation_logpdf.push_back(lp);
      out.log_likelihood += lp;
      const Eigen::MatrixXd Kg = llt.solve(sys.C * P).transpose();
      m += Kg * v;
      // Joseph form keeps P symmetric positive semidefinite.
      const Eigen::MatrixXd I_KC = Eigen::MatrixXd::Identity(P.rows(), P.cols()) - Kg * sys.C;
      P = I_KC * P * I_KC.transpose() + Kg * sys.R * Kg.transpose();
    }
    out.filtered_means.push_back(m);
    out.filtered_covs.push_back(P);
  }

  out.means = out.filtered_means;
  out.covs = out.filtered_covs;
  for (std::size_t k = K - 1; k-- > 0;) {
    const Eigen::MatrixXd G =
        P_pred[k + 1].completeOrthogonalDecomposition().solve(F[k] * out.filtered_covs[k]).transpose();
    out.means[k] = out.filtered_means[k] + G * (out.means[k + 1] - m_pred[k + 1]);
    Eigen::MatrixXd Ps = out.filtered_covs[k] + G * (out.covs[k + 1] - P_pred[k + 1]) * G.transpose();
    out.covs[k] = 0.5 * (Ps + Ps.transpose());
  }
  return out;
}

}  // namespace sldi
