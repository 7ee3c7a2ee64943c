#include <doctest.h>

#include <cmath>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/MatrixFunctions>

#include "sldi/errors.hpp"
#include "sldi/expm.hpp"
#include "sldi/kalman.hpp"
#include "sldi/moments.hpp"
#include "sldi/rng.hpp"

using namespace sldi;

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale) {
  return Eigen::Map<const Mat>(standard_normal(rng, r * c).data(), r, c) * scale;
}

LinearGaussianSystem random_system(Rng& rng, Eigen::Index d, Eigen::Index n) {
  LinearGaussianSystem s;
  s.A = random_matrix(rng, d, d, 0.5) - Mat::Identity(d, d);
  s.B = random_matrix(rng, d, d, 0.4);
  s.C = random_matrix(rng, n, d, 1.0);
  s.R = Mat::Identity(n, n) * 0.2;
  s.R(0, 0) = 0.35;
  s.prior = {random_matrix(rng, d, 1, 1.0), Vec::Constant(d, 0.8)};
  return s;
}

ObservationSeq random_obs(Rng& rng, const std::vector<double>& times, Eigen::Index n) {
  return {times, random_matrix(rng, n, static_cast<Eigen::Index>(times.size()), 1.0), {}};
}

/// Joint Gaussian over the latent states at `times`, built from matrix exponentials
/// and the covariance ODE, then conditioned on the stacked observations.
struct BruteForce {
  double loglik;
  std::vector<Vec> means;
  std::vector<Mat> covs;
};

BruteForce brute_force(const LinearGaussianSystem& s, const ObservationSeq& obs, const std::vector<double>& times) {
  const Eigen::Index d = s.A.rows(), n = s.C.rows();
  const auto T = static_cast<Eigen::Index>(times.size());
  std::vector<Vec> m(times.size());
  std::vector<Mat> P(times.size());
  const MomentPath<double> mp = moment_ode_solve<double>(s.A, s.B, s.prior.mean, s.prior.var.asDiagonal().toDenseMatrix(),
                                                         TimeGrid(times), 1024);
  for (Eigen::Index i = 0; i < T; ++i) {
    m[i] = mp.mean[i];
    P[i] = mp.cov[i];
  }
  Mat joint(d * T, d * T);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Mat phi = (s.A * (times[i] - times[j])).exp();
      joint.block(i * d, j * d, d, d) = phi * P[j];
      joint.block(j * d, i * d, d, d) = (phi * P[j]).transpose();
    }
  Vec mean(d * T);
  for (Eigen::Index i = 0; i < T; ++i) mean.segment(i * d, d) = m[i];

  std::vector<Eigen::Index> obs_idx;
  for (double t : obs.timestamps)
    for (Eigen::Index i = 0; i < T; ++i)
      if (std::abs(times[i] - t) < 1e-12) obs_idx.push_back(i);
  const auto J = static_cast<Eigen::Index>(obs_idx.size());
  Mat H = Mat::Zero(n * J, d * T);
  Vec x(n * J);
  Mat Rbig = Mat::Zero(n * J, n * J);
  for (Eigen::Index j = 0; j < J; ++j) {
    H.block(j * n, obs_idx[j] * d, n, d) = s.C;
    x.segment(j * n, n) = obs.values.col(j);
    Rbig.block(j * n, j * n, n, n) = s.R;
  }
  const Mat S = H * joint * H.transpose() + Rbig;
  const Eigen::LLT<Mat> llt(S);
  const Vec r = x - H * mean;
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  BruteForce out;
  out.loglik = -0.5 * (r.dot(llt.solve(r)) + logdet + static_cast<double>(n * J) * std::log(2 * M_PI));
  const Mat K = joint * H.transpose();
  const Vec post_mean = mean + K * llt.solve(r);
  const Mat post_cov = joint - K * llt.solve(K.transpose());
  for (Eigen::Index i = 0; i < T; ++i) {
    out.means.push_back(post_mean.segment(i * d, d));
    out.covs.push_back(post_cov.block(i * d, i * d, d, d));
  }
  return out;
}

}  // namespace

TEST_CASE("matrix exponential agrees with Eigen's") {
  Rng rng(4);
  for (double scale : {1e-3, 0.3, 1.0, 4.0, 20.0}) {
    for (Eigen::Index d : {1, 2, 5}) {
      const Mat A = random_matrix(rng, d, d, scale);
      const Mat ref = A.exp();
      CHECK((expm<double>(A) - ref).norm() <= 1e-12 * std::max(1.0, ref.norm()));
    }
  }
  CHECK(expm<double>(Mat::Zero(3, 3)) == Mat::Identity(3, 3));
}

TEST_CASE("exact discretisation of a linear SDE") {
  Rng rng(8);
  const Mat A = random_matrix(rng, 3, 3, 0.6) - Mat::Identity(3, 3);
  const Mat B = random_matrix(rng, 3, 2, 0.5);
  Mat F, Q;
  discretize_linear<double>(A, B, 0.37, F, Q);
  CHECK((F - (A * 0.37).exp()).norm() < 1e-12);
  const MomentPath<double> mp =
      moment_ode_solve<double>(A, B, Vec::Zero(3), Mat::Zero(3, 3), TimeGrid::uniform(0.0, 0.37, 1), 256);
  CHECK((Q - mp.cov.back()).norm() < 1e-12);
  CHECK((Q - Q.transpose()).norm() == 0.0);
}

TEST_CASE("OU statistics") {
  const auto m = ou_statistics(1.5, 0.4, 2.0, 0.7);
  CHECK(m.mean == doctest::Approx(2.0 * std::exp(-1.05)).epsilon(1e-14));
  CHECK(m.variance == doctest::Approx(0.16 / 3.0 * (1 - std::exp(-2.1))).epsilon(1e-14));
  const MomentPath<double> mp = moment_ode_solve<double>(Mat::Constant(1, 1, -1.5), Mat::Constant(1, 1, 0.4),
                                                         Vec::Constant(1, 2.0), Mat::Zero(1, 1),
                                                         TimeGrid::uniform(0.0, 0.7, 7), 32);
  CHECK(mp.mean.back()[0] == doctest::Approx(m.mean).epsilon(1e-10));
  CHECK(mp.cov.back()(0, 0) == doctest::Approx(m.variance).epsilon(1e-10));
  CHECK_THROWS_AS(ou_statistics(0.0, 1.0, 0.0, 1.0), InvalidInput);
}

TEST_CASE("Kalman smoother against the joint Gaussian") {
  Rng rng(21);
  for (Eigen::Index d : {1, 2}) {
    for (Eigen::Index n : {1, 2}) {
      const LinearGaussianSystem sys = random_system(rng, d, n);
      const TimeGrid grid = TimeGrid::uniform(0.0, 2.0, 8);
      const ObservationSeq obs = random_obs(rng, {0.0, 0.5, 0.75, 1.75, 2.0}, n);
      const SmootherResult r = kalman_smoother(sys, obs, grid);
      const BruteForce bf = brute_force(sys, obs, grid.knots());

      double sum = 0.0;
      for (double v : r.innovation_logpdf) sum += v;
      CHECK(r.innovation_logpdf.size() == obs.length());
      CHECK(r.log_likelihood == doctest::Approx(sum).epsilon(1e-14));
      CHECK(std::abs(r.log_likelihood - bf.loglik) < 1e-10);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        CHECK((r.means[k] - bf.means[k]).norm() < 1e-9);
        CHECK((r.covs[k] - bf.covs[k]).norm() < 1e-9);
      }
      CHECK((r.filtered_means.back() - r.means.back()).norm() < 1e-14);
    }
  }
}

TEST_CASE("Kalman limits") {
  Rng rng(3);
  LinearGaussianSystem sys = random_system(rng, 2, 2);
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4);

  SUBCASE("no observations leaves the prior moments") {
    const ObservationSeq none{{}, Mat(2, 0), {}};
    const SmootherResult r = kalman_smoother(sys, none, grid);
    const MomentPath<double> mp = moment_ode_solve<double>(sys.A, sys.B, sys.prior.mean,
                                                           sys.prior.var.asDiagonal().toDenseMatrix(), grid, 64);
    CHECK(r.log_likelihood == 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      CHECK((r.means[k] - mp.mean[k]).norm() < 1e-10);
      CHECK((r.covs[k] - mp.cov[k]).norm() < 1e-10);
    }
  }

  SUBCASE("vanishing observation noise pins the state") {
    sys.C = Mat::Identity(2, 2);
    sys.R = Mat::Identity(2, 2) * 1e-12;
    const ObservationSeq obs{{0.5}, Vec::Constant(2, 0.3), {}};
    const SmootherResult r = kalman_smoother(sys, obs, grid);
    CHECK((r.means[2] - obs.values.col(0)).norm() < 1e-9);
    CHECK(r.covs[2].norm() < 1e-9);
  }

  SUBCASE("off-grid observations are rejected") {
    const ObservationSeq obs{{0.3}, Vec::Constant(2, 0.3), {}};
    CHECK_THROWS_AS(kalman_smoother(sys, obs, grid), GridError);
  }

  SUBCASE("bad shapes are rejected") {
    sys.R = Mat::Identity(3, 3);
    CHECK_THROWS(sys.validate());
  }
}
