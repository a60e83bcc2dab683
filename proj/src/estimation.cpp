#include "mtd/estimation.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace mtd {

FilterState FilterState::init(const Vec& x0, const Mat& P0) {
  FilterState fs;
  fs.x_prior = x0;
  fs.x_post = x0;
  fs.P_prior = symmetrize(P0);
  fs.P_post = fs.P_prior;
  fs.gain = Mat::Zero(x0.size(), 0);
  return fs;
}

FilterState kf_measurement(const Mat& C_lin, const Mat& R, FilterState fs,
                           const Vec& y, const Vec* predicted_y) {
  if (!y.allFinite() || !fs.x_prior.allFinite())
    throw EstimationError("non-finite filter input");
  const Mat S = symmetrize(C_lin * fs.P_prior * C_lin.transpose() + R);
  Eigen::LDLT<Mat> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw EstimationError("innovation covariance is singular");
  fs.gain = ldlt.solve(C_lin * fs.P_prior).transpose();
  const Vec prediction = predicted_y ? *predicted_y : Vec(C_lin * fs.x_prior);
  fs.x_post = fs.x_prior + fs.gain * (y - prediction);
  const int n = static_cast<int>(fs.x_prior.size());
  fs.P_post = symmetrize((Mat::Identity(n, n) - fs.gain * C_lin) * fs.P_prior);
  return fs;
}

FilterState kf_time(const Mat& A, const Mat& B, const Mat& Q, FilterState fs,
                    const Vec& u) {
  fs.x_prior = A * fs.x_post;
  if (B.size() && u.size()) fs.x_prior += B * u;
  fs.P_prior = symmetrize(A * fs.P_post * A.transpose() + Q);
  return fs;
}

FilterState kf_step(const Mat& A, const Mat& B, const Mat& C, const Mat& Q,
                    const Mat& R, const FilterState& fs, const Vec& u,
                    const Vec& y) {
  return kf_time(A, B, Q, kf_measurement(C, R, fs, y), u);
}

Mat ekf_output_matrix(const Mat& C, const NonlinearitySpec& nl, const Mat& G,
                      int n_plant, const Vec& x_prior) {
  Mat phi = C;
  const int m_aux = static_cast<int>(G.rows());
  const Vec slope = nl.dh_vec(x_prior.tail(n_plant));
  phi.block(0, C.cols() - n_plant, m_aux, n_plant) += G * slope.asDiagonal();
  return phi;
}

FilterState ekf_step(const Mat& A, const Mat& B, const Mat& C, const Mat& Q,
                     const Mat& R, const NonlinearitySpec& nl, const Mat& G,
                     int n_plant, const FilterState& fs, const Vec& u,
                     const Vec& y) {
  const Mat phi = ekf_output_matrix(C, nl, G, n_plant, fs.x_prior);
  Vec predicted = C * fs.x_prior;
  predicted.head(G.rows()) += G * nl.h_vec(fs.x_prior.tail(n_plant));
  return kf_time(A, B, Q, kf_measurement(phi, R, fs, y, &predicted), u);
}

SensorDecomposition decompose_sensor(const HybridModeSet& modes, int sensor,
                                     double tol) {
  if (sensor < 0 || sensor >= modes.m())
    throw EstimationError("sensor index out of range");
  const int n = modes.n();

  SensorDecomposition dec;
  Mat ns_first;
  for (int j = 0; j < modes.size(); ++j) {
    const Mat row = modes.modes[j].C.row(sensor);
    const Mat obs = observability_matrix(row, modes.modes[j].A, n);
    const Mat ns = null_space(obs);
    if (j == 0) {
      ns_first = ns;
      continue;
    }
    // compare subspaces through their projectors
    const Mat p0 = ns_first * ns_first.transpose();
    const Mat pj = ns * ns.transpose();
    if (ns.cols() != ns_first.cols() ||
        (p0 - pj).cwiseAbs().maxCoeff() > tol)
      throw EstimationError(
          "sensor " + std::to_string(sensor + 1) +
          ": unobservable subspace differs in mode " + std::to_string(j + 1));
  }
  dec.T_uo = ns_first;
  dec.T_o = orthogonal_complement(ns_first);

  for (int j = 0; j < modes.size(); ++j) {
    const Mat& A = modes.modes[j].A;
    const Mat row = modes.modes[j].C.row(sensor);
    const Mat A_red = dec.T_o.transpose() * A * dec.T_o;
    const Mat C_red = row * dec.T_o;
    // the unobservable subspace must be invariant for the block form to hold
    if (dec.dim_uo() > 0) {
      const Mat leak = dec.T_o.transpose() * A * dec.T_uo;
      if (leak.cwiseAbs().maxCoeff() > 1e-7)
        throw EstimationError("unobservable subspace is not invariant in mode " +
                              std::to_string(j + 1));
    }
    if (dec.dim_o() > 0) {
      const Mat obs_red = observability_matrix(C_red, A_red, dec.dim_o());
      if (numerical_rank(obs_red) < dec.dim_o())
        throw EstimationError("reduced pair is unobservable in mode " +
                              std::to_string(j + 1));
    }
    dec.A_reduced.push_back(A_red);
    dec.C_reduced.push_back(C_red);
  }
  return dec;
}

FusionEstimator::FusionEstimator(const HybridModeSet& modes, const Mat& Q,
                                 const Mat& R, const Mat& P0, double sigma)
    : modes_(modes), Q_(Q), R_(R), sigma_(sigma), m_(modes.m()) {
  if (sigma_ <= 0) throw EstimationError("fusion jitter must be positive");
  const int n = modes_.n();
  for (int s = 0; s < m_; ++s) dec_.push_back(decompose_sensor(modes_, s));

  Q_red_.resize(m_ * m_);
  for (int s1 = 0; s1 < m_; ++s1)
    for (int s2 = 0; s2 < m_; ++s2)
      Q_red_[s1 * m_ + s2] =
          dec_[s1].T_o.transpose() * Q_ * dec_[s2].T_o;

  prior_.resize(m_);
  post_.resize(m_);
  P_prior_.assign(m_, std::vector<Mat>(m_));
  P_post_.assign(m_, std::vector<Mat>(m_));
  for (int s1 = 0; s1 < m_; ++s1) {
    prior_[s1] = Vec::Zero(dec_[s1].dim_o());
    post_[s1] = prior_[s1];
    for (int s2 = 0; s2 < m_; ++s2)
      P_prior_[s1][s2] = dec_[s1].T_o.transpose() * P0 * dec_[s2].T_o;
  }

  int uo_total = 0;
  for (const auto& d : dec_) uo_total += d.dim_uo();
  fused_dim_ = uo_total + n;
  W_ = Mat::Zero(m_ * n, fused_dim_);
  int col = 0;
  for (int s = 0; s < m_; ++s) {
    if (dec_[s].dim_uo() > 0)
      W_.block(s * n, col, n, dec_[s].dim_uo()) = -dec_[s].T_uo;
    W_.block(s * n, uo_total, n, n) = Mat::Identity(n, n);
    col += dec_[s].dim_uo();
  }
}

FusionEstimator::StepResult FusionEstimator::step(int mode, const Vec& y) {
  const int n = modes_.n();
  StepResult out;
  out.sensor_residues = Vec::Zero(m_);

  std::vector<Mat> gains(m_);
  for (int s = 0; s < m_; ++s) {
    const Mat& C = dec_[s].C_reduced[mode];
    const Mat& Pss = P_prior_[s][s];
    const double innov_var = (C * Pss * C.transpose())(0, 0) + R_(s, s);
    if (innov_var <= 0)
      throw EstimationError("per-sensor innovation variance is not positive");
    gains[s] = Pss * C.transpose() / innov_var;
    const double innov = y(s) - (C * prior_[s])(0, 0);
    out.sensor_residues(s) = innov / std::sqrt(innov_var);
    post_[s] = prior_[s] + gains[s] * innov;
  }

  for (int s1 = 0; s1 < m_; ++s1) {
    for (int s2 = 0; s2 < m_; ++s2) {
      const Mat& C1 = dec_[s1].C_reduced[mode];
      const Mat& C2 = dec_[s2].C_reduced[mode];
      const Mat I1 = Mat::Identity(dec_[s1].dim_o(), dec_[s1].dim_o());
      const Mat I2 = Mat::Identity(dec_[s2].dim_o(), dec_[s2].dim_o());
      P_post_[s1][s2] =
          (I1 - gains[s1] * C1) * P_prior_[s1][s2] *
              (I2 - gains[s2] * C2).transpose() +
          gains[s1] * R_(s1, s2) * gains[s2].transpose();
    }
  }

  // fuse: stack per-sensor reconstructions and solve the weighted regression
  Vec yhat(m_ * n);
  Mat upsilon = Mat::Zero(m_ * n, m_ * n);
  for (int s1 = 0; s1 < m_; ++s1) {
    yhat.segment(s1 * n, n) = dec_[s1].T_o * post_[s1];
    for (int s2 = 0; s2 < m_; ++s2) {
      upsilon.block(s1 * n, s2 * n, n, n) =
          dec_[s1].T_o * P_post_[s1][s2] * dec_[s2].T_o.transpose();
    }
    upsilon.block(s1 * n, s1 * n, n, n) += sigma_ * Mat::Identity(n, n);
  }
  Eigen::LDLT<Mat> uld(symmetrize(upsilon));
  if (uld.info() != Eigen::Success || !uld.isPositive())
    throw EstimationError("fusion weighting matrix is numerically singular");
  const Mat WtUi = uld.solve(W_).transpose();  // W' * Upsilon^{-1}
  const Mat normal = WtUi * W_;
  Eigen::LDLT<Mat> nld(symmetrize(normal));
  if (nld.info() != Eigen::Success || !nld.isPositive())
    throw EstimationError("fusion normal equations are singular");
  const Vec xfull = nld.solve(WtUi * yhat);
  out.x_fused = xfull.tail(n);

  // predict for the next step
  for (int s1 = 0; s1 < m_; ++s1) {
    prior_[s1] = dec_[s1].A_reduced[mode] * post_[s1];
    for (int s2 = 0; s2 < m_; ++s2)
      P_prior_[s1][s2] = dec_[s1].A_reduced[mode] * P_post_[s1][s2] *
                             dec_[s2].A_reduced[mode].transpose() +
                         Q_red_[s1 * m_ + s2];
    P_prior_[s1][s1] = symmetrize(P_prior_[s1][s1]);
  }
  return out;
}

}  // namespace mtd
