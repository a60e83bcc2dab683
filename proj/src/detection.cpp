#include "mtd/detection.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

namespace mtd {

double threshold_for_far(int dof, double false_alarm_rate) {
  if (dof < 1) throw DetectionError("degrees of freedom must be positive");
  if (!(false_alarm_rate > 0.0 && false_alarm_rate < 1.0))
    throw DetectionError("false alarm rate must lie strictly in (0, 1)");
  boost::math::chi_squared dist(dof);
  return boost::math::quantile(dist, 1.0 - false_alarm_rate);
}

double chi2_cdf(int dof, double x) {
  if (x <= 0.0) return 0.0;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(dist, x);
}

Vec residue(const Vec& y, const Mat& C, const Vec& x_prior) {
  if (y.size() != C.rows() || x_prior.size() != C.cols())
    throw DetectionError("residue: dimension mismatch");
  return y - C * x_prior;
}

Vec residue(const Vec& y, const Mat& C, const Vec& x_prior, const Mat& G,
            const NonlinearitySpec& nl, int n_plant) {
  Vec z = residue(y, C, x_prior);
  z.head(G.rows()) -= G * nl.h_vec(x_prior.tail(n_plant));
  return z;
}

ChiSquaredDetector::ChiSquaredDetector(int window, double threshold)
    : window_(window), eta_(threshold) {
  if (window < 1) throw DetectionError("window must be at least one step");
}

ChiSquaredDetector::Update ChiSquaredDetector::update(const Vec& z,
                                                      const Mat& S) {
  Eigen::LDLT<Mat> ldlt(symmetrize(S));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw DetectionError("residue covariance is singular");
  const double term = z.dot(ldlt.solve(z));
  terms_.push_back(term);
  g_ += term;
  if (static_cast<int>(terms_.size()) > window_) {
    g_ -= terms_.front();
    terms_.pop_front();
  }
  Update u;
  u.statistic = g_;
  u.alarm = window_full() && g_ > eta_;
  return u;
}

SensorDetector::SensorDetector(int window, double threshold,
                               int exclusion_alarms)
    : window_(window), tau_(threshold), needed_(exclusion_alarms) {
  if (window < 1) throw DetectionError("window must be at least one step");
}

SensorDetector::Update SensorDetector::update(double z) {
  const double term = z * z;
  terms_.push_back(term);
  g_ += term;
  if (static_cast<int>(terms_.size()) > window_) {
    g_ -= terms_.front();
    terms_.pop_front();
  }
  Update u;
  u.statistic = g_;
  u.alarm = static_cast<int>(terms_.size()) == window_ && g_ > tau_;
  streak_ = u.alarm ? streak_ + 1 : 0;
  if (streak_ >= needed_) flagged_ = true;
  u.flagged = flagged_;
  return u;
}

double kl_divergence(const Vec& phi, const std::vector<Mat>& bias_maps,
                     const std::vector<Mat>& residue_covs) {
  if (bias_maps.size() != residue_covs.size())
    throw DetectionError("kl_divergence: one covariance per bias map required");
  double acc = 0.0;
  for (std::size_t i = 0; i < bias_maps.size(); ++i) {
    const Mat& M = bias_maps[i];
    if (M.cols() != phi.size())
      throw DetectionError("kl_divergence: bias map width must match phi");
    const Vec shift = M * phi;
    Eigen::LDLT<Mat> ldlt(symmetrize(residue_covs[i]));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw DetectionError("kl_divergence: residue covariance is singular");
    acc += shift.dot(ldlt.solve(shift));
  }
  return 0.5 * acc;
}

}  // namespace mtd
