#include "mtd/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace mtd {

double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

bool is_psd(const Mat& sym, double tol) { return min_eigenvalue(sym) >= -tol; }

bool is_pd(const Mat& sym, double tol) { return min_eigenvalue(sym) > tol; }

Mat psd_sqrt(const Mat& sym, double tol) {
  Eigen::LLT<Mat> llt(symmetrize(sym));
  if (llt.info() == Eigen::Success) return Mat(llt.matrixL());
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
  Vec d = es.eigenvalues();
  for (int i = 0; i < d.size(); ++i) {
    if (d(i) < -1e-8 * std::max(1.0, d.cwiseAbs().maxCoeff()))
      throw NumericError("psd_sqrt: matrix is not positive semidefinite");
    d(i) = d(i) > tol ? std::sqrt(d(i)) : 0.0;
  }
  return es.eigenvectors() * d.asDiagonal();
}

Mat pd_inv_sqrt(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
  Vec d = es.eigenvalues();
  if (d.minCoeff() <= 0.0)
    throw NumericError("pd_inv_sqrt: matrix is not positive definite");
  for (int i = 0; i < d.size(); ++i) d(i) = 1.0 / std::sqrt(d(i));
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Mat clip_psd(const Mat& sym, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
  Vec d = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

double spectral_radius(const Mat& a) {
  Eigen::EigenSolver<Mat> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_norm(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

namespace {
template <typename M>
int rank_impl(const M& a, double tol) {
  if (a.rows() == 0 || a.cols() == 0) return 0;
  Eigen::JacobiSVD<M> svd(a);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double cut = tol > 0 ? tol
                             : std::max(a.rows(), a.cols()) *
                                   std::numeric_limits<double>::epsilon() * smax;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) ++r;
  return r;
}
}  // namespace

int numerical_rank(const Mat& a, double tol) { return rank_impl(a, tol); }
int numerical_rank(const CMat& a, double tol) { return rank_impl(a, tol); }

Mat null_space(const Mat& a, double tol) {
  if (a.rows() == 0 || a.cols() == 0) return Mat::Identity(a.cols(), a.cols());
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
  const int r = numerical_rank(a, tol);
  return svd.matrixV().rightCols(a.cols() - r);
}

Mat orthogonal_complement(const Mat& basis) {
  const int n = static_cast<int>(basis.rows());
  if (basis.cols() == 0) return Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(basis, Eigen::ComputeFullU);
  const int r = numerical_rank(basis);
  return svd.matrixU().rightCols(n - r);
}

Mat observability_matrix(const Mat& c, const Mat& a, int depth) {
  const int m = static_cast<int>(c.rows());
  const int n = static_cast<int>(a.cols());
  Mat obs(m * depth, n);
  Mat power = c;
  for (int t = 0; t < depth; ++t) {
    obs.middleRows(t * m, m) = power;
    power = power * a;
  }
  return obs;
}

Mat expm(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  Mat scaled = a;
  if (norm > 0.5) {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
    scaled /= std::pow(2.0, squarings);
  }
  Mat result = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  for (int k = 1; k <= 18; ++k) {
    term = term * scaled / static_cast<double>(k);
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Mat dlyap(const Mat& a, const Mat& q) {
  const int n = static_cast<int>(a.rows());
  Mat kron = Mat::Identity(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      kron.block(i * n, j * n, n, n) -= a(i, j) * a;
  Eigen::Map<const Vec> qv(q.data(), n * n);
  Vec xv = kron.colPivHouseholderQr().solve(Vec(qv));
  Eigen::Map<const Mat> x(xv.data(), n, n);
  return symmetrize(x);
}

double psd_pencil_sup(const Mat& m, const Mat& n, double tol) {
  const double mn = min_eigenvalue(n);
  if (mn < -1e-9) throw NumericError("psd_pencil_sup: n must be PSD");
  if (min_eigenvalue(m) < -1e-9) return -std::numeric_limits<double>::infinity();
  if (max_eigenvalue(n) <= tol) return std::numeric_limits<double>::infinity();
  double lo = 0.0;
  double hi = 1.0;
  while (is_psd(m - hi * n, 1e-12) && hi < 1e14) hi *= 2.0;
  if (hi >= 1e14) return std::numeric_limits<double>::infinity();
  while (hi - lo > tol * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (is_psd(m - mid * n, 1e-12))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double gaussian_logpdf(const Vec& x, const Vec& mean, const Mat& cov) {
  Eigen::LLT<Mat> llt(symmetrize(cov));
  if (llt.info() != Eigen::Success)
    throw NumericError("gaussian_logpdf: covariance not positive definite");
  const Vec d = x - mean;
  const Vec half = llt.matrixL().solve(d);
  double logdet = 0.0;
  for (int i = 0; i < cov.rows(); ++i)
    logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * half.squaredNorm() - logdet -
         0.5 * x.size() * std::log(2.0 * M_PI);
}

bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace mtd
