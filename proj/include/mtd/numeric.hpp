#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace mtd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Mat& sym);
double max_eigenvalue(const Mat& sym);

bool is_psd(const Mat& sym, double tol = 1e-9);
bool is_pd(const Mat& sym, double tol = 1e-12);

/// Lower Cholesky factor of a PSD matrix; falls back to an eigenvalue
/// square root when the matrix is singular (zero modes clipped).
Mat psd_sqrt(const Mat& sym, double tol = 1e-12);

/// Inverse square root of a PD matrix.
Mat pd_inv_sqrt(const Mat& sym);

/// Projects a nearly-PSD symmetric matrix back onto the cone.
Mat clip_psd(const Mat& sym, double floor = 0.0);

double spectral_radius(const Mat& a);
double spectral_norm(const Mat& a);

/// Numerical rank with the usual max(m,n) * eps * sigma_max cutoff
/// (or an explicit absolute tolerance if tol > 0).
int numerical_rank(const Mat& a, double tol = -1.0);
int numerical_rank(const CMat& a, double tol = -1.0);

/// Orthonormal basis of the (right) null space; empty matrix when trivial.
Mat null_space(const Mat& a, double tol = -1.0);

/// Orthonormal completion: columns spanning the complement of range(basis).
Mat orthogonal_complement(const Mat& basis);

/// Stacked observability matrix [C; CA; ...; CA^{depth-1}].
Mat observability_matrix(const Mat& c, const Mat& a, int depth);

/// Matrix exponential by scaling and squaring (small dense inputs).
Mat expm(const Mat& a);

/// Solves the discrete Lyapunov equation X = A X A' + Q.
Mat dlyap(const Mat& a, const Mat& q);

/// sup { e : m - e*n is PSD } for symmetric m and PSD n, by bisection.
/// Returns +inf when n vanishes on every direction that matters.
double psd_pencil_sup(const Mat& m, const Mat& n, double tol = 1e-10);

/// Sum of all entries.
inline double entry_sum(const Mat& m) { return m.sum(); }

/// Log-density of N(mean, cov) at x; cov must be PD.
double gaussian_logpdf(const Vec& x, const Vec& mean, const Mat& cov);

bool all_finite(const Mat& m);

}  // namespace mtd
