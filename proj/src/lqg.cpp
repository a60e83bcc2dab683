#include "mtd/lqg.hpp"

namespace mtd {

DareResult dare_solve(const Mat& A, const Mat& B, const Mat& Q_cost,
                      const Mat& R_cost, double tol, int max_iters) {
  if (!is_pd(R_cost)) throw NumericError("control weight must be PD");
  Mat P = Q_cost;
  DareResult res;
  for (int it = 0; it < max_iters; ++it) {
    const Mat BtP = B.transpose() * P;
    Eigen::LDLT<Mat> ldlt(symmetrize(R_cost + BtP * B));
    if (ldlt.info() != Eigen::Success)
      throw NumericError("Riccati inner matrix is singular");
    const Mat K = ldlt.solve(BtP * A);
    const Mat next = symmetrize(
        Q_cost + A.transpose() * P * (A - B * K));
    const double delta = (next - P).cwiseAbs().maxCoeff();
    P = next;
    if (delta < tol * std::max(1.0, P.cwiseAbs().maxCoeff())) {
      res.P = P;
      res.gain = K;
      res.iterations = it + 1;
      if (spectral_radius(A - B * res.gain) >= 1.0)
        throw NumericError("Riccati solution does not stabilize the loop");
      return res;
    }
  }
  throw NumericError("Riccati recursion did not converge");
}

LqgController LqgController::design(const Mat& A, const Mat& B,
                                    const Mat& Q_cost, const Mat& R_cost,
                                    const Vec& setpoint) {
  LqgController c;
  c.gain = dare_solve(A, B, Q_cost, R_cost).gain;
  c.setpoint = setpoint.size() ? setpoint : Vec(Vec::Zero(A.rows()));
  return c;
}

}  // namespace mtd
