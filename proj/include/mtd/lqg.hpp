#pragma once

#include "mtd/numeric.hpp"

namespace mtd {

struct DareResult {
  Mat P;     // Riccati fixed point
  Mat gain;  // state-feedback gain
  int iterations = 0;
};

/// Fixed point of the discrete Riccati recursion for the regulator problem,
/// by iteration. Throws NumericError on non-convergence.
DareResult dare_solve(const Mat& A, const Mat& B, const Mat& Q_cost,
                      const Mat& R_cost, double tol = 1e-12,
                      int max_iters = 100000);

/// Certainty-equivalence regulator around a setpoint.
struct LqgController {
  Mat gain;
  Vec setpoint;

  Vec control(const Vec& x_estimate) const {
    return -gain * (x_estimate - setpoint);
  }

  static LqgController design(const Mat& A, const Mat& B, const Mat& Q_cost,
                              const Mat& R_cost, const Vec& setpoint);
};

}  // namespace mtd
