#pragma once

#include <vector>

#include "mtd/model_core.hpp"

namespace mtd {

struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Time-varying Kalman filter state. `x_prior`/`P_prior` refer to the
/// prediction for the current step; after a full step they hold the
/// prediction for the next one.
struct FilterState {
  Vec x_prior;
  Vec x_post;
  Mat P_prior;
  Mat P_post;
  Mat gain;

  static FilterState init(const Vec& x0, const Mat& P0);
};

/// Measurement update against the linearized output map; `predicted_y`
/// overrides C * x_prior (extended-filter prediction). P_prior is kept.
FilterState kf_measurement(const Mat& C_lin, const Mat& R, FilterState fs,
                           const Vec& y, const Vec* predicted_y = nullptr);

/// Time update from the posterior. Covariances are re-symmetrized.
FilterState kf_time(const Mat& A, const Mat& B, const Mat& Q, FilterState fs,
                    const Vec& u);

/// One measurement-update + time-update cycle with the realized step
/// matrices.
FilterState kf_step(const Mat& A, const Mat& B, const Mat& C, const Mat& Q,
                    const Mat& R, const FilterState& fs, const Vec& u,
                    const Vec& y);

/// Extended-filter variant for the output nonlinearity. `G` is the realized
/// direction matrix (known to the operator); the linearization point is the
/// plant block of the prior estimate.
FilterState ekf_step(const Mat& A, const Mat& B, const Mat& C, const Mat& Q,
                     const Mat& R, const NonlinearitySpec& nl, const Mat& G,
                     int n_plant, const FilterState& fs, const Vec& u,
                     const Vec& y);

/// Linearized output map used by the extended filter: C plus the
/// nonlinearity Jacobian in the auxiliary rows / plant columns block.
Mat ekf_output_matrix(const Mat& C, const NonlinearitySpec& nl, const Mat& G,
                      int n_plant, const Vec& x_prior);

// ---------------------------------------------------------------------------
// Per-sensor observability decomposition and fused estimation
// ---------------------------------------------------------------------------

/// Observability decomposition of one sensor against a whole mode family.
/// Valid only when every mode shares the sensor's unobservable subspace.
struct SensorDecomposition {
  Mat T_uo;  // orthonormal basis of the common unobservable subspace
  Mat T_o;   // orthonormal completion; [T_uo T_o] is orthogonal
  std::vector<Mat> A_reduced;  // per-mode observable-block dynamics
  std::vector<Mat> C_reduced;  // per-mode observable-block output rows
  int dim_o() const { return static_cast<int>(T_o.cols()); }
  int dim_uo() const { return static_cast<int>(T_uo.cols()); }
};

SensorDecomposition decompose_sensor(const HybridModeSet& modes, int sensor,
                                     double tol = 1e-8);

/// Bank of per-sensor reduced filters with joint cross covariances and the
/// minimum-variance unbiased fusion of their estimates.
class FusionEstimator {
 public:
  FusionEstimator(const HybridModeSet& modes, const Mat& Q, const Mat& R,
                  const Mat& P0, double sigma = 1e-6);

  struct StepResult {
    Vec x_fused;           // fused estimate of the plant state
    Vec sensor_residues;   // normalized scalar residue per sensor
  };

  /// Advances every per-sensor filter with the realized mode and fuses.
  StepResult step(int mode, const Vec& y);

  const SensorDecomposition& decomposition(int s) const { return dec_[s]; }
  const Vec& sensor_estimate(int s) const { return post_[s]; }
  const Mat& posterior_cov(int s1, int s2) const { return P_post_[s1][s2]; }
  int sensors() const { return m_; }

 private:
  HybridModeSet modes_;
  Mat Q_, R_;
  double sigma_;
  int m_ = 0;
  std::vector<SensorDecomposition> dec_;
  std::vector<Vec> prior_, post_;
  std::vector<std::vector<Mat>> P_prior_, P_post_;
  std::vector<Mat> Q_red_;  // reduced process covariances, indexed s1*m+s2
  Mat W_;                   // fusion regression matrix (fixed)
  int fused_dim_ = 0;
};

}  // namespace mtd
