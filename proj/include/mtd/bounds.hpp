#pragma once

#include <memory>
#include <vector>

#include "mtd/model_core.hpp"

namespace mtd {

struct ParticleFilterConfig {
  int count = 2000;
  double ess_fraction = 0.5;  // resample when ESS drops below count*fraction
  double jitter = 1e-9;       // regularization of the predicted-cloud covariance
};

/// Dynamics/measurement pair driving the particle machinery. Propagation may
/// consume per-particle randomness; the measurement law is Gaussian with a
/// possibly state-dependent covariance.
class ParticleModel {
 public:
  virtual ~ParticleModel() = default;

  virtual int state_dim() const = 0;
  /// Size of the trailing state block whose error the bound certifies.
  virtual int tail_dim() const = 0;

  virtual Vec initial_draw(int particle, const NormalSource& src) const = 0;
  virtual Vec propagate(const Vec& x, int k, int particle,
                        const NormalSource& src) const = 0;

  struct Moments {
    Vec mean;
    Mat cov;
  };
  virtual Moments measurement(const Vec& x, int k) const = 0;
  /// d mean / d state.
  virtual Mat measurement_mean_jacobian(const Vec& x, int k) const = 0;
  /// d cov / d state_i, one matrix per state entry; empty when constant.
  virtual std::vector<Mat> measurement_cov_jacobian(const Vec& x, int k) const {
    (void)x;
    (void)k;
    return {};
  }
};

/// Weighted cloud with systematic resampling.
class ParticleFilter {
 public:
  ParticleFilter(std::shared_ptr<const ParticleModel> model,
                 ParticleFilterConfig cfg, SourcePtr src);

  /// Multiplies weights by the measurement likelihood and normalizes.
  /// Returns false when every weight underflowed (cloud reset to uniform).
  bool update_weights(const Vec& y, int k);

  /// Systematic resampling when the effective sample size is low.
  void maybe_resample(int k);

  /// Moves every particle through the dynamics.
  void propagate(int k);

  double ess() const;
  Vec mean() const;
  const ParticleModel& model() const;
  const std::vector<Vec>& states() const { return states_; }
  const std::vector<double>& weights() const { return weights_; }
  int degeneracy_resets() const { return degeneracy_resets_; }

 private:
  std::shared_ptr<const ParticleModel> model_;
  ParticleFilterConfig cfg_;
  SourcePtr src_;
  std::vector<Vec> states_;
  std::vector<double> weights_;
  int degeneracy_resets_ = 0;
};

struct PosteriorInfoStep {
  Mat info;        // combined information matrix of the full state
  Mat info_data;   // measurement part
  Mat info_prior;  // predicted-cloud part
  Mat Z;           // inverse information of the trailing block
};

/// Information recursion on the predicted cloud: data term averaged over
/// particles, prior term from the Gaussian fit of the cloud. Call after
/// `propagate` and before `update_weights` for the new measurement.
PosteriorInfoStep posterior_info_step(const ParticleFilter& pf, int k,
                                      double jitter);

/// Floor on the expected windowed detection statistic induced by the error
/// bounds Z_i: sum_i Tr(C_i' S_i^{-1} C_i Z_i).
double detection_bound(const std::vector<Mat>& C,
                       const std::vector<Mat>& residue_cov,
                       const std::vector<Mat>& Z);

// ---------------------------------------------------------------------------
// Concrete models
// ---------------------------------------------------------------------------

/// Plain linear-Gaussian system, used as an exactly solvable reference.
class LinearGaussianModel final : public ParticleModel {
 public:
  LinearGaussianModel(Mat F, Mat Q, Mat H, Mat R, Mat P0, int tail_dim);

  int state_dim() const override { return static_cast<int>(F_.rows()); }
  int tail_dim() const override { return tail_; }
  Vec initial_draw(int particle, const NormalSource& src) const override;
  Vec propagate(const Vec& x, int k, int particle,
                const NormalSource& src) const override;
  Moments measurement(const Vec& x, int k) const override;
  Mat measurement_mean_jacobian(const Vec& x, int k) const override;

  const Mat& F() const { return F_; }
  const Mat& Q() const { return Q_; }
  const Mat& H() const { return H_; }
  const Mat& R() const { return R_; }
  const Mat& P0() const { return P0_; }

 private:
  Mat F_, Q_, H_, R_, P0_, Lq_, L0_;
  int tail_;
};

/// Augmented (attacked state, operator estimate) system of the extended
/// defense, as seen by an interceptor who samples the hidden matrix draws.
/// The recorded operator-bound measurements and inputs are supplied by the
/// harness; `side_info`, when present per step, grants the realized output
/// matrix and gain.
class ExtendedTrackingModel final : public ParticleModel {
 public:
  ExtendedTrackingModel(ExtendedModel model, const NonlinearitySpec* nl,
                        Mat P0_full);

  /// Recorded sequences consumed during propagation (index = step):
  /// the applied actuation drives the attacked state, the operator's own
  /// control drives the estimate block.
  void set_recorded(std::vector<Vec> u_applied, std::vector<Vec> u_nominal,
                    std::vector<Vec> y_operator);
  void set_side_info(std::vector<Mat> C, std::vector<Mat> K);

  int state_dim() const override { return 2 * model_.n_total(); }
  int tail_dim() const override { return model_.n_total(); }
  Vec initial_draw(int particle, const NormalSource& src) const override;
  Vec propagate(const Vec& x, int k, int particle,
                const NormalSource& src) const override;
  Moments measurement(const Vec& x, int k) const override;
  Mat measurement_mean_jacobian(const Vec& x, int k) const override;
  std::vector<Mat> measurement_cov_jacobian(const Vec& x, int k) const override;

 private:
  bool has_side(int k) const {
    return k < static_cast<int>(side_C_.size());
  }

  ExtendedModel model_;
  const NonlinearitySpec* nl_;
  Mat P0_, L0_, Lq_, mean_C_, mean_G_;
  std::vector<Vec> u_applied_, u_nominal_, y_operator_;
  std::vector<Mat> side_C_, side_K_;
};

}  // namespace mtd
