#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "mtd/model_core.hpp"

namespace mtd {

struct DetectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// chi-square inverse CDF: the alarm threshold whose false alarm rate under
/// the null is `false_alarm_rate` for the given degrees of freedom.
double threshold_for_far(int dof, double false_alarm_rate);

/// chi-square CDF (used by calibration checks and threshold inversion).
double chi2_cdf(int dof, double x);

/// Measurement residue y - C*x_prior; the optional (G, h) pair additionally
/// subtracts the predicted nonlinearity from the auxiliary rows.
Vec residue(const Vec& y, const Mat& C, const Vec& x_prior);
Vec residue(const Vec& y, const Mat& C, const Vec& x_prior, const Mat& G,
            const NonlinearitySpec& nl, int n_plant);

/// Windowed quadratic detector over whitened residues. The statistic is the
/// sum of z' S^{-1} z over the last `window` steps; an alarm fires once the
/// window is full and the statistic exceeds the threshold.
class ChiSquaredDetector {
 public:
  ChiSquaredDetector(int window, double threshold);

  struct Update {
    double statistic = 0.0;
    bool alarm = false;
  };

  /// Push one residue with its covariance.
  Update update(const Vec& z, const Mat& S);

  double statistic() const { return g_; }
  double threshold() const { return eta_; }
  bool window_full() const { return static_cast<int>(terms_.size()) == window_; }
  int window() const { return window_; }

 private:
  int window_;
  double eta_;
  double g_ = 0.0;
  std::deque<double> terms_;
};

/// Scalar per-sensor detector on normalized residues, with an exclusion
/// policy that latches after a run of consecutive alarms.
class SensorDetector {
 public:
  SensorDetector(int window, double threshold, int exclusion_alarms = 5);

  struct Update {
    double statistic = 0.0;
    bool alarm = false;
    bool flagged = false;  // exclusion policy latched
  };

  Update update(double z);

  bool flagged() const { return flagged_; }
  double statistic() const { return g_; }

 private:
  int window_;
  double tau_;
  int needed_;
  int streak_ = 0;
  bool flagged_ = false;
  double g_ = 0.0;
  std::deque<double> terms_;
};

/// Distance between the attacked and nominal residue distributions induced
/// by a stacked bias vector: 1/2 * phi' (sum_i M_i' S_i^{-1} M_i) phi.
double kl_divergence(const Vec& phi, const std::vector<Mat>& bias_maps,
                     const std::vector<Mat>& residue_covs);

}  // namespace mtd
