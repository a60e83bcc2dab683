#include "mtd/hybrid_mtd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mtd/detection.hpp"

namespace mtd {
namespace {

CMat complex_null_space(const CMat& a, double tol) {
  if (a.cols() == 0) return CMat::Identity(0, 0);
  Eigen::JacobiSVD<CMat> svd(a, Eigen::ComputeFullV);
  const int r = numerical_rank(a, tol);
  return svd.matrixV().rightCols(a.cols() - r);
}

/// Greedily extends `basis` (orthonormal columns) with candidates that keep
/// at least `threshold` of their norm after projection; returns the added
/// vectors (unit norm).
std::vector<CVec> extend_basis(CMat* basis, const CMat& candidates,
                               int wanted, double threshold) {
  std::vector<CVec> added;
  for (int c = 0; c < candidates.cols() && static_cast<int>(added.size()) < wanted;
       ++c) {
    CVec v = candidates.col(c);
    if (basis->cols() > 0)
      v -= *basis * (basis->adjoint() * v);
    if (v.norm() < threshold) continue;
    v.normalize();
    CMat next(basis->rows(), basis->cols() + 1);
    next << *basis, v;
    *basis = next;
    added.push_back(v);
  }
  return added;
}

}  // namespace

int EigenvalueChains::max_chain_length() const {
  int m = 0;
  for (const auto& c : chains) m = std::max(m, static_cast<int>(c.size()));
  return m;
}

int EigenvalueChains::algebraic_multiplicity() const {
  int m = 0;
  for (const auto& c : chains) m += static_cast<int>(c.size());
  return m;
}

EigenStructure jordan_chains(const Mat& A, double tol) {
  if (A.rows() != A.cols()) throw NumericError("jordan_chains: square input");
  const int n = static_cast<int>(A.rows());
  const CMat Ac = A.cast<std::complex<double>>();

  Eigen::ComplexEigenSolver<CMat> es(Ac, false);
  if (es.info() != Eigen::Success)
    throw NumericError("jordan_chains: eigenvalue computation failed");
  std::vector<std::complex<double>> eigs(es.eigenvalues().data(),
                                         es.eigenvalues().data() + n);
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  const double cluster_tol = tol * scale;

  // cluster eigenvalues within tolerance
  std::vector<bool> taken(n, false);
  EigenStructure out;
  for (int i = 0; i < n; ++i) {
    if (taken[i]) continue;
    std::vector<int> members{i};
    taken[i] = true;
    for (int j = i + 1; j < n; ++j)
      if (!taken[j] && std::abs(eigs[j] - eigs[i]) <= 10 * cluster_tol) {
        members.push_back(j);
        taken[j] = true;
      }
    std::complex<double> lambda(0.0, 0.0);
    for (int m : members) lambda += eigs[m];
    lambda /= static_cast<double>(members.size());

    const CMat N = Ac - lambda * CMat::Identity(n, n);
    // null-space ladder of N^k
    std::vector<CMat> ladder;
    std::vector<int> dims{0};
    CMat power = CMat::Identity(n, n);
    const double rank_tol = cluster_tol * std::pow(scale, 0.0);
    for (int k = 1; k <= n; ++k) {
      power = N * power;
      const CMat ns = complex_null_space(power, rank_tol);
      if (static_cast<int>(ns.cols()) == dims.back()) break;
      ladder.push_back(ns);
      dims.push_back(static_cast<int>(ns.cols()));
    }
    const int kmax = static_cast<int>(ladder.size());
    if (kmax == 0)
      throw NumericError(
          "jordan_chains: clustered eigenvalue has an empty null space; "
          "try a different tolerance");

    EigenvalueChains group;
    group.eigenvalue = lambda;
    CMat used(n, 0);  // orthonormal span of all chain vectors placed so far
    for (int k = kmax; k >= 1; --k) {
      const int longer = [&] {
        int c = 0;
        for (const auto& ch : group.chains)
          if (static_cast<int>(ch.size()) >= k + 1) ++c;
        return c;
      }();
      const int at_least_k = dims[k] - dims[k - 1];
      const int fresh = at_least_k - longer;
      if (fresh <= 0) continue;

      // avoid the lower rung and the level-k vectors of longer chains
      CMat avoid(n, 0);
      if (k >= 2) avoid = ladder[k - 2];
      for (const auto& ch : group.chains)
        if (static_cast<int>(ch.size()) >= k) {
          CMat next(n, avoid.cols() + 1);
          next << avoid, ch[k - 1];
          avoid = next;
        }
      Eigen::HouseholderQR<CMat> qr(avoid);
      CMat avoid_on =
          avoid.cols() ? CMat(qr.householderQ() * CMat::Identity(n, avoid.cols()))
                       : CMat(n, 0);

      const auto tops = extend_basis(&avoid_on, ladder[k - 1], fresh, 1e-7);
      if (static_cast<int>(tops.size()) < fresh)
        throw NumericError(
            "jordan_chains: chain extraction is ill conditioned; "
            "try a different tolerance");
      for (const CVec& top : tops) {
        std::vector<CVec> chain(k);
        chain[k - 1] = top;
        for (int j = k - 1; j >= 1; --j) chain[j - 1] = N * chain[j];
        if (chain[0].norm() < 1e-9)
          throw NumericError(
              "jordan_chains: degenerate chain; try a different tolerance");
        group.chains.push_back(std::move(chain));
      }
      (void)used;
    }

    // verify the chain relations
    for (const auto& ch : group.chains) {
      for (std::size_t j = 0; j < ch.size(); ++j) {
        CVec should = Ac * ch[j] - lambda * ch[j];
        if (j > 0) should -= ch[j - 1];
        if (should.norm() > 1e-6 * scale * std::max(1.0, ch[j].norm()))
          throw NumericError(
              "jordan_chains: verification failed; try a different tolerance");
      }
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

IdentifiabilityVerdict check_identifiable_t(const std::vector<double>& outputs,
                                            const std::vector<Mat>& A_seq,
                                            const std::vector<Mat>& C_rows,
                                            double tol) {
  const std::size_t t = outputs.size();
  if (C_rows.size() != t || A_seq.size() + 1 < t)
    throw NumericError("check_identifiable_t: sequence lengths disagree");
  const int n = static_cast<int>(C_rows.at(0).cols());

  Mat stacked(t, n);
  Mat transition = Mat::Identity(n, n);
  for (std::size_t k = 0; k < t; ++k) {
    stacked.row(k) = C_rows[k] * transition;
    if (k + 1 < t) transition = A_seq[k] * transition;
  }
  Vec y(t);
  for (std::size_t k = 0; k < t; ++k) y(k) = outputs[k];

  IdentifiabilityVerdict v;
  v.x0_candidate = stacked.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                       .solve(y);
  const Vec fitted = stacked * v.x0_candidate;
  v.residual = (fitted - y).norm();
  const bool explains = v.residual <= tol * std::max(1.0, y.norm());
  const bool nonzero = fitted.cwiseAbs().maxCoeff() > tol;
  v.identifiable = !(explains && nonzero);
  return v;
}

namespace {

/// Stacks the chain-output matrices of one mode at one eigenvalue: for each
/// chain, an upper-triangular Toeplitz column of sensor readings, padded to
/// the maximal chain length plus `extra_rows` of zeros.
CMat chain_output_matrix(const HybridModeSet::Mode& mode, int sensor,
                         const EigenvalueChains& group, int extra_rows) {
  const int rM = group.max_chain_length();
  const CMat crow =
      mode.C.row(sensor).cast<std::complex<double>>();
  int total_cols = 0;
  for (const auto& ch : group.chains)
    total_cols += static_cast<int>(ch.size());
  CMat v = CMat::Zero(rM + extra_rows, total_cols);
  int col = 0;
  for (const auto& ch : group.chains) {
    const int len = static_cast<int>(ch.size());
    for (int b = 0; b < len; ++b)
      for (int a = 0; a <= b; ++a)
        v(a, col + b) = (crow * ch[b - a])(0, 0);
    col += len;
  }
  return v;
}

}  // namespace

ModeGuessTest unidentifiable_attack_exists(const HybridModeSet::Mode& truth,
                                           const HybridModeSet::Mode& guess,
                                           int sensor, double tol) {
  const EigenStructure es1 = jordan_chains(truth.A, tol);
  const EigenStructure es2 = jordan_chains(guess.A, tol);
  const double scale =
      std::max({1.0, truth.A.cwiseAbs().maxCoeff(), guess.A.cwiseAbs().maxCoeff()});

  ModeGuessTest out;
  for (const auto& g1 : es1.groups) {
    for (const auto& g2 : es2.groups) {
      if (std::abs(g1.eigenvalue - g2.eigenvalue) > 100 * tol * scale) continue;
      const int r1 = g1.max_chain_length();
      const int r2 = g2.max_chain_length();
      const CMat v1 = chain_output_matrix(truth, sensor, g1,
                                          std::max(0, r2 - r1));
      const CMat v2 = chain_output_matrix(guess, sensor, g2,
                                          std::max(0, r1 - r2));
      CMat joint(v1.rows(), v1.cols() + v2.cols());
      joint << v1, v2;
      const int null_joint = static_cast<int>(joint.cols()) -
                             numerical_rank(joint, tol);
      const int null1 = static_cast<int>(v1.cols()) - numerical_rank(v1, tol);
      const int null2 = static_cast<int>(v2.cols()) - numerical_rank(v2, tol);
      if (null_joint > null1 + null2) {
        out.exists_unidentifiable = true;
        out.witness = g1.eigenvalue;
        return out;
      }
    }
  }
  return out;
}

bool RecommendationReport::all_pass() const {
  for (const auto& i : items)
    if (!i.pass) return false;
  return true;
}

std::string RecommendationReport::table() const {
  std::ostringstream os;
  for (const auto& i : items)
    os << (i.pass ? "[pass] " : "[FAIL] ") << i.name << ": " << i.detail
       << "\n";
  return os.str();
}

RecommendationReport validate_recommendations(const HybridModeSet& modes,
                                              double tol) {
  modes.validate();
  RecommendationReport rep;
  const int n = modes.n();
  const double scale = [&] {
    double s = 1.0;
    for (const auto& m : modes.modes) s = std::max(s, m.A.cwiseAbs().maxCoeff());
    return s;
  }();

  std::vector<CVec> spectra;
  for (const auto& m : modes.modes) {
    Eigen::ComplexEigenSolver<CMat> es(m.A.cast<std::complex<double>>(), false);
    spectra.push_back(es.eigenvalues());
  }

  {
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spectra.size(); ++i)
      for (std::size_t j = i + 1; j < spectra.size(); ++j)
        for (int a = 0; a < spectra[i].size(); ++a)
          for (int b = 0; b < spectra[j].size(); ++b)
            min_gap = std::min(min_gap,
                               std::abs(spectra[i](a) - spectra[j](b)));
    std::ostringstream os;
    os << "smallest cross-mode eigenvalue gap " << min_gap;
    rep.items.push_back({"disjoint spectra",
                         modes.size() < 2 || min_gap > tol * scale, os.str()});
  }
  {
    std::ostringstream os;
    os << "dwell " << modes.dwell << " vs 2n = " << 2 * n;
    rep.items.push_back({"dwell at least 2n", modes.dwell >= 2 * n, os.str()});
  }
  {
    rep.items.push_back({"randomized schedule", modes.size() >= 2,
                         modes.size() >= 2
                             ? "seeded stream over " +
                                   std::to_string(modes.size()) + " modes"
                             : "a single mode makes the schedule constant"});
  }
  {
    bool all_obs = true;
    std::string detail = "every mode observable";
    for (int j = 0; j < modes.size(); ++j) {
      const Mat obs =
          observability_matrix(modes.modes[j].C, modes.modes[j].A, n);
      if (numerical_rank(obs) < n) {
        all_obs = false;
        detail = "mode " + std::to_string(j + 1) + " is unobservable";
        break;
      }
    }
    rep.items.push_back({"per-mode observability", all_obs, detail});
  }
  {
    double min_abs = std::numeric_limits<double>::infinity();
    for (const auto& sp : spectra)
      for (int a = 0; a < sp.size(); ++a)
        min_abs = std::min(min_abs, std::abs(sp(a)));
    std::ostringstream os;
    os << "smallest eigenvalue magnitude " << min_abs;
    rep.items.push_back({"nonsingular dynamics", min_abs > tol * scale,
                         os.str()});
  }
  return rep;
}

IdentifyResult identify_run(const HybridScenario& sc) {
  sc.attack.validate();
  const int m = sc.modes.m();
  const int n = sc.modes.n();
  const auto src = make_source(sc.seed);

  FusionEstimator fusion(sc.modes, sc.Q, sc.R, sc.P0, sc.fusion_sigma);
  const double tau = threshold_for_far(sc.window, sc.false_alarm_rate);
  std::vector<SensorDetector> detectors(
      m, SensorDetector(sc.window, tau, sc.exclusion_alarms));

  const Mat Da = sensor_selection_matrix(sc.attack.sensor_set, m);
  Vec x = psd_sqrt(sc.P0) * src->normal_vector(streams::kInitialState, 0, n);

  IdentifyResult res;
  res.peak_statistic.assign(m, 0.0);
  for (int k = 0; k < sc.horizon; ++k) {
    std::optional<Vec> bias;
    if (sc.attack.kind != AttackKind::None && k >= sc.attack.start_step &&
        Da.cols() > 0)
      bias = Vec(Vec::Constant(Da.cols(), sc.attack.sensor_magnitude));
    const HybridStepResult step = step_hybrid(
        sc.modes, sc.Q, sc.R, x, Vec(), sc.attack.sensor_set, bias, k, *src);
    const auto fs = fusion.step(step.mode, step.y_operator);
    for (int s = 0; s < m; ++s) {
      const auto upd = detectors[s].update(fs.sensor_residues(s));
      res.peak_statistic[s] = std::max(res.peak_statistic[s], upd.statistic);
      if (upd.alarm) ++res.alarms_total;
    }
    x = step.next_state;
  }
  for (int s = 0; s < m; ++s)
    if (detectors[s].flagged()) res.flagged.push_back(s);
  return res;
}

}  // namespace mtd
