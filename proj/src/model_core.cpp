#include "mtd/model_core.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace mtd {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ModelError(msg);
}

/// PBH-style advisory checks: (A,C) detectable, (A,B) and (A,Q^.5)
/// stabilizable. Failures are reported, not fatal.
void pbh_warnings(const Mat& A, const Mat& B, const Mat& C, const Mat& Q,
                  std::vector<std::string>* out) {
  Eigen::EigenSolver<Mat> es(A);
  const int n = static_cast<int>(A.rows());
  const Mat Qh = psd_sqrt(Q);
  for (int i = 0; i < n; ++i) {
    const std::complex<double> lam = es.eigenvalues()(i);
    if (std::abs(lam) < 1.0 - 1e-9) continue;  // stable modes are fine
    CMat pencil(n, n);
    pencil = A.cast<std::complex<double>>() - lam * CMat::Identity(n, n);

    CMat det_test(n + C.rows(), n);
    det_test << pencil, C.cast<std::complex<double>>();
    if (numerical_rank(det_test) < n)
      out->push_back("unstable mode of A is unobservable through C");

    CMat stab_test(n, n + B.cols());
    stab_test << pencil, B.cast<std::complex<double>>();
    if (numerical_rank(stab_test) < n)
      out->push_back("unstable mode of A is uncontrollable through B");

    CMat noise_test(n, n + Qh.cols());
    noise_test << pencil, Qh.cast<std::complex<double>>();
    if (numerical_rank(noise_test) < n)
      out->push_back("unstable mode of A is unreachable from the process noise");
  }
}

}  // namespace

std::vector<std::string> LTIModel::validate() const {
  require(A.rows() == A.cols(), "A must be square");
  require(B.rows() == A.rows(), "B row count must match the state dimension");
  require(C.cols() == A.rows(), "C column count must match the state dimension");
  require(Q.rows() == A.rows() && Q.cols() == A.rows(), "Q must be n x n");
  require(R.rows() == C.rows() && R.cols() == C.rows(), "R must be m x m");
  require((Q - Q.transpose()).cwiseAbs().maxCoeff() < 1e-9, "Q must be symmetric");
  require((R - R.transpose()).cwiseAbs().maxCoeff() < 1e-9, "R must be symmetric");
  require(is_psd(Q), "Q must be positive semidefinite");
  require(is_pd(R), "R must be positive definite");
  std::vector<std::string> warnings;
  pbh_warnings(A, B, C, Q, &warnings);
  return warnings;
}

void MatrixDistribution::validate() const {
  require(cov.rows() == cov.cols(), "covariance must be square");
  require(cov.rows() == mean.size(), "covariance and mean dimensions differ");
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-9,
          "covariance must be symmetric");
  require(is_psd(cov), "covariance must be positive semidefinite");
  for (const Mat& s : cov_seq) {
    require(s.rows() == cov.rows() && s.cols() == cov.cols(),
            "covariance sequence entry has wrong shape");
    require(is_psd(s), "covariance sequence entry must be PSD");
  }
}

void ExtendedModel::validate() const {
  base.validate();
  require(A_tilde.rows() == A_tilde.cols(), "auxiliary dynamics must be square");
  require(C_tilde.cols() == A_tilde.rows(),
          "auxiliary output map width must match the auxiliary state");
  require(Q_tilde.rows() == n_aux() && Q_tilde.cols() == n_aux(),
          "auxiliary process covariance must match the auxiliary state");
  require(R_full.rows() == m_total() && R_full.cols() == m_total(),
          "full sensor covariance must cover both sensor blocks");
  require(is_psd(stacked_Q()), "stacked process covariance must be PSD");
  require(is_pd(R_full), "full sensor covariance must be positive definite");
  require(spectral_radius(A_tilde) < 1.0, "auxiliary dynamics must be stable");
  require(dist_Abar.dim() == n(), "state-coupling rows live in R^n");
  require(dist_Btilde.dim() == p(), "auxiliary actuator rows live in R^p");
  require(dist_Cbar.dim() == n(), "output-coupling rows live in R^n");
  dist_Abar.validate();
  dist_Btilde.validate();
  dist_Cbar.validate();
}

Mat ExtendedModel::stacked_Q() const {
  Mat q = Mat::Zero(n_total(), n_total());
  q.topLeftCorner(n_aux(), n_aux()) = Q_tilde;
  q.bottomRightCorner(n(), n()) = base.Q;
  return q;
}

Mat ExtendedModel::stacked_A(const Mat& Abar) const {
  Mat a = Mat::Zero(n_total(), n_total());
  a.topLeftCorner(n_aux(), n_aux()) = A_tilde;
  a.topRightCorner(n_aux(), n()) = Abar;
  a.bottomRightCorner(n(), n()) = base.A;
  return a;
}

Mat ExtendedModel::stacked_B(const Mat& Btilde) const {
  Mat b(n_total(), p());
  b.topRows(n_aux()) = Btilde;
  b.bottomRows(n()) = base.B;
  return b;
}

Mat ExtendedModel::stacked_C(const Mat& Cbar) const {
  Mat c = Mat::Zero(m_total(), n_total());
  c.topLeftCorner(m_aux(), n_aux()) = C_tilde;
  c.topRightCorner(m_aux(), n()) = Cbar;
  c.bottomRightCorner(m(), n()) = base.C;
  return c;
}

void ExtendedModel::realize(int k, const NormalSource& src, Mat* Abar,
                            Mat* Btilde, Mat* Cbar) const {
  *Abar = sample_time_varying(dist_Abar, n_aux(), n(), k, src);
  *Btilde = sample_time_varying(dist_Btilde, n_aux(), p(), k, src);
  *Cbar = sample_time_varying(dist_Cbar, m_aux(), n(), k, src);
}

double NonlinearitySpec::h(double x) const {
  if (kind == Kind::Power) return std::pow(x, power_c);
  return h_custom(x);
}

double NonlinearitySpec::dh(double x) const {
  if (kind == Kind::Power)
    return power_c * std::pow(x, power_c - 1);
  return dh_custom(x);
}

Vec NonlinearitySpec::h_vec(const Vec& x) const {
  Vec out(x.size());
  for (int i = 0; i < x.size(); ++i) out(i) = h(x(i));
  if (!out.allFinite())
    throw NumericError("nonlinearity evaluated to a non-finite value");
  return out;
}

Vec NonlinearitySpec::dh_vec(const Vec& x) const {
  Vec out(x.size());
  for (int i = 0; i < x.size(); ++i) out(i) = dh(x(i));
  if (!out.allFinite())
    throw NumericError("nonlinearity derivative is non-finite");
  return out;
}

void NonlinearitySpec::validate() const {
  if (kind == Kind::Power)
    require(power_c >= 1, "power nonlinearity needs a positive integer power");
  else
    require(static_cast<bool>(h_custom) && static_cast<bool>(dh_custom),
            "custom nonlinearity needs both the map and its derivative");
  dist_G.validate();
}

Mat NonlinearitySpec::realize_G(int k, int m_aux, int n,
                                const NormalSource& src) const {
  return sample_time_varying(dist_G, m_aux, n, k, src);
}

void HybridModeSet::validate() const {
  require(!modes.empty(), "mode set must be nonempty");
  require(dwell >= 1, "dwell must be at least one step");
  const int nn = n();
  const int mm = m();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const Mode& md = modes[i];
    require(md.A.rows() == nn && md.A.cols() == nn,
            "mode " + std::to_string(i + 1) + ": A has inconsistent shape");
    require(md.C.rows() == mm && md.C.cols() == nn,
            "mode " + std::to_string(i + 1) + ": C has inconsistent shape");
  }
}

int HybridModeSet::mode_at(int k, const NormalSource& src) const {
  if (modes.size() == 1) return 0;
  const std::uint64_t block = static_cast<std::uint64_t>(k / dwell);
  return src.uniform_int(schedule_stream, block, size());
}

Mat sample_time_varying(const MatrixDistribution& dist, int rows, int cols,
                        int k, const NormalSource& src) {
  const bool by_rows = dist.axis == Axis::Rows;
  const int dim = by_rows ? cols : rows;
  const int count = by_rows ? rows : cols;
  if (dist.dim() != dim)
    throw ModelError("sample_time_varying: shape inconsistent with the law");
  const Mat& cov = dist.cov_at(k);
  const Mat L = psd_sqrt(cov);
  Mat out(rows, cols);
  for (int i = 0; i < count; ++i) {
    const Vec xi = src.normal_vector(dist.stream, k, dim,
                                     static_cast<std::uint64_t>(i) * dim);
    const Vec draw = dist.mean + L * xi;
    if (by_rows)
      out.row(i) = draw.transpose();
    else
      out.col(i) = draw;
  }
  return out;
}

Mat sensor_selection_matrix(const std::vector<int>& sensors, int m) {
  Mat d = Mat::Zero(m, static_cast<int>(sensors.size()));
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const int s = sensors[i];
    if (s < 0 || s >= m) throw ModelError("sensor index out of range");
    d(s, static_cast<int>(i)) = 1.0;
  }
  return d;
}

void guard_divergence(const Vec& v, int k, const char* what) {
  if (!v.allFinite() || v.cwiseAbs().maxCoeff() > kDivergenceGuard) {
    std::ostringstream os;
    os << "trajectory diverged at step " << k << " (" << what << ")";
    throw DivergenceError(os.str());
  }
}

Vec draw_process_noise(const ExtendedModel& model, int k,
                       const NormalSource& src) {
  const int n = model.n();
  const int na = model.n_aux();
  Vec wbar(n + na);
  wbar << psd_sqrt(model.Q_tilde) *
              src.normal_vector(streams::kAuxProcessNoise, k, na),
      psd_sqrt(model.base.Q) * src.normal_vector(streams::kProcessNoise, k, n);
  return wbar;
}

Vec draw_sensor_noise(const ExtendedModel& model, int k,
                      const NormalSource& src) {
  Vec xi(model.m_total());
  xi << src.normal_vector(streams::kAuxSensorNoise, k, model.m_aux()),
      src.normal_vector(streams::kSensorNoise, k, model.m());
  return psd_sqrt(model.R_full) * xi;
}

Vec draw_initial_state(const ExtendedModel& model, const Mat& P0_full,
                       const NormalSource& src) {
  const int n = model.n();
  const int na = model.n_aux();
  Vec xi(n + na);
  xi << src.normal_vector(streams::kAuxInitialState, 0, na),
      src.normal_vector(streams::kInitialState, 0, n);
  return psd_sqrt(P0_full) * xi;
}

namespace {

ExtendedStepResult step_stacked(const ExtendedModel& model,
                                const NonlinearitySpec* nl, const Vec& state,
                                const Vec& u,
                                const std::optional<AttackInput>& attack,
                                int k, const NormalSource& src) {
  const int n = model.n();
  const int na = model.n_aux();
  if (state.size() != n + na)
    throw ModelError("state dimension must be n + n_aux");

  ExtendedStepResult res;
  model.realize(k, src, &res.Abar, &res.Btilde, &res.Cbar);
  const Mat A = model.stacked_A(res.Abar);
  const Mat B = model.stacked_B(res.Btilde);
  const Mat C = model.stacked_C(res.Cbar);

  Vec u_eff = u;
  if (attack && attack->u_bias.size()) u_eff += attack->u_bias;

  const Vec wbar = draw_process_noise(model, k, src);
  const Vec vbar = draw_sensor_noise(model, k, src);

  Vec y_true = C * state + vbar;
  if (nl != nullptr) {
    res.G = nl->realize_G(k, model.m_aux(), n, src);
    y_true.head(model.m_aux()) += res.G * nl->h_vec(state.tail(n));
  }

  res.y_attacker = y_true;
  res.y_operator = y_true;
  if (attack && attack->d_bias.size()) res.y_operator += attack->d_bias;

  res.next_state = A * state + B * u_eff + wbar;
  guard_divergence(res.next_state, k, "extended state");
  guard_divergence(res.y_operator, k, "extended output");
  return res;
}

}  // namespace

ExtendedStepResult step_extended(const ExtendedModel& model, const Vec& state,
                                 const Vec& u,
                                 const std::optional<AttackInput>& attack,
                                 int k, const NormalSource& src) {
  return step_stacked(model, nullptr, state, u, attack, k, src);
}

ExtendedStepResult step_nonlinear(const ExtendedModel& model,
                                  const NonlinearitySpec& nl, const Vec& state,
                                  const Vec& u,
                                  const std::optional<AttackInput>& attack,
                                  int k, const NormalSource& src) {
  return step_stacked(model, &nl, state, u, attack, k, src);
}

HybridStepResult step_hybrid(const HybridModeSet& modes, const Mat& Q,
                             const Mat& R, const Vec& state, const Vec& u,
                             const std::vector<int>& sensors,
                             const std::optional<Vec>& d_bias, int k,
                             const NormalSource& src) {
  if (modes.modes.empty()) throw ModelError("mode set must be nonempty");
  HybridStepResult res;
  res.mode = modes.mode_at(k, src);
  const HybridModeSet::Mode& md = modes.modes[res.mode];
  const int n = modes.n();
  const int m = modes.m();

  Vec v = Vec::Zero(m);
  if (R.size())
    v = psd_sqrt(R) * src.normal_vector(streams::kSensorNoise, k, m);
  res.y_attacker = md.C * state + v;
  res.y_operator = res.y_attacker;
  if (d_bias) {
    const Mat D = sensor_selection_matrix(sensors, m);
    if (d_bias->size() != D.cols())
      throw ModelError("sensor bias dimension must match the targeted set");
    res.y_operator += D * (*d_bias);
  }
  res.next_state = md.A * state;
  if (u.size()) res.next_state += md.B * u;
  if (Q.size())
    res.next_state += psd_sqrt(Q) * src.normal_vector(streams::kProcessNoise, k, n);
  guard_divergence(res.next_state, k, "hybrid state");
  return res;
}

}  // namespace mtd
