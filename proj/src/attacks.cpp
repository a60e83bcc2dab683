#include "mtd/attacks.hpp"

#include <cmath>

namespace mtd {
namespace {

constexpr std::uint64_t kParticleStride = 1 << 14;

// per-family attacker streams (private seed, so ids may overlap the plant's)
constexpr std::uint64_t kDrawA = 101;
constexpr std::uint64_t kDrawB = 102;
constexpr std::uint64_t kDrawC = 103;
constexpr std::uint64_t kDrawG = 104;
constexpr std::uint64_t kDrawNoise = 105;
constexpr std::uint64_t kDrawInit = 106;
constexpr std::uint64_t kDrawResample = 107;

Mat mean_matrix(const MatrixDistribution& dist, int rows, int cols) {
  if (dist.axis == Axis::Rows)
    return Vec::Ones(rows) * dist.mean.transpose();
  return dist.mean * Vec::Ones(cols).transpose();
}

/// Draws a matrix whose rows (or columns) are IID N(mean, cov) using a
/// per-particle slice of the counter space.
Mat draw_rowwise(const NormalSource& src, std::uint64_t stream, int k,
                 std::uint64_t base, const MatrixDistribution& dist, int rows,
                 int cols, std::uint64_t* cursor) {
  const bool by_rows = dist.axis == Axis::Rows;
  const int dim = by_rows ? cols : rows;
  const int count = by_rows ? rows : cols;
  const Mat L = psd_sqrt(dist.cov_at(k));
  Mat out(rows, cols);
  for (int i = 0; i < count; ++i) {
    Vec xi(dim);
    for (int d = 0; d < dim; ++d)
      xi(d) = src.normal(stream, k, base + (*cursor)++);
    const Vec v = dist.mean + L * xi;
    if (by_rows)
      out.row(i) = v.transpose();
    else
      out.col(i) = v;
  }
  return out;
}

}  // namespace

void AttackSpec::validate() const {
  if (start_step < 0) throw ModelError("attack start step must be >= 0");
  if (!std::isfinite(magnitude) || !std::isfinite(sensor_magnitude))
    throw ModelError("attack magnitudes must be finite");
  if (kind == AttackKind::EstimateTracking && particles < 1)
    throw ModelError("estimate tracking needs at least one particle");
}

// ---------------------------------------------------------------------------

ZeroDynamicsAttacker::ZeroDynamicsAttacker(const Mat& A, const Mat& Ba,
                                           const Mat& C)
    : A_(A), Ba_(Ba), C_(C), xa_(Vec::Zero(A.rows())) {}

Vec ZeroDynamicsAttacker::step(const Vec& u_bias) {
  const Vec d = -(C_ * xa_);
  xa_ = A_ * xa_ + Ba_ * u_bias;
  return d;
}

std::vector<Vec> zero_dynamics_attack(const Mat& A, const Mat& Ba,
                                      const Mat& C,
                                      const std::vector<Vec>& u_bias) {
  ZeroDynamicsAttacker att(A, Ba, C);
  std::vector<Vec> out;
  out.reserve(u_bias.size());
  for (const Vec& u : u_bias) out.push_back(att.step(u));
  return out;
}

CovertSubtractAttacker::CovertSubtractAttacker(const ExtendedModel& model,
                                               const AttackSpec& spec,
                                               std::uint64_t attacker_seed)
    : model_(model),
      spec_(spec),
      src_(make_source(attacker_seed)),
      xbar_bias_(Vec::Zero(model.n_total())) {}

CovertSubtractAttacker::Output CovertSubtractAttacker::step(int k) {
  Output out;
  out.u_bias = Vec::Zero(model_.p());
  out.d_bias = Vec::Zero(model_.m_total());
  if (k < spec_.start_step) return out;

  out.u_bias.setConstant(spec_.magnitude);

  std::uint64_t cur = 0;
  const Mat Cbar = draw_rowwise(*src_, kDrawC, k, 0, model_.dist_Cbar,
                                model_.m_aux(), model_.n(), &cur);
  out.d_bias = -(model_.stacked_C(Cbar) * xbar_bias_);

  cur = 0;
  const Mat Abar = draw_rowwise(*src_, kDrawA, k, 0, model_.dist_Abar,
                                model_.n_aux(), model_.n(), &cur);
  cur = 0;
  const Mat Btilde = draw_rowwise(*src_, kDrawB, k, 0, model_.dist_Btilde,
                                  model_.n_aux(), model_.p(), &cur);
  xbar_bias_ = model_.stacked_A(Abar) * xbar_bias_ +
               model_.stacked_B(Btilde) * out.u_bias;
  guard_divergence(xbar_bias_, k, "attacker bias state");
  return out;
}

// ---------------------------------------------------------------------------

Mat bias_propagator(const std::vector<StepMatrices>& steps, int j_abs, int t,
                    int i) {
  const int n = static_cast<int>(steps.at(0).A.rows());
  Mat d = Mat::Identity(n, n);
  for (int s = t + 1; s <= i - 1; ++s) {
    const StepMatrices& sm = steps.at(static_cast<std::size_t>(s - j_abs));
    d = sm.A * (Mat::Identity(n, n) - sm.K * sm.C) * d;
  }
  return d;
}

BiasMaps build_bias_maps(const std::vector<StepMatrices>& steps, int j, int i,
                         int k) {
  if (static_cast<int>(steps.size()) != k - j + 1)
    throw ModelError("build_bias_maps: window must cover steps j..k");
  if (i <= j || i > k)
    throw ModelError("build_bias_maps: residue index must lie in (j, k]");

  const StepMatrices& at_i = steps.at(static_cast<std::size_t>(i - j));
  const int my = static_cast<int>(at_i.C.rows());
  const int p = static_cast<int>(steps.at(0).B.cols());

  BiasMaps maps;
  maps.i = i;
  maps.M_input = Mat::Zero(my, p * (k - j));
  maps.M_sensor = Mat::Zero(my, my * (k - j));

  for (int t = j; t <= k - 1; ++t) {
    if (t >= i) continue;
    const Mat d = bias_propagator(steps, j, t, i);
    maps.M_input.middleCols((t - j) * p, p) =
        at_i.C * d * steps.at(static_cast<std::size_t>(t - j)).B;
  }
  for (int t = j + 1; t <= k; ++t) {
    const int col = (t - j - 1) * my;
    if (t == i) {
      maps.M_sensor.middleCols(col, my) = Mat::Identity(my, my);
    } else if (t < i) {
      const StepMatrices& sm = steps.at(static_cast<std::size_t>(t - j));
      maps.M_sensor.middleCols(col, my) =
          -(at_i.C * bias_propagator(steps, j, t, i) * sm.A * sm.K);
    }
  }
  return maps;
}

// ---------------------------------------------------------------------------

EstimateTrackingAttacker::EstimateTrackingAttacker(
    const ExtendedModel& model, const NonlinearitySpec* nl,
    const AttackSpec& spec, const Mat& P0, std::uint64_t attacker_seed)
    : model_(model),
      nl_(nl),
      spec_(spec),
      src_(make_source(attacker_seed)),
      nt_(model.n_total()) {
  mean_C_ = model_.stacked_C(
      mean_matrix(model_.dist_Cbar, model_.m_aux(), model_.n()));

  const Mat L0 = psd_sqrt(P0);
  particles_.resize(spec.particles);
  for (int j = 0; j < spec.particles; ++j) {
    Vec x = Vec::Zero(2 * nt_);
    Vec xi(nt_);
    for (int d = 0; d < nt_; ++d)
      xi(d) = src_->normal(kDrawInit, 0, j * kParticleStride + d);
    x.head(nt_) = L0 * xi;  // operator estimate block starts at zero
    particles_[j].x = x;
    particles_[j].P = P0;
    particles_[j].w = 1.0 / spec.particles;
  }
}

Vec EstimateTrackingAttacker::estimate_mean() const {
  Vec m = Vec::Zero(nt_);
  for (const Particle& p : particles_) m += p.w * p.x.tail(nt_);
  return m;
}

void EstimateTrackingAttacker::normalize_and_maybe_resample() {
  double total = 0.0;
  for (const Particle& p : particles_) total += p.w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    // every hypothesis lost the measurement; restart from a flat weighting
    for (Particle& p : particles_) p.w = 1.0 / particles_.size();
    total = 1.0;
  }
  double ess_inv = 0.0;
  for (Particle& p : particles_) {
    p.w /= total;
    ess_inv += p.w * p.w;
  }
  const double ess = 1.0 / ess_inv;
  if (ess >= 0.5 * particles_.size()) return;

  // systematic resampling
  const std::size_t L = particles_.size();
  const double u0 = src_->uniform(kDrawResample, draw_epoch_, 0) / L;
  std::vector<Particle> next;
  next.reserve(L);
  double cum = particles_[0].w;
  std::size_t idx = 0;
  for (std::size_t j = 0; j < L; ++j) {
    const double target = u0 + static_cast<double>(j) / L;
    while (target > cum && idx + 1 < L) cum += particles_[++idx].w;
    next.push_back(particles_[idx]);
    next.back().w = 1.0 / L;
  }
  particles_.swap(next);
}

EstimateTrackingAttacker::Output EstimateTrackingAttacker::observe(
    int k, const Vec& y_intercepted,
    const std::optional<FilterSideInfo>& side) {
  const int ma = model_.m_aux();
  const int n = model_.n();
  const Mat G_mean = nl_ ? mean_matrix(nl_->dist_G, ma, n) : Mat();

  // measurement weighting of the cloud
  for (Particle& p : particles_) {
    const Vec xbar = p.x.head(nt_);
    const Vec x_plant = xbar.tail(n);
    Vec mean;
    Mat cov = model_.R_full;
    if (side) {
      mean = side->C * xbar;
    } else {
      mean = mean_C_ * xbar;
      const double scatter = x_plant.dot(model_.dist_Cbar.cov_at(k) * x_plant);
      cov.topLeftCorner(ma, ma) += scatter * Mat::Identity(ma, ma);
    }
    if (nl_) {
      const Vec h = nl_->h_vec(x_plant);
      mean.head(ma) += G_mean * h;
      cov.topLeftCorner(ma, ma) += h.squaredNorm() * nl_->dist_G.cov_at(k);
    }
    p.w *= std::exp(gaussian_logpdf(y_intercepted, mean, cov));
  }
  draw_epoch_ = static_cast<std::uint64_t>(k);
  normalize_and_maybe_resample();

  // optimal sensor bias: steer the received output onto the expected
  // one-step output prediction of the operator's filter
  Output out;
  out.u_bias = Vec::Zero(model_.p());
  out.d_bias = Vec::Zero(model_.m_total());
  double ess_inv = 0.0;
  for (const Particle& p : particles_) ess_inv += p.w * p.w;
  out.ess = 1.0 / ess_inv;

  if (k >= spec_.start_step) {
    out.u_bias.setConstant(spec_.magnitude);
    const Vec xhat_e = estimate_mean();
    Vec predicted = side ? Vec(side->C * xhat_e) : Vec(mean_C_ * xhat_e);
    if (nl_) {
      Vec h_mean = Vec::Zero(n);
      for (const Particle& p : particles_)
        h_mean += p.w * nl_->h_vec(p.x.tail(nt_).tail(n));
      predicted.head(ma) += G_mean * h_mean;
    }
    out.d_bias = predicted - y_intercepted;
  }
  return out;
}

void EstimateTrackingAttacker::advance(
    int k, const Vec& u, const Vec& y_operator,
    const std::optional<FilterSideInfo>& side) {
  const int ma = model_.m_aux();
  const int n = model_.n();

  // propagate each hypothesis with a fresh draw of the hidden matrices
  const Mat I = Mat::Identity(nt_, nt_);
  const Mat Lq = psd_sqrt(model_.stacked_Q());
  for (std::size_t j = 0; j < particles_.size(); ++j) {
    Particle& p = particles_[j];
    const std::uint64_t base = j * kParticleStride;
    std::uint64_t cur = 0;
    const Mat Abar = draw_rowwise(*src_, kDrawA, k, base, model_.dist_Abar,
                                  model_.n_aux(), n, &cur);
    cur = 0;
    const Mat Btilde = draw_rowwise(*src_, kDrawB, k, base, model_.dist_Btilde,
                                    model_.n_aux(), model_.p(), &cur);
    const Mat A = model_.stacked_A(Abar);
    const Mat B = model_.stacked_B(Btilde);

    Mat C, K;
    if (side) {
      C = side->C;
      K = side->K;
    } else {
      cur = 0;
      const Mat Cbar = draw_rowwise(*src_, kDrawC, k, base, model_.dist_Cbar,
                                    ma, n, &cur);
      C = model_.stacked_C(Cbar);
      const Mat S = C * p.P * C.transpose() + model_.R_full;
      K = S.ldlt().solve(C * p.P).transpose();
      p.P = symmetrize(A * (I - K * C) * p.P * A.transpose() +
                       model_.stacked_Q());
    }

    Vec w(nt_);
    for (int d = 0; d < nt_; ++d)
      w(d) = src_->normal(kDrawNoise, k, base + d);

    const Vec xbar = p.x.head(nt_);
    const Vec xhat = p.x.tail(nt_);
    Vec u_applied = u;
    if (k >= spec_.start_step)
      u_applied.array() += spec_.magnitude;
    Vec xbar_next = A * xbar + B * u_applied + Lq * w;
    Vec xhat_next = A * (I - K * C) * xhat + A * K * y_operator + B * u;
    if (nl_) {
      cur = 0;
      const Mat G = draw_rowwise(*src_, kDrawG, k, base, nl_->dist_G, ma, n,
                                 &cur);
      Vec gh = Vec::Zero(model_.m_total());
      gh.head(ma) = G * nl_->h_vec(xhat.tail(n));
      xhat_next -= A * K * gh;
    }
    guard_divergence(xbar_next, k, "tracking particle");
    p.x.head(nt_) = xbar_next;
    p.x.tail(nt_) = xhat_next;
  }
}

}  // namespace mtd
