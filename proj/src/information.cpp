#include "mtd/information.hpp"

#include <cmath>

namespace mtd {
namespace {

Mat block_diag(const std::vector<Mat>& blocks) {
  int r = 0, c = 0;
  for (const Mat& b : blocks) {
    r += static_cast<int>(b.rows());
    c += static_cast<int>(b.cols());
  }
  Mat out = Mat::Zero(r, c);
  int ro = 0, co = 0;
  for (const Mat& b : blocks) {
    out.block(ro, co, b.rows(), b.cols()) = b;
    ro += static_cast<int>(b.rows());
    co += static_cast<int>(b.cols());
  }
  return out;
}

Mat kron_identity_rowvec(int copies, const Vec& v) {
  // I_copies (x) v'
  Mat out = Mat::Zero(copies, copies * v.size());
  for (int i = 0; i < copies; ++i)
    out.block(i, i * v.size(), 1, v.size()) = v.transpose();
  return out;
}

Mat mean_matrix_rows(const MatrixDistribution& dist, int rows) {
  return Vec::Ones(rows) * dist.mean.transpose();
}

Mat inverse_pd(const Mat& m) {
  Eigen::LDLT<Mat> ldlt(symmetrize(m));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericError("matrix inversion requires a positive definite input");
  return ldlt.solve(Mat::Identity(m.rows(), m.cols()));
}

FimReport make_report(Mat value, int horizon) {
  FimReport rep;
  rep.value = symmetrize(value);
  rep.norm = spectral_norm(rep.value);
  rep.psd = is_psd(rep.value, 1e-9 * (1.0 + rep.norm));
  rep.horizon = horizon;
  return rep;
}

}  // namespace

DefenderStacks build_defender_stacks(const ExtendedModel& model, int horizon_k,
                                     const Mat& P0_aux) {
  if (horizon_k < 0) throw ModelError("horizon must be nonnegative");
  DefenderStacks st;
  st.horizon = horizon_k;
  st.n = model.n();
  st.n_aux = model.n_aux();
  st.m_aux = model.m_aux();
  st.p = model.p();
  const int K = horizon_k + 1;
  const int ma = st.m_aux;
  const int na = st.n_aux;

  // powers of the auxiliary dynamics premultiplied by the auxiliary output
  std::vector<Mat> CApow(K);
  CApow[0] = model.C_tilde;
  for (int i = 1; i < K; ++i) CApow[i] = CApow[i - 1] * model.A_tilde;

  st.H_D = Mat::Zero(K * ma, K * na);
  st.H_W = Mat::Zero(K * ma, K * na);
  for (int r = 0; r < K; ++r) {
    for (int c = 0; c < K; ++c) {
      if (r > c) st.H_D.block(r * ma, c * na, ma, na) = CApow[r - 1 - c];
      if (r >= c) st.H_W.block(r * ma, c * na, ma, na) = CApow[r - c];
    }
  }

  Mat P0 = P0_aux.size() ? P0_aux : dlyap(model.A_tilde, model.Q_tilde);
  std::vector<Mat> qs(K);
  qs[0] = P0;
  for (int i = 1; i < K; ++i) qs[i] = model.Q_tilde;
  st.Sigma_Q = block_diag(qs);
  std::vector<Mat> rs(K, model.R_full.topLeftCorner(ma, ma));
  st.Sigma_R = block_diag(rs);
  st.Sigma_N = symmetrize(st.H_W * st.Sigma_Q * st.H_W.transpose() + st.Sigma_R);
  return st;
}

FimReport defender_fim_linear(const DefenderStacks& st,
                              const std::vector<Mat>& Abar,
                              const std::vector<Mat>& Cbar) {
  const int K = st.horizon + 1;
  if (static_cast<int>(Abar.size()) != K || static_cast<int>(Cbar.size()) != K)
    throw ModelError("one realized coupling pair per step is required");
  const Mat map = st.H_D * block_diag(Abar) + block_diag(Cbar);
  const Mat fim = map.transpose() * inverse_pd(st.Sigma_N) * map;
  return make_report(fim, st.horizon);
}

FimReport defender_fim_linear_expected(const DefenderStacks& st,
                                       const MatrixDistribution& dist_Abar,
                                       const MatrixDistribution& dist_Cbar) {
  const int K = st.horizon + 1;
  const int n = st.n;
  const Mat Ninv = inverse_pd(st.Sigma_N);
  const Mat Jf = st.H_D.transpose() * Ninv * st.H_D;
  const Mat Ff = st.H_D.transpose() * Ninv;
  const Vec& muA = dist_Abar.mean;
  const Vec& muC = dist_Cbar.mean;

  Mat fim = Mat::Zero(K * n, K * n);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      const Mat Jij = Jf.block(i * st.n_aux, j * st.n_aux, st.n_aux, st.n_aux);
      const Mat Sij = Ninv.block(i * st.m_aux, j * st.m_aux, st.m_aux, st.m_aux);
      const Mat Fij = Ff.block(i * st.n_aux, j * st.m_aux, st.n_aux, st.m_aux);
      const Mat Fji = Ff.block(j * st.n_aux, i * st.m_aux, st.n_aux, st.m_aux);
      Mat blk = entry_sum(Jij) * muA * muA.transpose() +
                entry_sum(Sij) * muC * muC.transpose() +
                entry_sum(Fij) * muA * muC.transpose() +
                entry_sum(Fji) * muC * muA.transpose();
      if (i == j)
        blk += Jij.trace() * dist_Abar.cov + Sij.trace() * dist_Cbar.cov;
      fim.block(i * n, j * n, n, n) = blk;
    }
  }
  return make_report(fim, st.horizon);
}

InformationBlocks information_blocks(const DefenderStacks& st) {
  const int K = st.horizon + 1;
  const Mat Ninv = inverse_pd(st.Sigma_N);
  const Mat Jf = st.H_D.transpose() * Ninv * st.H_D;
  const Mat Ff = st.H_D.transpose() * Ninv;
  InformationBlocks blocks;
  for (int i = 0; i < K; ++i) {
    blocks.J.push_back(
        Jf.block(i * st.n_aux, i * st.n_aux, st.n_aux, st.n_aux));
    blocks.S.push_back(
        Ninv.block(i * st.m_aux, i * st.m_aux, st.m_aux, st.m_aux));
    blocks.F.push_back(
        Ff.block(i * st.n_aux, i * st.m_aux, st.n_aux, st.m_aux));
  }
  return blocks;
}

Mat stacked_parameter_prior(const DefenderStacks& st, const Mat& Sigma_A,
                            const Mat& Sigma_B, const Mat& Sigma_C) {
  const int K = st.horizon + 1;
  std::vector<Mat> blocks;
  blocks.reserve(3 * K);
  // one row-law block per auxiliary row (or sensor), per step, family-major
  for (int i = 0; i < K; ++i)
    for (int r = 0; r < st.n_aux; ++r) blocks.push_back(Sigma_A);
  for (int i = 0; i < K; ++i)
    for (int r = 0; r < st.n_aux; ++r) blocks.push_back(Sigma_B);
  for (int i = 0; i < K; ++i)
    for (int r = 0; r < st.m_aux; ++r) blocks.push_back(Sigma_C);
  return block_diag(blocks);
}

AttackerFim attacker_fim(const DefenderStacks& st, const NonlinearitySpec* nl,
                         const std::vector<Vec>& x_attacked,
                         const std::vector<Vec>& u_attacked,
                         const Mat& Sigma_A, const Mat& Sigma_B,
                         const Mat& Sigma_C, const Mat& Sigma_G) {
  const int K = st.horizon + 1;
  if (static_cast<int>(x_attacked.size()) < K ||
      static_cast<int>(u_attacked.size()) < K)
    throw ModelError("trajectory must cover the information horizon");

  std::vector<Mat> xa_blocks(K), ua_blocks(K), xe_blocks(K);
  for (int i = 0; i < K; ++i) {
    xa_blocks[i] = kron_identity_rowvec(st.n_aux, x_attacked[i]);
    ua_blocks[i] = kron_identity_rowvec(st.n_aux, u_attacked[i]);
    xe_blocks[i] = kron_identity_rowvec(st.m_aux, x_attacked[i]);
  }
  const Mat H_X = st.H_D * block_diag(xa_blocks);
  const Mat H_U = st.H_D * block_diag(ua_blocks);
  const Mat H_E = block_diag(xe_blocks);
  Mat H(H_X.rows(), H_X.cols() + H_U.cols() + H_E.cols());
  H << H_X, H_U, H_E;

  const Mat prior = stacked_parameter_prior(st, Sigma_A, Sigma_B, Sigma_C);
  const Mat half_prior_inv = 0.5 * inverse_pd(prior);

  AttackerFim out;
  const Mat Ninv = inverse_pd(st.Sigma_N);
  out.linear = symmetrize(H.transpose() * Ninv * H + half_prior_inv);

  // per-step magnitude of the nonlinearity
  Vec scale = Vec::Zero(K);
  if (nl != nullptr)
    for (int i = 0; i < K; ++i)
      scale(i) = nl->h_vec(x_attacked[i]).squaredNorm();

  if (nl == nullptr || scale.maxCoeff() <= 0.0 ||
      max_eigenvalue(Sigma_G) <= 0.0) {
    out.nonlinear = out.linear;
    out.difference = Mat::Zero(out.linear.rows(), out.linear.cols());
  } else {
    std::vector<Mat> cov_blocks(K);
    for (int i = 0; i < K; ++i) cov_blocks[i] = scale(i) * Sigma_G;
    const Mat Sigma_NL = st.Sigma_N + block_diag(cov_blocks);
    out.nonlinear = symmetrize(H.transpose() * inverse_pd(Sigma_NL) * H +
                               half_prior_inv);

    // low-rank form of the gap: project through the nonlinearity channel so
    // the result is PSD by construction
    const int ma = st.m_aux;
    const int nn = st.n;
    Mat HF = Mat::Zero(K * ma, K * nn * ma);
    for (int i = 0; i < K; ++i) {
      const Vec h = nl->h_vec(x_attacked[i]);
      for (int c = 0; c < nn; ++c)
        HF.block(i * ma, (i * nn + c) * ma, ma, ma) =
            h(c) * Mat::Identity(ma, ma);
    }
    std::vector<Mat> ginv_blocks(K * nn, inverse_pd(Sigma_G));
    const Mat middle = block_diag(ginv_blocks) +
                       HF.transpose() * Ninv * HF;
    const Mat cross = HF.transpose() * Ninv * H;
    out.difference =
        symmetrize(cross.transpose() * inverse_pd(middle) * cross);
  }

  out.norm_linear = spectral_norm(out.linear);
  out.norm_nonlinear = spectral_norm(out.nonlinear);
  out.norm_difference = spectral_norm(out.difference);
  if (min_eigenvalue(out.difference) < -1e-9 * (1.0 + out.norm_difference))
    throw NumericError("information gap lost positive semidefiniteness");
  return out;
}

NonlinearDefenderFim defender_fim_nonlinear(
    const DefenderStacks& st, const NonlinearitySpec& nl,
    const std::vector<Mat>& Abar, const std::vector<Mat>& Cbar,
    const std::vector<Mat>& G, const std::vector<Vec>& x_attacked) {
  const int K = st.horizon + 1;
  const int n = st.n;
  if (static_cast<int>(G.size()) != K ||
      static_cast<int>(x_attacked.size()) < K)
    throw ModelError("one realized G and state per step is required");

  Vec slopes(K * n);
  for (int i = 0; i < K; ++i)
    slopes.segment(i * n, n) = nl.dh_vec(x_attacked[i]);

  const Mat H_G = block_diag(G);
  const Mat map = st.H_D * block_diag(Abar) + block_diag(Cbar) +
                  H_G * slopes.asDiagonal();
  const Mat Ninv = inverse_pd(st.Sigma_N);

  NonlinearDefenderFim out;
  out.report = make_report(map.transpose() * Ninv * map, st.horizon);

  const Mat omega_core = H_G.transpose() * Ninv * H_G;
  out.omega_g_trace =
      (slopes.asDiagonal() * omega_core * slopes.asDiagonal()).trace();

  const Mat Sg = nl.dist_G.cov + nl.dist_G.mean * nl.dist_G.mean.transpose();
  double expected = 0.0;
  for (int i = 0; i < K; ++i) {
    const Mat Sii = Ninv.block(i * st.m_aux, i * st.m_aux, st.m_aux, st.m_aux);
    const double per_column = (Sg * Sii).trace();
    expected += per_column * slopes.segment(i * n, n).squaredNorm();
  }
  out.omega_g_trace_expected = expected;
  return out;
}

}  // namespace mtd
