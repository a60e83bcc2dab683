#include "mtd/design_opt.hpp"

#include <nlohmann/json.hpp>

namespace mtd {
namespace {

using nlohmann::json;

/// One quadratic-form contribution of the bias at step s on the residue at
/// step i, split into the trace coefficient of the actuator covariance and
/// the constant remainder.
void accumulate_slot(const std::vector<StepMatrices>& steps,
                     const std::vector<Mat>& residue_cov, const Vec& mu_B,
                     int n_aux, int window_start, int s, int i,
                     double* trace_coeff, Mat* constant) {
  const StepMatrices& at_i = steps.at(static_cast<std::size_t>(i - window_start));
  const Mat D = bias_propagator(steps, window_start, s, i);
  const Mat CD = at_i.C * D;
  const int n_plant = static_cast<int>(CD.cols()) - n_aux;
  const Mat CDt = CD.leftCols(n_aux);
  const Mat CDb = CD.rightCols(n_plant);
  const Mat& Sigma = residue_cov.at(static_cast<std::size_t>(i - window_start));
  Eigen::LDLT<Mat> ldlt(symmetrize(Sigma));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericError("actuator design: residue covariance not PD");

  const Mat Wtt = CDt.transpose() * ldlt.solve(CDt);
  const Mat Wtb = CDt.transpose() * ldlt.solve(CDb);
  const Mat Wbb = CDb.transpose() * ldlt.solve(CDb);
  const Mat& B_plant = steps.at(static_cast<std::size_t>(s - window_start)).B;
  const Mat B_low = B_plant.bottomRows(n_plant);
  const int p = static_cast<int>(B_plant.cols());
  const Mat U = mu_B * Vec::Ones(n_aux).transpose();  // p x n_aux, columns mu

  *trace_coeff += 0.5 * Wtt.trace();
  const Mat cross = U * (Wtb * B_low);
  *constant += 0.5 * (entry_sum(Wtt) * mu_B * mu_B.transpose() + cross +
                      cross.transpose() +
                      B_low.transpose() * Wbb * B_low);
  (void)p;
}

DesignSolution extract_solution(const SdpProblem& sdp, const SdpResult& res,
                                double objective,
                                const SdpProblem::MatrixVar* v1,
                                const SdpProblem::MatrixVar* v2) {
  DesignSolution sol;
  sol.status = res.status;
  sol.slacks = res.block_slacks;
  sol.min_slack = res.min_slack;
  if (res.status != SdpStatus::Optimal) return sol;
  sol.objective = objective;
  if (v1) sol.Sigma1 = clip_psd(sdp.matrix_value(*v1, res.z));
  if (v2) sol.Sigma2 = clip_psd(sdp.matrix_value(*v2, res.z));
  return sol;
}

void check_bound(const Mat& b, const char* name) {
  if (!is_psd(b, 1e-9))
    throw NumericError(std::string(name) + " bound must be PSD");
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  const int r = static_cast<int>(j.size());
  if (r == 0) return Mat();
  const int c = static_cast<int>(j.at(0).size());
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

}  // namespace

ActuatorBlocks actuator_blocks_time_invariant(
    const std::vector<StepMatrices>& steps, const std::vector<Mat>& residue_cov,
    const Vec& mu_B, int n_aux, int j, int k) {
  if (static_cast<int>(steps.size()) != k - j + 1 ||
      residue_cov.size() != steps.size())
    throw NumericError("actuator design: window must cover steps j..k");
  const int T = k - j;
  ActuatorBlocks out;
  out.p = static_cast<int>(mu_B.size());
  out.trace_coeff.assign(T, 0.0);
  out.constant.assign(T, Mat::Zero(out.p, out.p));
  for (int t = 0; t < T; ++t) {
    const int s = j + t;
    for (int i = s + 1; i <= k; ++i)
      accumulate_slot(steps, residue_cov, mu_B, n_aux, j, s, i,
                      &out.trace_coeff[t], &out.constant[t]);
    out.constant[t] = symmetrize(out.constant[t]);
  }
  return out;
}

ActuatorBlocks actuator_blocks_per_step(const std::vector<StepMatrices>& steps,
                                        const std::vector<Mat>& residue_cov,
                                        const Vec& mu_B, int n_aux, int k,
                                        int T) {
  if (static_cast<int>(steps.size()) != T + 1 || residue_cov.size() != steps.size())
    throw NumericError("actuator design: window must cover steps k..k+T");
  ActuatorBlocks out;
  out.p = static_cast<int>(mu_B.size());
  out.trace_coeff.assign(T, 0.0);
  out.constant.assign(T, Mat::Zero(out.p, out.p));
  for (int t = 0; t < T; ++t) {
    for (int i = k + 1; i <= k + T - t; ++i)
      accumulate_slot(steps, residue_cov, mu_B, n_aux, k, k, i,
                      &out.trace_coeff[t], &out.constant[t]);
    out.constant[t] = symmetrize(out.constant[t]);
  }
  return out;
}

ActuatorProgram build_actuator_design(const ActuatorBlocks& blocks,
                                      const Mat& N_B,
                                      const std::vector<Mat>& N_t) {
  check_bound(N_B, "actuator cap");
  if (N_t.size() != blocks.trace_coeff.size())
    throw NumericError("actuator design: one floor matrix per window slot");
  const int p = blocks.p;
  if (N_B.rows() != p)
    throw NumericError("actuator design: cap dimension must match inputs");

  ActuatorProgram prog;
  prog.eps = prog.sdp.add_scalar();
  prog.sigma = prog.sdp.add_matrix_variable(p);

  // eps >= 0
  prog.sdp.add_block(Mat::Zero(1, 1), {{prog.eps, Mat::Ones(1, 1)}});
  // Sigma >= 0
  {
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma, 1.0, p);
    prog.sdp.add_block(Mat::Zero(p, p), std::move(terms));
  }
  // Sigma <= N_B
  {
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma, -1.0, p);
    prog.sdp.add_block(N_B, std::move(terms));
  }
  // floor constraints per window slot
  for (std::size_t t = 0; t < blocks.trace_coeff.size(); ++t) {
    check_bound(N_t[t], "actuator floor");
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma, blocks.trace_coeff[t], p);
    terms.push_back({prog.eps, Mat(-N_t[t])});
    prog.sdp.add_block(blocks.constant[t], std::move(terms));
  }

  Vec c = Vec::Zero(prog.sdp.num_vars());
  c(prog.eps) = 1.0;
  prog.sdp.set_objective(c);
  return prog;
}

DesignSolution solve_actuator_design(const ActuatorBlocks& blocks,
                                     const Mat& N_B,
                                     const std::vector<Mat>& N_t,
                                     const SdpOptions& opts) {
  ActuatorProgram prog = build_actuator_design(blocks, N_B, N_t);
  const SdpResult res = solve_sdp(prog.sdp, opts);
  return extract_solution(prog.sdp, res,
                          res.z.size() ? res.z(prog.eps) : 0.0, &prog.sigma,
                          nullptr);
}

CouplingProgram build_coupling_design(const InformationBlocks& blocks,
                                      const Vec& mu_A, const Vec& mu_C,
                                      const Mat& Theta_A, const Mat& Theta_C,
                                      const std::vector<Mat>& Theta_i) {
  check_bound(Theta_A, "coupling cap A");
  check_bound(Theta_C, "coupling cap C");
  if (Theta_i.size() != blocks.J.size())
    throw NumericError("coupling design: one floor matrix per horizon step");
  const int n = static_cast<int>(mu_A.size());

  CouplingProgram prog;
  prog.gamma = prog.sdp.add_scalar();
  prog.sigma_A = prog.sdp.add_matrix_variable(n);
  prog.sigma_C = prog.sdp.add_matrix_variable(n);

  prog.sdp.add_block(Mat::Zero(1, 1), {{prog.gamma, Mat::Ones(1, 1)}});
  for (const auto* v : {&prog.sigma_A, &prog.sigma_C}) {
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, *v, 1.0, n);
    prog.sdp.add_block(Mat::Zero(n, n), std::move(terms));
  }
  {
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma_A, -1.0, n);
    prog.sdp.add_block(Theta_A, std::move(terms));
  }
  {
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma_C, -1.0, n);
    prog.sdp.add_block(Theta_C, std::move(terms));
  }

  for (std::size_t i = 0; i < blocks.J.size(); ++i) {
    check_bound(Theta_i[i], "coupling floor");
    const Mat constant =
        entry_sum(blocks.J[i]) * mu_A * mu_A.transpose() +
        entry_sum(blocks.S[i]) * mu_C * mu_C.transpose() +
        entry_sum(blocks.F[i]) *
            (mu_A * mu_C.transpose() + mu_C * mu_A.transpose());
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma_A, blocks.J[i].trace(), n);
    SdpProblem::accumulate_matrix(&terms, prog.sigma_C, blocks.S[i].trace(), n);
    terms.push_back({prog.gamma, Mat(-Theta_i[i])});
    prog.sdp.add_block(symmetrize(constant), std::move(terms));
  }

  Vec c = Vec::Zero(prog.sdp.num_vars());
  c(prog.gamma) = 1.0;
  prog.sdp.set_objective(c);
  return prog;
}

DesignSolution solve_coupling_design(const InformationBlocks& blocks,
                                     const Vec& mu_A, const Vec& mu_C,
                                     const Mat& Theta_A, const Mat& Theta_C,
                                     const std::vector<Mat>& Theta_i,
                                     const SdpOptions& opts) {
  CouplingProgram prog =
      build_coupling_design(blocks, mu_A, mu_C, Theta_A, Theta_C, Theta_i);
  const SdpResult res = solve_sdp(prog.sdp, opts);
  return extract_solution(prog.sdp, res,
                          res.z.size() ? res.z(prog.gamma) : 0.0,
                          &prog.sigma_A, &prog.sigma_C);
}

NonlinearityProgram build_nonlinearity_design(const std::vector<Mat>& S_ii,
                                              const Vec& mu_G,
                                              const Mat& M_cal) {
  check_bound(M_cal, "nonlinearity cap");
  const int m = static_cast<int>(mu_G.size());
  NonlinearityProgram prog;
  prog.beta = prog.sdp.add_scalar();
  prog.sigma_G = prog.sdp.add_matrix_variable(m);

  prog.sdp.add_block(Mat::Zero(1, 1), {{prog.beta, Mat::Ones(1, 1)}});
  {
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma_G, 1.0, m);
    prog.sdp.add_block(Mat::Zero(m, m), std::move(terms));
  }
  {
    std::vector<SdpProblem::Term> terms;
    SdpProblem::accumulate_matrix(&terms, prog.sigma_G, -1.0, m);
    prog.sdp.add_block(M_cal, std::move(terms));
  }

  for (const Mat& S : S_ii) {
    if (!is_psd(S, 1e-7 * (1.0 + spectral_norm(S))))
      throw NumericError("nonlinearity design: S blocks must be PSD");
    // Tr(Sigma_G S) + mu' S mu - beta >= 0, a scalar constraint
    std::vector<SdpProblem::Term> terms;
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) {
        Mat coeff = Mat::Zero(1, 1);
        coeff(0, 0) = (a == b) ? S(a, a) : S(a, b) + S(b, a);
        terms.push_back({prog.sigma_G.index(a, b), coeff});
      }
    terms.push_back({prog.beta, -Mat::Ones(1, 1)});
    Mat constant = Mat::Zero(1, 1);
    constant(0, 0) = mu_G.dot(S * mu_G);
    prog.sdp.add_block(constant, std::move(terms));
  }

  Vec c = Vec::Zero(prog.sdp.num_vars());
  c(prog.beta) = 1.0;
  prog.sdp.set_objective(c);
  return prog;
}

DesignSolution solve_nonlinearity_design(const std::vector<Mat>& S_ii,
                                         const Vec& mu_G, const Mat& M_cal,
                                         const SdpOptions& opts) {
  NonlinearityProgram prog = build_nonlinearity_design(S_ii, mu_G, M_cal);
  const SdpResult res = solve_sdp(prog.sdp, opts);
  return extract_solution(prog.sdp, res,
                          res.z.size() ? res.z(prog.beta) : 0.0, &prog.sigma_G,
                          nullptr);
}

IidCouplingSolution baseline_iid_coupling(double gamma_star,
                                          const InformationBlocks& blocks,
                                          const Vec& mu_A, const Vec& mu_C,
                                          const Mat& Theta_A,
                                          const Mat& Theta_C,
                                          const std::vector<Mat>& Theta_i,
                                          const SdpOptions& opts) {
  const int n = static_cast<int>(mu_A.size());
  SdpProblem sdp;
  const int xi1 = sdp.add_scalar();
  const int xi2 = sdp.add_scalar();
  const Mat I = Mat::Identity(n, n);

  sdp.add_block(Mat::Zero(1, 1), {{xi1, Mat::Ones(1, 1)}});
  sdp.add_block(Mat::Zero(1, 1), {{xi2, Mat::Ones(1, 1)}});
  sdp.add_block(Theta_A, {{xi1, Mat(-I)}});
  sdp.add_block(Theta_C, {{xi2, Mat(-I)}});
  for (std::size_t i = 0; i < blocks.J.size(); ++i) {
    const Mat constant =
        entry_sum(blocks.J[i]) * mu_A * mu_A.transpose() +
        entry_sum(blocks.S[i]) * mu_C * mu_C.transpose() +
        entry_sum(blocks.F[i]) *
            (mu_A * mu_C.transpose() + mu_C * mu_A.transpose()) -
        gamma_star * Theta_i[i];
    sdp.add_block(symmetrize(constant),
                  {{xi1, Mat(blocks.J[i].trace() * I)},
                   {xi2, Mat(blocks.S[i].trace() * I)}});
  }
  Vec c = Vec::Zero(sdp.num_vars());
  c(xi1) = 1.0;
  c(xi2) = 1.0;
  sdp.set_objective(c);

  const SdpResult res = solve_sdp(sdp, opts);
  IidCouplingSolution sol;
  sol.status = res.status;
  sol.slacks = res.block_slacks;
  if (res.status == SdpStatus::Optimal) {
    sol.xi1 = res.z(xi1);
    sol.xi2 = res.z(xi2);
  }
  return sol;
}

double baseline_iid_nonlinearity(const Mat& M_cal) {
  check_bound(M_cal, "nonlinearity cap");
  return std::max(0.0, min_eigenvalue(M_cal));
}

std::string design_solution_to_json(const DesignSolution& sol,
                                    const std::string& kind) {
  json j;
  j["kind"] = kind;
  j["status"] = to_string(sol.status);
  j["objective"] = sol.objective;
  j["sigma1"] = mat_to_json(sol.Sigma1);
  j["sigma2"] = mat_to_json(sol.Sigma2);
  j["slacks"] = sol.slacks;
  j["min_slack"] = sol.min_slack;
  return j.dump(2);
}

DesignSolution design_solution_from_json(const std::string& text,
                                         std::string* kind) {
  const json j = json::parse(text);
  DesignSolution sol;
  if (kind) *kind = j.value("kind", "");
  const std::string status = j.value("status", "numerical_failure");
  if (status == "optimal")
    sol.status = SdpStatus::Optimal;
  else if (status == "infeasible")
    sol.status = SdpStatus::Infeasible;
  else if (status == "unbounded")
    sol.status = SdpStatus::Unbounded;
  sol.objective = j.value("objective", 0.0);
  sol.Sigma1 = mat_from_json(j.at("sigma1"));
  sol.Sigma2 = mat_from_json(j.at("sigma2"));
  sol.slacks = j.value("slacks", std::vector<double>{});
  sol.min_slack = j.value("min_slack", 0.0);
  return sol;
}

}  // namespace mtd
