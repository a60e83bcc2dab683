#include "mtd/sdp.hpp"

#include <algorithm>
#include <cmath>

namespace mtd {

int SdpProblem::add_scalar() { return num_vars_++; }

SdpProblem::MatrixVar SdpProblem::add_matrix_variable(int dim) {
  MatrixVar v;
  v.offset = num_vars_;
  v.dim = dim;
  num_vars_ += v.count();
  return v;
}

void SdpProblem::add_block(Mat F0, std::vector<Term> terms) {
  Block b;
  b.F0 = symmetrize(F0);
  for (Term& t : terms) t.F = symmetrize(t.F);
  b.terms = std::move(terms);
  blocks_.push_back(std::move(b));
}

void SdpProblem::accumulate_matrix(std::vector<Term>* terms,
                                   const MatrixVar& v, double sign, int dim) {
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      Mat e = Mat::Zero(dim, dim);
      e(i, j) = sign;
      e(j, i) = sign;
      terms->push_back({v.index(i, j), e});
    }
  }
}

Mat SdpProblem::block_value(const Block& b, const Vec& z) const {
  Mat m = b.F0;
  for (const Term& t : b.terms) m += z(t.var) * t.F;
  return m;
}

Mat SdpProblem::matrix_value(const MatrixVar& v, const Vec& z) const {
  Mat m(v.dim, v.dim);
  for (int i = 0; i < v.dim; ++i)
    for (int j = i; j < v.dim; ++j) {
      m(i, j) = z(v.index(i, j));
      m(j, i) = m(i, j);
    }
  return m;
}

std::string to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal: return "optimal";
    case SdpStatus::Infeasible: return "infeasible";
    case SdpStatus::Unbounded: return "unbounded";
    case SdpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

struct WorkBlock {
  Mat F0;
  const std::vector<SdpProblem::Term>* terms;
};

Mat eval_block(const WorkBlock& b, const Vec& z) {
  Mat m = b.F0;
  for (const auto& t : *b.terms) m += z(t.var) * t.F;
  return m;
}

bool strictly_feasible(const std::vector<WorkBlock>& blocks, const Vec& z) {
  for (const auto& b : blocks) {
    Eigen::LLT<Mat> llt(eval_block(b, z));
    if (llt.info() != Eigen::Success) return false;
  }
  return true;
}

double barrier_value(const std::vector<WorkBlock>& blocks, const Vec& z) {
  double phi = 0.0;
  for (const auto& b : blocks) {
    Eigen::LLT<Mat> llt(eval_block(b, z));
    if (llt.info() != Eigen::Success)
      return std::numeric_limits<double>::infinity();
    for (int i = 0; i < b.F0.rows(); ++i)
      phi -= 2.0 * std::log(llt.matrixL()(i, i));
  }
  return phi;
}

struct CenterResult {
  bool ok = false;
  bool diverged = false;
  int iters = 0;
};

/// Damped-Newton minimization of t * (-c'z) + barrier(z), in place.
CenterResult center(const std::vector<WorkBlock>& blocks, const Vec& c,
                    double t, Vec* z, int max_iters, double unbounded_norm,
                    int* newton_budget) {
  const int d = static_cast<int>(z->size());
  CenterResult res;
  for (int it = 0; it < max_iters && *newton_budget > 0; ++it) {
    --*newton_budget;
    ++res.iters;
    Vec grad = -t * c;
    Mat hess = Mat::Zero(d, d);
    for (const auto& b : blocks) {
      Eigen::LLT<Mat> llt(eval_block(b, *z));
      if (llt.info() != Eigen::Success) return res;
      const int nb = static_cast<int>(b.F0.rows());
      const Mat inv = llt.solve(Mat::Identity(nb, nb));
      std::vector<Mat> w(b.terms->size());
      for (std::size_t i = 0; i < b.terms->size(); ++i) {
        w[i] = inv * (*b.terms)[i].F;
        grad((*b.terms)[i].var) -= w[i].trace();
      }
      for (std::size_t i = 0; i < b.terms->size(); ++i)
        for (std::size_t j = i; j < b.terms->size(); ++j) {
          const double hij =
              w[i].transpose().cwiseProduct(w[j]).sum();
          const int vi = (*b.terms)[i].var;
          const int vj = (*b.terms)[j].var;
          hess(vi, vj) += hij;
          if (vi != vj) hess(vj, vi) += hij;
        }
    }
    const double ridge = 1e-12 * std::max(1.0, hess.trace() / d);
    hess.diagonal().array() += ridge;
    Eigen::LDLT<Mat> hld(hess);
    if (hld.info() != Eigen::Success) return res;
    const Vec step = -hld.solve(grad);
    const double decrement = -0.5 * grad.dot(step);
    if (!std::isfinite(decrement)) return res;
    if (decrement < 1e-10 * (1.0 + std::abs(t * c.dot(*z)))) {
      res.ok = true;
      return res;
    }

    const double f0 = -t * c.dot(*z) + barrier_value(blocks, *z);
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vec cand = *z + alpha * step;
      if (strictly_feasible(blocks, cand)) {
        const double f1 = -t * c.dot(cand) + barrier_value(blocks, cand);
        if (f1 <= f0 - 1e-4 * alpha * (-grad.dot(step))) {
          *z = cand;
          moved = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!moved) {
      res.ok = true;  // stuck at numerical precision; accept current point
      return res;
    }
    if (z->norm() > unbounded_norm) {
      res.diverged = true;
      return res;
    }
  }
  res.ok = true;
  return res;
}

}  // namespace

SdpResult solve_sdp(const SdpProblem& p, const SdpOptions& opts) {
  SdpResult out;
  const int d = p.num_vars();
  if (p.objective().size() != d)
    throw NumericError("solve_sdp: objective dimension mismatch");

  int total_rows = 0;
  for (const auto& b : p.blocks()) total_rows += static_cast<int>(b.F0.rows());
  if (total_rows == 0 || d == 0) {
    out.status = SdpStatus::NumericalFailure;
    return out;
  }

  int newton_budget = opts.max_newton_iters * 12;

  double relax = opts.feasibility_relax;
  Vec z_feasible;
  bool have_interior = false;
  for (int attempt = 0; attempt < 2 && !have_interior; ++attempt) {
    // phase I over (z, s): maximize -s subject to A_b(z) + relax*I + s*I >= 0
    std::vector<Mat> shifted;
    std::vector<std::vector<SdpProblem::Term>> aug_terms;
    shifted.reserve(p.blocks().size());
    aug_terms.reserve(p.blocks().size());
    std::vector<WorkBlock> blocks;
    for (const auto& b : p.blocks()) {
      const int nb = static_cast<int>(b.F0.rows());
      shifted.push_back(b.F0 + relax * Mat::Identity(nb, nb));
      auto terms = b.terms;
      SdpProblem::Term slack;
      slack.var = d;
      slack.F = Mat::Identity(nb, nb);
      terms.push_back(slack);
      aug_terms.push_back(std::move(terms));
    }
    for (std::size_t i = 0; i < shifted.size(); ++i)
      blocks.push_back({shifted[i], &aug_terms[i]});

    Vec z = Vec::Zero(d + 1);
    double worst = 0.0;
    for (const auto& b : p.blocks())
      worst = std::max(worst, -min_eigenvalue(b.F0));
    z(d) = worst + 1.0;
    Vec c = Vec::Zero(d + 1);
    c(d) = -1.0;

    double t = 1.0;
    for (int outer = 0; outer < 40; ++outer) {
      const CenterResult cr = center(blocks, c, t, &z, 50,
                                     opts.unbounded_norm, &newton_budget);
      out.iterations += cr.iters;
      if (!cr.ok && !cr.diverged) break;
      const double s = z(d);
      if (s < -0.5 * relax) {
        have_interior = true;
        z_feasible = z.head(d);
        break;
      }
      const double gap = total_rows / t;
      if (s - gap > 0.25 * relax) {
        out.status = SdpStatus::Infeasible;
        return out;
      }
      if (gap < 1e-3 * relax || newton_budget <= 0) break;
      t *= 20.0;
    }
    if (!have_interior) relax = std::max(relax * 1e3, 1e-7);
  }

  if (!have_interior) {
    out.status = SdpStatus::Infeasible;
    return out;
  }

  // phase II on the relaxed problem from the interior point
  std::vector<Mat> shifted2;
  std::vector<WorkBlock> blocks2;
  shifted2.reserve(p.blocks().size());
  for (const auto& b : p.blocks()) {
    const int nb = static_cast<int>(b.F0.rows());
    shifted2.push_back(b.F0 + relax * Mat::Identity(nb, nb));
  }
  for (std::size_t i = 0; i < shifted2.size(); ++i)
    blocks2.push_back({shifted2[i], &p.blocks()[i].terms});

  Vec z = z_feasible;
  double t = 1.0 / std::max(1.0, std::abs(p.objective().dot(z)));
  for (int outer = 0; outer < 60; ++outer) {
    const CenterResult cr = center(blocks2, p.objective(), t, &z, 60,
                                   opts.unbounded_norm, &newton_budget);
    out.iterations += cr.iters;
    if (cr.diverged) {
      out.status = SdpStatus::Unbounded;
      out.z = z;
      out.objective = p.objective().dot(z);
      return out;
    }
    if (!cr.ok) {
      out.status = SdpStatus::NumericalFailure;
      out.z = z;
      return out;
    }
    const double gap = total_rows / t;
    if (gap < opts.tol * std::max(1.0, std::abs(p.objective().dot(z)))) break;
    if (newton_budget <= 0) break;
    t *= 20.0;
  }

  out.status = SdpStatus::Optimal;
  out.z = z;
  out.objective = p.objective().dot(z);
  out.block_slacks.clear();
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& b : p.blocks()) {
    const double s = min_eigenvalue(p.block_value(b, z));
    out.block_slacks.push_back(s);
    worst = std::min(worst, s);
  }
  out.min_slack = worst;
  return out;
}

}  // namespace mtd
