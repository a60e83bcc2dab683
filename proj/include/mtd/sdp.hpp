#pragma once

#include <string>
#include <vector>

#include "mtd/numeric.hpp"

namespace mtd {

/// Small dense semidefinite program in inequality form:
///
///   maximize   c' z
///   subject to F0_b + sum_i z_i F_{b,i}  >= 0   for every block b.
///
/// Symmetric matrix variables are encoded through add_matrix_variable, which
/// reserves one scalar per upper-triangle entry.
class SdpProblem {
 public:
  struct Term {
    int var = 0;
    Mat F;
  };
  struct Block {
    Mat F0;
    std::vector<Term> terms;
  };

  /// Handle to a symmetric matrix variable: entry (i, j) lives at scalar
  /// index `index(i, j)`.
  struct MatrixVar {
    int offset = 0;
    int dim = 0;
    int index(int i, int j) const {
      if (i > j) std::swap(i, j);
      return offset + i * dim - i * (i - 1) / 2 + (j - i);
    }
    int count() const { return dim * (dim + 1) / 2; }
  };

  int add_scalar();
  MatrixVar add_matrix_variable(int dim);

  /// Adds the constraint F0 + sum z_i F_i >= 0.
  void add_block(Mat F0, std::vector<Term> terms);

  /// Convenience: adds `sign * X` (as a matrix variable) into a block being
  /// assembled; returns the term list contribution.
  static void accumulate_matrix(std::vector<Term>* terms, const MatrixVar& v,
                                double sign, int dim);

  int num_vars() const { return num_vars_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  void set_objective(Vec c) { c_ = std::move(c); }
  const Vec& objective() const { return c_; }

  /// Evaluates one constraint block at z.
  Mat block_value(const Block& b, const Vec& z) const;

  /// Extracts a matrix variable value from the decision vector.
  Mat matrix_value(const MatrixVar& v, const Vec& z) const;

 private:
  int num_vars_ = 0;
  std::vector<Block> blocks_;
  Vec c_;
};

enum class SdpStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string to_string(SdpStatus s);

struct SdpResult {
  SdpStatus status = SdpStatus::NumericalFailure;
  Vec z;
  double objective = 0.0;
  /// Smallest eigenvalue of each constraint block at the solution.
  std::vector<double> block_slacks;
  double min_slack = 0.0;
  int iterations = 0;
};

struct SdpOptions {
  double tol = 1e-8;            // duality-gap style stopping measure
  double feasibility_relax = 1e-9;  // slack granted to weakly feasible problems
  int max_newton_iters = 400;
  double unbounded_norm = 1e9;
};

/// Log-barrier interior-point solve. Phase I searches for a strictly
/// feasible point (relaxing degenerate problems by `feasibility_relax`);
/// phase II follows the central path on the objective.
SdpResult solve_sdp(const SdpProblem& p, const SdpOptions& opts = {});

}  // namespace mtd
