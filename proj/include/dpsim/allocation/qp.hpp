#pragma once

#include <Eigen/Dense>

#include "dpsim/common.hpp"

namespace dpsim::alloc
{

DPSIM_DEFINE_ERROR(QpError);

/// min 1/2 x'Hx + f'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
/// H symmetric positive semidefinite, positive definite on the null space
/// of the constraints that end up active.
struct QpProblem
{
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;

  [[nodiscard]] Eigen::Index size() const { return H.rows(); }
  [[nodiscard]] double objective(const Eigen::VectorXd & x) const { return 0.5 * x.dot(H * x) + f.dot(x); }

  /// Largest constraint violation at x (0 when feasible).
  [[nodiscard]] double violation(const Eigen::VectorXd & x) const;

  /// Adds lo <= x_i <= hi rows (infinite bounds are skipped).
  void add_bounds(const Eigen::VectorXd & lo, const Eigen::VectorXd & hi);
};

struct QpResult
{
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers_in;  // >= 0 at a KKT point, 0 for inactive rows
  int iterations{0};
  bool optimal{false};
};

struct QpOptions
{
  int max_iterations{200};
  double tolerance{1e-9};  // relative, on steps, multipliers and feasibility
};

/// Primal active-set method started from a feasible point x0. Throws QpError
/// if x0 is infeasible or the dimensions disagree.
[[nodiscard]] QpResult solve_qp(const QpProblem & problem, const Eigen::VectorXd & x0, const QpOptions & options = {});

}  // namespace dpsim::alloc
