#include "dpsim/allocation/qp.hpp"

#include <algorithm>
#include <vector>

#include <fmt/format.h>

namespace dpsim::alloc
{

double QpProblem::violation(const Eigen::VectorXd & x) const
{
  double v = 0.0;
  if (A_eq.rows() > 0) {
    v = std::max(v, (A_eq * x - b_eq).cwiseAbs().maxCoeff());
  }
  if (A_in.rows() > 0) {
    v = std::max(v, (A_in * x - b_in).maxCoeff());
  }
  return v;
}

void QpProblem::add_bounds(const Eigen::VectorXd & lo, const Eigen::VectorXd & hi)
{
  const Eigen::Index n = size();
  std::vector<Eigen::Index> vars;
  std::vector<double> signs, bounds;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(hi(i))) {
      vars.push_back(i);
      signs.push_back(1.0);
      bounds.push_back(hi(i));
    }
    if (std::isfinite(lo(i))) {
      vars.push_back(i);
      signs.push_back(-1.0);
      bounds.push_back(-lo(i));
    }
  }
  const Eigen::Index old = A_in.rows();
  const auto extra = static_cast<Eigen::Index>(vars.size());
  Eigen::MatrixXd a(old + extra, n);
  Eigen::VectorXd b(old + extra);
  if (old > 0) {
    a.topRows(old) = A_in;
    b.head(old) = b_in;
  }
  a.bottomRows(extra).setZero();
  for (Eigen::Index r = 0; r < extra; ++r) {
    a(old + r, vars[static_cast<std::size_t>(r)]) = signs[static_cast<std::size_t>(r)];
    b(old + r) = bounds[static_cast<std::size_t>(r)];
  }
  A_in = std::move(a);
  b_in = std::move(b);
}

QpResult solve_qp(const QpProblem & p, const Eigen::VectorXd & x0, const QpOptions & options)
{
  const Eigen::Index n = p.size();
  const Eigen::Index me = p.A_eq.rows(), mi = p.A_in.rows();
  if (p.H.cols() != n || p.f.size() != n || x0.size() != n || (me > 0 && p.A_eq.cols() != n) ||
      p.b_eq.size() != me || (mi > 0 && p.A_in.cols() != n) || p.b_in.size() != mi) {
    throw QpError("QP dimensions disagree");
  }
  const double b_scale = 1.0 + std::max(me > 0 ? p.b_eq.cwiseAbs().maxCoeff() : 0.0,
                                        mi > 0 ? p.b_in.cwiseAbs().maxCoeff() : 0.0);
  if (p.violation(x0) > 1e-7 * b_scale) {
    throw QpError(fmt::format("QP start point is infeasible (violation {:.3g})", p.violation(x0)));
  }

  QpResult res;
  res.x = x0;
  res.multipliers_in = Eigen::VectorXd::Zero(mi);
  std::vector<Eigen::Index> working;
  std::vector<char> in_working(static_cast<std::size_t>(mi), 0);
  const double tol = options.tolerance;
  Eigen::Index dropped = -1;

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    const Eigen::VectorXd g = p.H * res.x + p.f;
    const auto mw = static_cast<Eigen::Index>(working.size());
    const Eigen::Index m = me + mw;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = p.H;
    Eigen::MatrixXd a(m, n);
    if (me > 0) {
      a.topRows(me) = p.A_eq;
    }
    for (Eigen::Index k = 0; k < mw; ++k) {
      a.row(me + k) = p.A_in.row(working[static_cast<std::size_t>(k)]);
    }
    kkt.topRightCorner(n, m) = a.transpose();
    kkt.bottomLeftCorner(m, n) = a;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
    rhs.head(n) = -g;
    // Full-pivot LU plus one refinement pass: the slack weights make the KKT
    // matrix badly scaled. Falls back to the minimum-norm solution when the
    // working set is degenerate.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    Eigen::VectorXd sol;
    if (lu.isInvertible()) {
      sol = lu.solve(rhs);
      sol += lu.solve(rhs - kkt * sol);
    } else {
      sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    }
    const Eigen::VectorXd step = sol.head(n);

    // At a vertex (n independent active rows) the step is zero by
    // construction; anything left is rounding.
    if (m >= n || step.norm() <= tol * (1.0 + res.x.norm())) {
      // Stationary on the working set: check the inequality multipliers.
      Eigen::Index worst = -1;
      double worst_mu = -tol * (1.0 + g.norm());
      for (Eigen::Index k = 0; k < mw; ++k) {
        const double mu = sol(n + me + k);
        if (mu < worst_mu) {
          worst_mu = mu;
          worst = k;
        }
      }
      if (worst < 0) {
        for (Eigen::Index k = 0; k < mw; ++k) {
          res.multipliers_in(working[static_cast<std::size_t>(k)]) = std::max(0.0, sol(n + me + k));
        }
        res.optimal = true;
        return res;
      }
      dropped = working[static_cast<std::size_t>(worst)];
      in_working[static_cast<std::size_t>(dropped)] = 0;
      working.erase(working.begin() + worst);
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < mi; ++i) {
      // The step after a drop moves off that constraint; skipping it guards
      // against re-adding it on rounding noise.
      if (in_working[static_cast<std::size_t>(i)] || i == dropped) {
        continue;
      }
      const double ap = p.A_in.row(i).dot(step);
      if (ap > tol * p.A_in.row(i).norm() * step.norm()) {
        const double t = std::max(0.0, (p.b_in(i) - p.A_in.row(i).dot(res.x)) / ap);
        if (t < alpha) {
          alpha = t;
          blocking = i;
        }
      }
    }
    dropped = -1;
    res.x += alpha * step;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = 1;
    }
  }
  return res;
}

}  // namespace dpsim::alloc
