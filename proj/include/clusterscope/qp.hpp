#pragma once

#include <cstddef>
#include <vector>

#include "clusterscope/types.hpp"

namespace clusterscope {

// Equalities C x = d and box bounds lb <= x <= ub. Infinite bounds are absent
// constraints.
struct ConstraintSet {
  Matrix C;  // m x dims
  Vector d;
  Vector lb;
  Vector ub;

  static ConstraintSet none(Eigen::Index dims);

  Eigen::Index dims() const noexcept { return lb.size(); }
  bool empty() const;

  // Throws Dimension on inconsistent shapes and Validation when m > dims or
  // the rows of C are linearly dependent (rank tolerance 1e-10).
  void validate() const;
};

enum class QPStatus { Optimal, Infeasible, MaxIter };

const char* to_string(QPStatus s) noexcept;

struct QPSolution {
  Vector delta_x;
  double objective = 0.0;  // |x E - dy|^2 + lambda |x|^2
  double residual = 0.0;   // |x E - dy|^2
  double kkt_residual = 0.0;
  QPStatus status = QPStatus::Optimal;
  std::size_t iterations = 0;
  // Per coordinate: -1 at lower bound, +1 at upper bound, 0 free.
  std::vector<int> active;
};

struct QPOptions {
  double lambda = 1e-6;
  std::size_t max_iter = 0;  // 0 means 100 * dims
};

// minimize |x E - dy|^2 + lambda |x|^2  s.t.  C x = d,  lb <= x <= ub
//
// Equalities are eliminated through a null-space basis of C; the reduced,
// strictly convex problem is solved with a dual active-set iteration over
// the bound constraints, which also certifies infeasibility.
QPSolution solve_bp_qp(const Matrix& E, const Vector2& delta_y, const ConstraintSet& cons,
                       const QPOptions& options = {});

// Max of the stationarity residual, the primal violation and the
// multiplier-sign violation at x.
double check_kkt(const Matrix& E, const Vector2& delta_y, const ConstraintSet& cons, double lambda, const Vector& x);

double bp_objective(const Matrix& E, const Vector2& delta_y, double lambda, const Vector& x);

}  // namespace clusterscope
