#include "clusterscope/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clusterscope/error.hpp"

namespace clusterscope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

ConstraintSet ConstraintSet::none(Eigen::Index dims) {
  ConstraintSet c;
  c.C = Matrix(0, dims);
  c.d = Vector(0);
  c.lb = Vector::Constant(dims, -kInf);
  c.ub = Vector::Constant(dims, kInf);
  return c;
}

bool ConstraintSet::empty() const {
  return C.rows() == 0 && (lb.array() == -kInf).all() && (ub.array() == kInf).all();
}

void ConstraintSet::validate() const {
  const Eigen::Index n = lb.size();
  if (ub.size() != n) throw Error(ErrorCode::Dimension, "bound vectors differ in length");
  if (C.rows() > 0 && C.cols() != n)
    throw Error(ErrorCode::Dimension, "equality matrix has " + std::to_string(C.cols()) + " columns, expected " +
                                          std::to_string(n));
  if (C.rows() != d.size()) throw Error(ErrorCode::Dimension, "equality right-hand side length mismatch");
  if (C.rows() > n) throw Error(ErrorCode::Validation, "more equality constraints than variables");
  if (!C.allFinite() || !d.allFinite()) throw Error(ErrorCode::Numeric, "equality constraints must be finite");
  if (lb.array().isNaN().any() || ub.array().isNaN().any())
    throw Error(ErrorCode::Numeric, "bounds must not be NaN");
  if (C.rows() > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(C.transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < C.rows()) throw Error(ErrorCode::Validation, "equality constraints are linearly dependent");
  }
}

const char* to_string(QPStatus s) noexcept {
  switch (s) {
    case QPStatus::Optimal: return "optimal";
    case QPStatus::Infeasible: return "infeasible";
    case QPStatus::MaxIter: return "max_iter";
  }
  return "?";
}

double bp_objective(const Matrix& E, const Vector2& delta_y, double lambda, const Vector& x) {
  return (E.transpose() * x - delta_y).squaredNorm() + lambda * x.squaredNorm();
}

double check_kkt(const Matrix& E, const Vector2& delta_y, const ConstraintSet& cons, double lambda, const Vector& x) {
  const Eigen::Index n = x.size();
  if (E.rows() != n || E.cols() != 2 || cons.lb.size() != n)
    throw Error(ErrorCode::Dimension, "KKT check shapes are inconsistent");

  double primal = 0.0;
  if (cons.C.rows() > 0) primal = (cons.C * x - cons.d).cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    primal = std::max(primal, cons.lb(i) - x(i));
    primal = std::max(primal, x(i) - cons.ub(i));
  }

  const Vector grad = 2.0 * (E * (E.transpose() * x - delta_y)) + 2.0 * lambda * x;

  std::vector<Eigen::Index> active;
  std::vector<int> side;  // -1 lower, +1 upper, 2 both
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool lo = std::isfinite(cons.lb(i)) && std::abs(x(i) - cons.lb(i)) <= 1e-9 * std::max(1.0, std::abs(cons.lb(i)));
    const bool hi = std::isfinite(cons.ub(i)) && std::abs(x(i) - cons.ub(i)) <= 1e-9 * std::max(1.0, std::abs(cons.ub(i)));
    if (lo || hi) {
      active.push_back(i);
      side.push_back(lo && hi ? 2 : (lo ? -1 : 1));
    }
  }

  const Eigen::Index m = cons.C.rows();
  const auto q = static_cast<Eigen::Index>(active.size());
  double stationarity = grad.cwiseAbs().maxCoeff();
  double sign = 0.0;
  if (m + q > 0) {
    Matrix A = Matrix::Zero(n, m + q);
    if (m > 0) A.leftCols(m) = cons.C.transpose();
    for (Eigen::Index k = 0; k < q; ++k) A(active[static_cast<std::size_t>(k)], m + k) = 1.0;
    const Vector w = A.completeOrthogonalDecomposition().solve(grad);
    stationarity = (grad - A * w).cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < q; ++k) {
      const double mu = w(m + k);
      const int s = side[static_cast<std::size_t>(k)];
      if (s == -1) sign = std::max(sign, -mu);
      if (s == 1) sign = std::max(sign, mu);
    }
  }
  return std::max({stationarity, primal, sign});
}

QPSolution solve_bp_qp(const Matrix& E, const Vector2& delta_y, const ConstraintSet& cons, const QPOptions& options) {
  const Eigen::Index n = E.rows();
  if (E.cols() != 2) throw Error(ErrorCode::Dimension, "projection basis must have two columns");
  if (cons.dims() != n)
    throw Error(ErrorCode::Dimension, "constraints cover " + std::to_string(cons.dims()) + " features, basis has " +
                                          std::to_string(n));
  if (!(options.lambda > 0.0) || !std::isfinite(options.lambda))
    throw Error(ErrorCode::Parameter, "regularization weight must be positive");
  if (!E.allFinite() || !delta_y.allFinite()) throw Error(ErrorCode::Numeric, "non-finite problem data");
  cons.validate();

  const double lambda = options.lambda;
  const std::size_t max_iter = options.max_iter ? options.max_iter : static_cast<std::size_t>(100 * std::max<Eigen::Index>(n, 1));

  QPSolution sol;
  sol.active.assign(static_cast<std::size_t>(n), 0);
  auto finish = [&](Vector x, QPStatus status) {
    if (status == QPStatus::Optimal) {
      // Remove rounding-level bound violations left by the active-set steps.
      for (Eigen::Index i = 0; i < n; ++i) {
        x(i) = std::clamp(x(i), cons.lb(i), cons.ub(i));
        const double tol_lo = 1e-9 * std::max(1.0, std::abs(cons.lb(i)));
        const double tol_hi = 1e-9 * std::max(1.0, std::abs(cons.ub(i)));
        if (std::isfinite(cons.lb(i)) && x(i) - cons.lb(i) <= tol_lo) sol.active[static_cast<std::size_t>(i)] = -1;
        if (std::isfinite(cons.ub(i)) && cons.ub(i) - x(i) <= tol_hi) sol.active[static_cast<std::size_t>(i)] = 1;
      }
    }
    sol.delta_x = std::move(x);
    sol.status = status;
    sol.residual = (E.transpose() * sol.delta_x - delta_y).squaredNorm();
    sol.objective = sol.residual + lambda * sol.delta_x.squaredNorm();
    sol.kkt_residual = check_kkt(E, delta_y, cons, lambda, sol.delta_x);
    return sol;
  };

  for (Eigen::Index i = 0; i < n; ++i)
    if (cons.lb(i) > cons.ub(i)) return finish(Vector::Zero(n), QPStatus::Infeasible);

  // Null-space parameterization x = xp + Z z of the equalities.
  const Eigen::Index m = cons.C.rows();
  Vector xp = Vector::Zero(n);
  Matrix Z = Matrix::Identity(n, n);
  if (m > 0) {
    const Matrix Ct = cons.C.transpose();
    xp = Ct * (cons.C * Ct).ldlt().solve(cons.d);
    Eigen::HouseholderQR<Matrix> qr(Ct);
    const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
    Z = Q.rightCols(n - m);
  }
  const Eigen::Index r = Z.cols();

  // Reduced objective 0.5 z'Hz + h'z.
  const Matrix G = 2.0 * (E * E.transpose() + lambda * Matrix::Identity(n, n));
  const Vector g0 = G * xp - 2.0 * E * delta_y;

  // Bound rows a'z >= b.
  Matrix A(r, 2 * n);
  Vector b(2 * n);
  Eigen::Index rows = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int s : {-1, 1}) {
      const double bound = s < 0 ? cons.lb(i) : cons.ub(i);
      if (!std::isfinite(bound)) continue;
      const Vector a = s < 0 ? Vector(Z.row(i).transpose()) : Vector(-Z.row(i).transpose());
      const double rhs = s < 0 ? bound - xp(i) : xp(i) - bound;
      if (a.norm() <= 1e-12) {
        // Coordinate fixed by the equalities.
        if (rhs > 1e-9 * std::max(1.0, std::abs(bound))) return finish(xp, QPStatus::Infeasible);
        continue;
      }
      A.col(rows) = a;
      b(rows) = rhs;
      ++rows;
    }
  }
  A.conservativeResize(r, rows);
  b.conservativeResize(rows);

  if (r == 0) return finish(xp, QPStatus::Optimal);

  const Matrix H = Z.transpose() * G * Z;
  const Vector h = Z.transpose() * g0;
  Eigen::LLT<Matrix> llt(H);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::Numeric, "reduced Hessian is not positive definite");
  const Matrix Hinv = llt.solve(Matrix::Identity(r, r));

  Vector z = -Hinv * h;
  std::vector<Eigen::Index> working;  // active constraint columns of A
  Vector u(0);                        // their multipliers
  std::size_t iter = 0;

  auto slack = [&](Eigen::Index j) { return A.col(j).dot(z) - b(j); };
  auto tolerance = [&](Eigen::Index j) { return 1e-11 * std::max(1.0, std::abs(b(j))); };
  auto point = [&]() -> Vector { return xp + Z * z; };

  for (;;) {
    Eigen::Index p = -1;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < rows; ++j) {
      if (std::find(working.begin(), working.end(), j) != working.end()) continue;
      const double s = slack(j);
      if (s < -tolerance(j) && s < worst) {
        worst = s;
        p = j;
      }
    }
    if (p < 0) break;

    const auto q0 = static_cast<Eigen::Index>(working.size());
    Vector u_plus(q0 + 1);
    u_plus.head(q0) = u;
    u_plus(q0) = 0.0;

    for (;;) {
      if (++iter > max_iter) {
        sol.iterations = iter;
        return finish(point(), QPStatus::MaxIter);
      }
      const auto q = static_cast<Eigen::Index>(working.size());
      const Vector ap = A.col(p);
      Vector step = Hinv * ap;
      Vector rvec(q);
      if (q > 0) {
        Matrix N(r, q);
        for (Eigen::Index k = 0; k < q; ++k) N.col(k) = A.col(working[static_cast<std::size_t>(k)]);
        const Matrix HN = Hinv * N;
        const Matrix M = N.transpose() * HN;
        rvec = M.ldlt().solve(HN.transpose() * ap);
        step -= HN * rvec;
      }

      // Partial step: largest move keeping the working multipliers non-negative.
      double t1 = kInf;
      Eigen::Index drop = -1;
      for (Eigen::Index k = 0; k < q; ++k) {
        if (rvec(k) > 0.0) {
          const double t = u_plus(k) / rvec(k);
          if (t < t1) {
            t1 = t;
            drop = k;
          }
        }
      }
      // Full step: makes constraint p tight.
      const double curvature = step.dot(ap);
      const double scale = ap.dot(Hinv * ap);
      const double t2 = curvature <= 1e-14 * scale ? kInf : -slack(p) / curvature;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        sol.iterations = iter;
        return finish(point(), QPStatus::Infeasible);
      }

      if (q > 0) u_plus.head(q) -= t * rvec;
      u_plus(q) += t;
      if (std::isfinite(t2)) z += t * step;

      if (t == t2) {
        working.push_back(p);
        u = u_plus;
        break;
      }
      // Drop the blocking constraint and retry with p still pending.
      working.erase(working.begin() + drop);
      Vector shrunk(u_plus.size() - 1);
      shrunk << u_plus.head(drop), u_plus.tail(u_plus.size() - drop - 1);
      u_plus = shrunk;
    }
  }

  sol.iterations = iter;
  return finish(point(), QPStatus::Optimal);
}

}  // namespace clusterscope
