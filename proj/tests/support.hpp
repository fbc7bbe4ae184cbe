#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include <functional>
#include <map>
#include <numeric>
#include <string>

#include "clusterscope/filter.hpp"
#include "clusterscope/qp.hpp"
#include "clusterscope/types.hpp"

namespace testsupport {

using clusterscope::Matrix;
using clusterscope::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double spread = 1.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.2, 3.0);
  Matrix X(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double s = scale(rng) * spread;
    for (Eigen::Index i = 0; i < rows; ++i) X(i, j) = s * nd(rng);
  }
  return X;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues sorted
// descending with matching eigenvector columns.
inline std::pair<Vector, Matrix> jacobi_eigen(Matrix A) {
  const Eigen::Index n = A.rows();
  Matrix V = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-30 * std::max(1.0, A.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (A(p, q) == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return A(a, a) > A(b, b); });
  Vector vals(n);
  Matrix vecs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals(i) = A(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]);
    vecs.col(i) = V.col(idx[static_cast<std::size_t>(i)]);
  }
  return {vals, vecs};
}

// Largest principal angle between the column spans of two orthonormal bases.
inline double max_principal_angle(const Matrix& A, const Matrix& B) {
  // sine of the largest angle is the spectral norm of B's component outside span(A)
  const Matrix residual = B - A * (A.transpose() * B);
  Eigen::JacobiSVD<Matrix> svd(residual);
  return std::asin(std::min(1.0, svd.singularValues()(0)));
}

// Orthonormal basis of the null space of Eᵀ (directions z with zᵀE = 0).
inline Matrix null_space_of_transpose(const Matrix& E) {
  Eigen::FullPivHouseholderQR<Matrix> qr(E);
  const Matrix Q = qr.matrixQ();
  return Q.rightCols(E.rows() - E.cols());
}

inline Matrix random_orthonormal(std::mt19937_64& rng, Eigen::Index d) {
  const Matrix F = random_matrix(rng, d, 2);
  return Eigen::HouseholderQR<Matrix>(F).householderQ() * Matrix::Identity(d, 2);
}

// Small bound/equality-constrained backward-projection problem.
struct QpInstance {
  Matrix E;
  clusterscope::Vector2 dy;
  clusterscope::ConstraintSet cons;
  Vector interior;  // strictly feasible point
};

inline QpInstance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dd(2, 6);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  QpInstance inst;
  const Eigen::Index d = dd(rng);
  inst.E = random_orthonormal(rng, d);
  inst.dy = clusterscope::Vector2(3 * ud(rng), 3 * ud(rng));
  inst.cons = clusterscope::ConstraintSet::none(d);
  inst.interior = Vector(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const int kind = static_cast<int>(rng() % 4);
    const double c = ud(rng) * 0.5;
    inst.interior(i) = c;
    if (kind == 1 || kind == 3) inst.cons.lb(i) = c - 0.1 - std::abs(ud(rng));
    if (kind == 2 || kind == 3) inst.cons.ub(i) = c + 0.1 + std::abs(ud(rng));
  }
  const Eigen::Index m = std::min<Eigen::Index>(static_cast<Eigen::Index>(rng() % 3), d - 1);
  inst.cons.C = random_matrix(rng, m, d);
  inst.cons.d = inst.cons.C * inst.interior;
  return inst;
}

// Random feasible point: interior + a scaled null-space direction of C kept
// inside the box.
inline Vector random_feasible(std::mt19937_64& rng, const QpInstance& inst) {
  const Eigen::Index d = inst.E.rows();
  const Eigen::Index m = inst.cons.C.rows();
  Matrix Z;
  if (m == 0) {
    Z = Matrix::Identity(d, d);
  } else {
    Eigen::FullPivHouseholderQR<Matrix> qr(inst.cons.C.transpose());
    const Matrix Q = qr.matrixQ();
    Z = Q.rightCols(d - m);
  }
  const Vector dir = Z * random_vector(rng, Z.cols());
  double tmax = 1e6;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (dir(i) > 0 && std::isfinite(inst.cons.ub(i))) tmax = std::min(tmax, (inst.cons.ub(i) - inst.interior(i)) / dir(i));
    if (dir(i) < 0 && std::isfinite(inst.cons.lb(i))) tmax = std::min(tmax, (inst.cons.lb(i) - inst.interior(i)) / dir(i));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double scale = std::min(tmax, 10.0);
  return inst.interior + u(rng) * scale * dir;
}

// Two labelings describe the same partition.
inline bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  std::map<std::size_t, std::size_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

// Kruskal MST, then drop the k-1 heaviest edges.
inline std::vector<std::size_t> mst_components(const Matrix& X, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  struct Edge { double w; std::size_t a, b; };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      edges.push_back({(X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).norm(), i, j});
  std::sort(edges.begin(), edges.end(), [](const Edge& p, const Edge& q) { return p.w < q.w; });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  std::size_t joined = 0;
  for (const auto& e : edges) {
    if (joined == n - k) break;
    const auto ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    ++joined;
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = find(i);
  return labels;
}

inline clusterscope::filter::ExprPtr random_expr(std::mt19937_64& rng, int depth) {
  static const std::vector<std::string> names = {"a", "b", "age", "x_1", "two words", "q\"uote", "back\\slash"};
  std::uniform_int_distribution<int> kind(0, depth > 0 ? 3 : 0);
  switch (kind(rng)) {
    case 1: return clusterscope::filter::make_and(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    case 2: return clusterscope::filter::make_or(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
    case 3: return clusterscope::filter::make_not(random_expr(rng, depth - 1));
    default: break;
  }
  const auto& name = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
  if (std::bernoulli_distribution(0.2)(rng)) {
    const clusterscope::filter::CompareOp op = std::bernoulli_distribution(0.5)(rng) ? clusterscope::filter::CompareOp::EQ : clusterscope::filter::CompareOp::NE;
    return clusterscope::filter::make_comparison(name, op, std::string("v\"al ") + std::to_string(rng() % 100));
  }
  const auto op = static_cast<clusterscope::filter::CompareOp>(std::uniform_int_distribution<int>(0, 5)(rng));
  std::uniform_real_distribution<double> ud(-1e6, 1e6);
  double v = ud(rng);
  if (std::bernoulli_distribution(0.3)(rng)) v = std::round(v);
  if (std::bernoulli_distribution(0.1)(rng)) v = v * 1e-300;
  return clusterscope::filter::make_comparison(name, op, v);
}

}  // namespace testsupport
