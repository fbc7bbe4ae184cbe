#include "clusterscope/dimred.hpp"

#include <cmath>
#include <limits>

#include "clusterscope/error.hpp"

namespace clusterscope {

const char* to_string(ProjectionMethod m) noexcept {
  return m == ProjectionMethod::PCA ? "pca" : "cmds";
}

const char* to_string(DistanceMeasure m) noexcept {
  switch (m) {
    case DistanceMeasure::Euclidean: return "euclidean";
    case DistanceMeasure::Manhattan: return "manhattan";
    case DistanceMeasure::Cosine: return "cosine";
    case DistanceMeasure::Correlation: return "correlation";
  }
  return "?";
}

ProjectionMethod parse_projection_method(const std::string& s) {
  if (s == "pca" || s == "PCA") return ProjectionMethod::PCA;
  if (s == "cmds" || s == "CMDS" || s == "mds") return ProjectionMethod::CMDS;
  throw Error(ErrorCode::Parameter, "unknown projection method '" + s + "'");
}

DistanceMeasure parse_distance_measure(const std::string& s) {
  if (s == "euclidean") return DistanceMeasure::Euclidean;
  if (s == "manhattan" || s == "cityblock") return DistanceMeasure::Manhattan;
  if (s == "cosine") return DistanceMeasure::Cosine;
  if (s == "correlation") return DistanceMeasure::Correlation;
  throw Error(ErrorCode::Parameter, "unknown distance measure '" + s + "'");
}

bool ProjectionModel::standardized() const {
  return scale.size() == mu.size() && (scale.array() != 1.0).any();
}

Matrix ProjectionModel::effective_basis() const {
  if (!standardized()) return basis;
  return scale.cwiseInverse().asDiagonal() * basis;
}

void fix_signs(Matrix& columns) {
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < columns.rows(); ++i) {
      const double a = std::abs(columns(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (columns.rows() > 0 && columns(best, j) < 0.0) columns.col(j) = -columns.col(j);
  }
}

namespace {

void require_finite(const Matrix& X, const char* what) {
  if (!X.allFinite()) throw Error(ErrorCode::Numeric, std::string(what) + " contains non-finite values");
}

// Unit vector orthogonal to e0: the coordinate axis with the largest residual
// after removing its e0 component (lowest index on ties), normalized.
Vector complete_orthonormal(const Vector& e0) {
  Eigen::Index best = 0;
  double best_norm = -1.0;
  for (Eigen::Index k = 0; k < e0.size(); ++k) {
    const double r = 1.0 - e0(k) * e0(k);
    if (r > best_norm + 1e-12) {
      best_norm = r;
      best = k;
    }
  }
  Vector v = -e0(best) * e0;
  v(best) += 1.0;
  return v.normalized();
}

Matrix axis_basis(Eigen::Index d) {
  Matrix E = Matrix::Zero(d, 2);
  E(0, 0) = 1.0;
  E(1, 1) = 1.0;
  return E;
}

}  // namespace

ProjectionModel fit_pca(const Matrix& X, std::vector<std::string> feature_names, const PcaOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "PCA needs at least two rows");
  if (d < 2) throw Error(ErrorCode::InsufficientData, "PCA needs at least two features");
  require_finite(X, "PCA input");
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != d)
    throw Error(ErrorCode::Dimension, "feature name count does not match column count");

  ProjectionModel model;
  model.method = ProjectionMethod::PCA;
  model.mu = X.colwise().mean().transpose();
  model.scale = Vector::Ones(d);
  Matrix centered = X.rowwise() - model.mu.transpose();
  if (options.standardize) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double s = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n));
      if (s > 0.0) model.scale(j) = s;
    }
    centered = centered * model.scale.cwiseInverse().asDiagonal();
  }

  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double tol = static_cast<double>(std::max(n, d)) * std::numeric_limits<double>::epsilon() *
                     (s.size() > 0 ? s(0) : 0.0);

  Matrix E(d, 2);
  if (s.size() == 0 || s(0) <= tol || s(0) == 0.0) {
    E = axis_basis(d);
  } else {
    Vector e0 = svd.matrixV().col(0);
    if (s.size() > 1 && s(1) > tol) {
      E.col(0) = e0;
      E.col(1) = svd.matrixV().col(1);
    } else {
      // Rank one: fix the sign of e0 first so the completion is deterministic.
      Matrix first = e0;
      fix_signs(first);
      e0 = first.col(0);
      E.col(0) = e0;
      E.col(1) = complete_orthonormal(e0);
    }
  }
  fix_signs(E);
  model.basis = E;

  const double nd = static_cast<double>(n);
  model.eigenvalues[0] = s.size() > 0 ? s(0) * s(0) / nd : 0.0;
  model.eigenvalues[1] = s.size() > 1 ? s(1) * s(1) / nd : 0.0;
  if (feature_names.empty())
    for (Eigen::Index j = 0; j < d; ++j) feature_names.push_back("f" + std::to_string(j));
  model.feature_names = std::move(feature_names);
  return model;
}

Vector2 project(const ProjectionModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.dims())
    throw Error(ErrorCode::Dimension, "point has " + std::to_string(x.size()) + " features, model expects " +
                                          std::to_string(model.dims()));
  if (model.standardized()) {
    const Vector z = (x - model.mu).cwiseQuotient(model.scale);
    return model.basis.transpose() * z;
  }
  return model.basis.transpose() * (x - model.mu);
}

Matrix project_rows(const ProjectionModel& model, const Matrix& X) {
  if (X.cols() != model.dims()) throw Error(ErrorCode::Dimension, "matrix column count does not match model");
  Matrix centered = X.rowwise() - model.mu.transpose();
  if (model.standardized()) centered = centered * model.scale.cwiseInverse().asDiagonal();
  return centered * model.basis;
}

Embedding fit_cmds(const Matrix& D) {
  const Eigen::Index n = D.rows();
  if (D.cols() != n) throw Error(ErrorCode::Validation, "distance matrix must be square");
  if (n == 0) throw Error(ErrorCode::InsufficientData, "distance matrix is empty");
  require_finite(D, "distance matrix");
  const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(D(i, i)) > tol) throw Error(ErrorCode::Validation, "distance matrix has a non-zero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (D(i, j) < 0.0) throw Error(ErrorCode::Validation, "distance matrix has negative entries");
      if (std::abs(D(i, j) - D(j, i)) > tol) throw Error(ErrorCode::Validation, "distance matrix is not symmetric");
    }
  }

  const Matrix sq = D.array().square().matrix();
  const Vector row_mean = sq.rowwise().mean();
  const double grand = sq.mean();
  Matrix B(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) B(i, j) = -0.5 * (sq(i, j) - row_mean(i) - row_mean(j) + grand);
  B = 0.5 * (B + B.transpose());

  Embedding emb;
  emb.coords = Matrix::Zero(n, 2);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(B);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::Numeric, "eigendecomposition failed");
  const Vector& vals = eig.eigenvalues();  // ascending
  Matrix vecs(n, 2);
  vecs.setZero();
  double top[2] = {0.0, 0.0};
  for (Eigen::Index k = 0; k < 2 && k < n; ++k) {
    top[k] = vals(n - 1 - k);
    vecs.col(k) = eig.eigenvectors().col(n - 1 - k);
  }
  fix_signs(vecs);
  const double neg_tol = 1e-10 * std::max(1.0, std::abs(vals(n - 1)));
  for (int k = 0; k < 2; ++k) {
    if (top[k] < 0.0) {
      if (top[k] < -neg_tol) emb.clamped_negative = true;
      top[k] = 0.0;
    }
    emb.coords.col(k) = vecs.col(k) * std::sqrt(top[k]);
    emb.eigenvalues[static_cast<std::size_t>(k)] = top[k] / static_cast<double>(n);
  }
  if (vals(0) < -neg_tol) emb.clamped_negative = true;
  return emb;
}

Matrix pairwise_distances(const Matrix& X, DistanceMeasure measure) {
  const Eigen::Index n = X.rows();
  require_finite(X, "distance input");
  Matrix rows = X;
  if (measure == DistanceMeasure::Correlation) {
    for (Eigen::Index i = 0; i < n; ++i) {
      rows.row(i).array() -= rows.row(i).mean();
      if (rows.row(i).norm() == 0.0)
        throw Error(ErrorCode::Degenerate, "row " + std::to_string(i) + " has zero variance");
    }
  }
  if (measure == DistanceMeasure::Cosine || measure == DistanceMeasure::Correlation) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = rows.row(i).norm();
      if (norm == 0.0) throw Error(ErrorCode::Degenerate, "row " + std::to_string(i) + " has zero norm");
      rows.row(i) /= norm;
    }
  }
  Matrix D = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = 0.0;
      switch (measure) {
        case DistanceMeasure::Euclidean: v = (X.row(i) - X.row(j)).norm(); break;
        case DistanceMeasure::Manhattan: v = (X.row(i) - X.row(j)).cwiseAbs().sum(); break;
        case DistanceMeasure::Cosine:
        case DistanceMeasure::Correlation: v = std::max(0.0, 1.0 - rows.row(i).dot(rows.row(j))); break;
      }
      D(i, j) = D(j, i) = v;
    }
  }
  return D;
}

ProjectionModel linear_model_from_embedding(const Matrix& X, const Matrix& coords,
                                            std::vector<std::string> feature_names) {
  const Eigen::Index d = X.cols();
  if (coords.rows() != X.rows() || coords.cols() != 2)
    throw Error(ErrorCode::Dimension, "embedding does not match data");
  if (d < 2) throw Error(ErrorCode::InsufficientData, "need at least two features");
  ProjectionModel model;
  model.method = ProjectionMethod::CMDS;
  model.mu = X.colwise().mean().transpose();
  model.scale = Vector::Ones(d);
  const Matrix centered = X.rowwise() - model.mu.transpose();
  const double n = static_cast<double>(X.rows());

  Matrix E(d, 2);
  const double tol = 1e-12 * std::max(1.0, centered.cwiseAbs().maxCoeff());
  const double n0 = coords.col(0).norm();
  const double n1 = coords.col(1).norm();
  if (n0 <= tol) {
    E = axis_basis(d);
  } else {
    E.col(0) = (centered.transpose() * coords.col(0)).normalized();
    if (n1 > tol) {
      Vector e1 = centered.transpose() * coords.col(1);
      e1 -= E.col(0).dot(e1) * E.col(0);
      E.col(1) = e1.normalized();
    } else {
      E.col(1) = complete_orthonormal(E.col(0));
    }
  }
  fix_signs(E);
  model.basis = E;
  model.eigenvalues = {n0 * n0 / n, n1 * n1 / n};
  if (feature_names.empty())
    for (Eigen::Index j = 0; j < d; ++j) feature_names.push_back("f" + std::to_string(j));
  model.feature_names = std::move(feature_names);
  return model;
}

}  // namespace clusterscope
