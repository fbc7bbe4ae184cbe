#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "clusterscope/types.hpp"

namespace clusterscope {

enum class ProjectionMethod { PCA, CMDS };
enum class DistanceMeasure { Euclidean, Manhattan, Cosine, Correlation };

const char* to_string(ProjectionMethod m) noexcept;
const char* to_string(DistanceMeasure m) noexcept;
ProjectionMethod parse_projection_method(const std::string& s);
DistanceMeasure parse_distance_measure(const std::string& s);

// Linear map from feature space to the plane: y = ((x - mu) ./ scale) * E.
//
// `basis` has orthonormal columns (e0, e1) and each column is sign-fixed so
// that its entry of largest magnitude is positive (lowest index on ties).
// `scale` is all ones unless the model was fitted on standardized features.
struct ProjectionModel {
  ProjectionMethod method = ProjectionMethod::PCA;
  Vector mu;
  Matrix basis;  // d x 2
  std::array<double, 2> eigenvalues{0.0, 0.0};
  std::vector<std::string> feature_names;
  Vector scale;

  Eigen::Index dims() const noexcept { return mu.size(); }
  bool standardized() const;

  // The effective d x 2 map applied to feature displacements: diag(1/scale) E.
  Matrix effective_basis() const;
};

struct Embedding {
  Matrix coords;  // n x 2
  std::optional<ProjectionModel> model;
  std::array<double, 2> eigenvalues{0.0, 0.0};
  // CMDS only: a negative Gram eigenvalue was clamped to zero.
  bool clamped_negative = false;
};

struct PcaOptions {
  bool standardize = false;
};

// Rows are observations. Throws InsufficientData for n < 2 or d < 1 and
// Numeric for non-finite input.
ProjectionModel fit_pca(const Matrix& X, std::vector<std::string> feature_names = {},
                        const PcaOptions& options = {});

Vector2 project(const ProjectionModel& model, const Eigen::Ref<const Vector>& x);
Matrix project_rows(const ProjectionModel& model, const Matrix& X);

// Classical MDS on a symmetric, zero-diagonal, non-negative distance matrix.
Embedding fit_cmds(const Matrix& D);

Matrix pairwise_distances(const Matrix& X, DistanceMeasure measure);

// Recovers the linear model behind a CMDS embedding of Euclidean distances:
// coords = (X - mu) E, so E_j = Xcᵀ y_j / |y_j|^2.
ProjectionModel linear_model_from_embedding(const Matrix& X, const Matrix& coords,
                                            std::vector<std::string> feature_names);

// Flips each column so its largest-magnitude entry is positive.
void fix_signs(Matrix& columns);

}  // namespace clusterscope
