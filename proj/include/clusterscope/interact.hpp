#pragma once

#include <string>
#include <vector>

#include "clusterscope/data_table.hpp"
#include "clusterscope/dimred.hpp"
#include "clusterscope/qp.hpp"

namespace clusterscope {

// Planar displacement caused by a feature displacement: dy = dx E.
Vector2 forward_project(const ProjectionModel& model, const Eigen::Ref<const Vector>& delta_x);

// Forward projections of `point` with feature i swept over
// [x_i - k sigma_i, x_i + k sigma_i] in 2 round(k/c) equal steps.
struct Proline {
  std::size_t feature_index = 0;
  std::string feature;
  double k = 2.0;
  double c = 0.25;
  double sigma = 0.0;
  std::vector<double> param_values;
  std::vector<Vector2> path;
  double length = 0.0;  // polyline length
  bool degenerate = false;  // sigma == 0, every sample is the same point
};

struct ProlineOptions {
  double k = 2.0;
  double c = 0.25;
};

Proline proline(const ProjectionModel& model, double sigma, const Eigen::Ref<const Vector>& point,
                std::size_t feature_index, const ProlineOptions& options = {});

// Uses the population standard deviation of the feature over the view.
Proline proline(const ProjectionModel& model, const TableView& view, const Eigen::Ref<const Vector>& point,
                std::size_t feature_index, const ProlineOptions& options = {});

// One proline per model feature, ranked by path length (longest first, ties by
// feature index).
std::vector<Proline> proline_all(const ProjectionModel& model, const TableView& view,
                                 const Eigen::Ref<const Vector>& point, const ProlineOptions& options = {});

// Population standard deviation per model feature over the view's rows.
Vector feature_sigmas(const ProjectionModel& model, const TableView& view);

// Minimal-norm dx with dx E = dy; for an orthonormal basis this is dy Eᵀ.
Vector backward_project_unconstrained(const ProjectionModel& model, const Vector2& delta_y);

enum class Direction { Decrease = -1, Unchanged = 0, Increase = 1 };

struct BackwardResult {
  QPSolution solution;
  Vector new_point;
  std::vector<Direction> directions;
};

// Deltas with magnitude at or below this are reported as unchanged.
inline constexpr double kUnchangedTolerance = 1e-9;

BackwardResult backward_project_constrained(const ProjectionModel& model, const Eigen::Ref<const Vector>& point,
                                            const Vector2& delta_y, const ConstraintSet& cons,
                                            const QPOptions& options = {});

std::vector<Direction> classify_deltas(const Vector& delta_x, double tolerance = kUnchangedTolerance);

}  // namespace clusterscope
