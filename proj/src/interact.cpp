#include "clusterscope/interact.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clusterscope/error.hpp"

namespace clusterscope {

Vector2 forward_project(const ProjectionModel& model, const Eigen::Ref<const Vector>& delta_x) {
  if (delta_x.size() != model.dims())
    throw Error(ErrorCode::Dimension, "change vector has " + std::to_string(delta_x.size()) +
                                          " entries, model expects " + std::to_string(model.dims()));
  if (model.standardized()) return model.basis.transpose() * delta_x.cwiseQuotient(model.scale);
  return model.basis.transpose() * delta_x;
}

Proline proline(const ProjectionModel& model, double sigma, const Eigen::Ref<const Vector>& point,
                std::size_t feature_index, const ProlineOptions& options) {
  if (!(options.k > 0.0) || !(options.c > 0.0) || options.c > options.k)
    throw Error(ErrorCode::Parameter, "proline requires k > 0 and 0 < c <= k");
  if (point.size() != model.dims()) throw Error(ErrorCode::Dimension, "point does not match model dimension");
  if (feature_index >= static_cast<std::size_t>(model.dims()))
    throw Error(ErrorCode::Dimension, "feature index out of range");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::Numeric, "invalid standard deviation");

  Proline out;
  out.feature_index = feature_index;
  out.feature = feature_index < model.feature_names.size() ? model.feature_names[feature_index] : "";
  out.k = options.k;
  out.c = options.c;
  out.sigma = sigma;
  out.degenerate = sigma == 0.0;

  const auto steps = static_cast<long>(std::lround(options.k / options.c));
  const auto i = static_cast<Eigen::Index>(feature_index);
  const double x_i = point(i);
  Vector moved = point;
  for (long j = -steps; j <= steps; ++j) {
    const double t = static_cast<double>(j) * options.k / static_cast<double>(steps);
    const double value = x_i + t * sigma;
    moved(i) = value;
    out.param_values.push_back(value);
    out.path.push_back(project(model, moved));
  }
  for (std::size_t s = 1; s < out.path.size(); ++s) out.length += (out.path[s] - out.path[s - 1]).norm();
  return out;
}

Vector feature_sigmas(const ProjectionModel& model, const TableView& view) {
  if (view.selected_count() == 0) throw Error(ErrorCode::InsufficientData, "no rows selected");
  const auto rows = view.selected_rows();
  Vector sigmas(model.dims());
  std::vector<std::string> unknown;
  for (Eigen::Index j = 0; j < model.dims(); ++j) {
    const auto& name = model.feature_names[static_cast<std::size_t>(j)];
    const auto col = view.base().numeric_index(name);
    if (!col) {
      unknown.push_back(name);
      continue;
    }
    Vector values(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      values(static_cast<Eigen::Index>(r)) =
          view.base().values()(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(*col));
    sigmas(j) = summarize(values).std;
  }
  if (!unknown.empty()) throw NameResolutionError(std::move(unknown));
  return sigmas;
}

Proline proline(const ProjectionModel& model, const TableView& view, const Eigen::Ref<const Vector>& point,
                std::size_t feature_index, const ProlineOptions& options) {
  const Vector sigmas = feature_sigmas(model, view);
  if (feature_index >= static_cast<std::size_t>(sigmas.size()))
    throw Error(ErrorCode::Dimension, "feature index out of range");
  return proline(model, sigmas(static_cast<Eigen::Index>(feature_index)), point, feature_index, options);
}

std::vector<Proline> proline_all(const ProjectionModel& model, const TableView& view,
                                 const Eigen::Ref<const Vector>& point, const ProlineOptions& options) {
  const Vector sigmas = feature_sigmas(model, view);
  std::vector<Proline> out;
  out.reserve(static_cast<std::size_t>(model.dims()));
  for (Eigen::Index j = 0; j < model.dims(); ++j)
    out.push_back(proline(model, sigmas(j), point, static_cast<std::size_t>(j), options));
  std::stable_sort(out.begin(), out.end(), [](const Proline& a, const Proline& b) { return a.length > b.length; });
  return out;
}

Vector backward_project_unconstrained(const ProjectionModel& model, const Vector2& delta_y) {
  if (!model.standardized()) return model.basis * delta_y;
  const Matrix W = model.effective_basis();
  const Eigen::Matrix2d gram = W.transpose() * W;
  return W * gram.ldlt().solve(delta_y);
}

std::vector<Direction> classify_deltas(const Vector& delta_x, double tolerance) {
  std::vector<Direction> out;
  out.reserve(static_cast<std::size_t>(delta_x.size()));
  for (Eigen::Index i = 0; i < delta_x.size(); ++i) {
    if (delta_x(i) > tolerance)
      out.push_back(Direction::Increase);
    else if (delta_x(i) < -tolerance)
      out.push_back(Direction::Decrease);
    else
      out.push_back(Direction::Unchanged);
  }
  return out;
}

BackwardResult backward_project_constrained(const ProjectionModel& model, const Eigen::Ref<const Vector>& point,
                                            const Vector2& delta_y, const ConstraintSet& cons,
                                            const QPOptions& options) {
  if (point.size() != model.dims()) throw Error(ErrorCode::Dimension, "point does not match model dimension");
  BackwardResult out;
  out.solution = solve_bp_qp(model.effective_basis(), delta_y, cons, options);
  out.new_point = point + out.solution.delta_x;
  out.directions = classify_deltas(out.solution.delta_x);
  return out;
}

}  // namespace clusterscope
