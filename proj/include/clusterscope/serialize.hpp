#pragma once

// JSON shapes shared by the HTTP API and the command-line tool.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clusterscope/clustering.hpp"
#include "clusterscope/data_table.hpp"
#include "clusterscope/dimred.hpp"
#include "clusterscope/interact.hpp"
#include "clusterscope/qp.hpp"
#include "clusterscope/stats.hpp"

namespace clusterscope {

using json = nlohmann::json;

json table_metadata(const DataTable& table);

json to_json(const ProjectionModel& model);
ProjectionModel projection_model_from_json(const json& j);

// points: [{id, x, y, label}] where label is null without a clustering.
json embedding_json(const Embedding& embedding, const std::vector<std::string>& row_ids,
                    const std::vector<std::size_t>* labels = nullptr);

json to_json(const ClusteringModel& model);
ClusteringModel clustering_model_from_json(const json& j);
json to_json(const ClusterProfile& profile);

json to_json(const Proline& proline);

json to_json(const AnovaResult& result);
json to_json(const std::vector<CorrelationEntry>& entries);
json to_json(const std::vector<PointStats>& stats);

// {equalities: [{coeffs, rhs}], bounds: [{feature, lb?, ub?}], space?}.
// coeffs is either a dense array or an object keyed by feature name. With
// space == "value" the constraints apply to point + dx instead of dx.
ConstraintSet constraints_from_json(const json& j, const std::vector<std::string>& features, const Vector& point);

json backward_json(const std::vector<std::string>& features, const Vector& point, const Vector& delta_x,
                   double objective, double kkt_residual, QPStatus status);
json backward_json(const std::vector<std::string>& features, const BackwardResult& result, const Vector& point);

// Structured payload for an engine error: {error, message, ...}.
json error_json(const std::exception& e);

// Feature-map or dense-array input to a vector in `features` order. Missing
// entries take `fill` when provided, otherwise they are an error.
Vector vector_from_json(const json& j, const std::vector<std::string>& features, std::optional<double> fill);

json vector_to_json(const Vector& v);

}  // namespace clusterscope
