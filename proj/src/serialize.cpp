#include "clusterscope/serialize.hpp"

#include <cmath>
#include <limits>

#include "clusterscope/error.hpp"

namespace clusterscope {

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Vector read_vector(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::Validation, std::string(what) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::Validation, std::string(what) + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

std::size_t feature_position(const std::vector<std::string>& features, const std::string& name) {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i] == name) return i;
  throw NameResolutionError({name});
}

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::Increase: return "increase";
    case Direction::Decrease: return "decrease";
    case Direction::Unchanged: return "unchanged";
  }
  return "unchanged";
}

}  // namespace

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_or_null(v(i)));
  return out;
}

Vector vector_from_json(const json& j, const std::vector<std::string>& features, std::optional<double> fill) {
  const auto d = static_cast<Eigen::Index>(features.size());
  if (j.is_array()) {
    Vector v = read_vector(j, "vector");
    if (v.size() != d)
      throw Error(ErrorCode::Dimension, "expected " + std::to_string(d) + " values, got " + std::to_string(v.size()));
    return v;
  }
  if (!j.is_object()) throw Error(ErrorCode::Validation, "expected an object keyed by feature name or an array");
  Vector v = Vector::Constant(d, fill.value_or(std::numeric_limits<double>::quiet_NaN()));
  std::vector<std::string> unknown;
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find(features.begin(), features.end(), key);
    if (it == features.end()) {
      unknown.push_back(key);
      continue;
    }
    if (!value.is_number()) throw Error(ErrorCode::Validation, "value for '" + key + "' must be a number");
    v(it - features.begin()) = value.get<double>();
  }
  if (!unknown.empty()) throw NameResolutionError(std::move(unknown));
  if (!fill) {
    std::vector<std::string> missing;
    for (Eigen::Index i = 0; i < d; ++i)
      if (std::isnan(v(i))) missing.push_back(features[static_cast<std::size_t>(i)]);
    if (!missing.empty()) {
      std::string msg = "missing values for:";
      for (const auto& m : missing) msg += " " + m;
      throw Error(ErrorCode::Validation, msg);
    }
  }
  return v;
}

json table_metadata(const DataTable& table) {
  json features = json::array();
  for (const auto& c : table.columns()) {
    json f = {{"name", c.name},
              {"kind", c.kind == FeatureKind::Numeric ? "numeric" : "categorical"},
              {"missing_count", c.missing_count}};
    if (c.kind == FeatureKind::Numeric) {
      f["mean"] = c.mean;
      f["std"] = c.std;
      f["min"] = c.min;
      f["max"] = c.max;
    }
    features.push_back(std::move(f));
  }
  return {{"rows", table.rows()},
          {"numeric_features", table.numeric_count()},
          {"id_column", table.id_name()},
          {"ids_synthesized", table.ids_synthesized()},
          {"features", std::move(features)}};
}

json to_json(const ProjectionModel& model) {
  json E = json::array();
  for (Eigen::Index i = 0; i < model.basis.rows(); ++i) E.push_back({model.basis(i, 0), model.basis(i, 1)});
  json out = {{"method", to_string(model.method)},
              {"mu", vector_to_json(model.mu)},
              {"E", std::move(E)},
              {"eigenvalues", {model.eigenvalues[0], model.eigenvalues[1]}},
              {"feature_names", model.feature_names}};
  if (model.standardized()) out["scale"] = vector_to_json(model.scale);
  return out;
}

ProjectionModel projection_model_from_json(const json& j) {
  const json& m = j.contains("model") && j["model"].is_object() ? j["model"] : j;
  try {
    ProjectionModel model;
    model.method = parse_projection_method(m.at("method").get<std::string>());
    model.mu = read_vector(m.at("mu"), "mu");
    const json& E = m.at("E");
    const auto d = model.mu.size();
    if (!E.is_array() || static_cast<Eigen::Index>(E.size()) != d)
      throw Error(ErrorCode::Dimension, "E must have one row per feature");
    model.basis.resize(d, 2);
    for (Eigen::Index i = 0; i < d; ++i) {
      const Vector row = read_vector(E[static_cast<std::size_t>(i)], "E row");
      if (row.size() != 2) throw Error(ErrorCode::Dimension, "E rows must have two entries");
      model.basis.row(i) = row.transpose();
    }
    const Vector ev = read_vector(m.at("eigenvalues"), "eigenvalues");
    if (ev.size() != 2) throw Error(ErrorCode::Dimension, "eigenvalues must have two entries");
    model.eigenvalues = {ev(0), ev(1)};
    model.feature_names = m.at("feature_names").get<std::vector<std::string>>();
    if (static_cast<Eigen::Index>(model.feature_names.size()) != d)
      throw Error(ErrorCode::Dimension, "feature_names length does not match mu");
    model.scale = m.contains("scale") ? read_vector(m["scale"], "scale") : Vector::Ones(d);
    if (model.scale.size() != d) throw Error(ErrorCode::Dimension, "scale length does not match mu");
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("malformed projection model: ") + e.what());
  }
}

json embedding_json(const Embedding& embedding, const std::vector<std::string>& row_ids,
                    const std::vector<std::size_t>* labels) {
  json points = json::array();
  for (Eigen::Index i = 0; i < embedding.coords.rows(); ++i) {
    json p = {{"id", row_ids.at(static_cast<std::size_t>(i))},
              {"x", embedding.coords(i, 0)},
              {"y", embedding.coords(i, 1)}};
    p["label"] = labels ? json(labels->at(static_cast<std::size_t>(i))) : json(nullptr);
    points.push_back(std::move(p));
  }
  json out = {{"points", std::move(points)},
              {"eigenvalues", {embedding.eigenvalues[0], embedding.eigenvalues[1]}},
              {"clamped_negative", embedding.clamped_negative}};
  out["model"] = embedding.model ? to_json(*embedding.model) : json(nullptr);
  return out;
}

json to_json(const ClusteringModel& model) {
  json params = {{"distance", to_string(model.distance)}};
  if (model.method == ClusterMethod::KMeans) {
    params["seed"] = model.seed;
    params["iterations"] = model.iterations;
  } else {
    params["linkage"] = to_string(model.linkage);
  }
  json out = {{"method", to_string(model.method)},
              {"k", model.k},
              {"params", std::move(params)},
              {"labels", model.labels},
              {"sizes", model.sizes()},
              {"order", model.order}};
  if (model.method == ClusterMethod::KMeans) {
    json C = json::array();
    for (Eigen::Index c = 0; c < model.centroids.rows(); ++c) C.push_back(vector_to_json(model.centroids.row(c).transpose()));
    out["centroids"] = std::move(C);
  } else {
    json merges = json::array();
    for (const auto& m : model.merges) merges.push_back({m.a, m.b, m.height});
    out["merges"] = std::move(merges);
  }
  return out;
}

ClusteringModel clustering_model_from_json(const json& j) {
  const json& m = j.contains("model") && j["model"].is_object() ? j["model"] : j;
  try {
    ClusteringModel model;
    model.method = parse_cluster_method(m.at("method").get<std::string>());
    model.k = m.at("k").get<std::size_t>();
    const json& params = m.at("params");
    model.distance = parse_distance_measure(params.at("distance").get<std::string>());
    if (params.contains("linkage")) model.linkage = parse_linkage(params["linkage"].get<std::string>());
    if (params.contains("seed")) model.seed = params["seed"].get<std::uint64_t>();
    if (params.contains("iterations")) model.iterations = params["iterations"].get<std::size_t>();
    model.labels = m.at("labels").get<std::vector<std::size_t>>();
    for (auto l : model.labels)
      if (l >= model.k) throw Error(ErrorCode::Validation, "label out of range");
    model.order = m.at("order").get<std::vector<std::size_t>>();
    if (m.contains("centroids")) {
      const json& C = m["centroids"];
      const std::size_t d = C.empty() ? 0 : C[0].size();
      model.centroids.resize(static_cast<Eigen::Index>(C.size()), static_cast<Eigen::Index>(d));
      for (std::size_t c = 0; c < C.size(); ++c)
        model.centroids.row(static_cast<Eigen::Index>(c)) = read_vector(C[c], "centroid").transpose();
    }
    if (m.contains("merges"))
      for (const auto& mg : m["merges"]) model.merges.push_back({mg.at(0).get<std::size_t>(), mg.at(1).get<std::size_t>(), mg.at(2).get<double>()});
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("malformed clustering model: ") + e.what());
  }
}

json to_json(const ClusterProfile& profile) {
  json values = json::array();
  for (Eigen::Index f = 0; f < profile.values.rows(); ++f) values.push_back(vector_to_json(profile.values.row(f).transpose()));
  return {{"features", profile.features},
          {"clusters", profile.cluster_ids},
          {"sizes", profile.sizes},
          {"values", std::move(values)}};
}

json to_json(const Proline& p) {
  json path = json::array();
  for (const auto& pt : p.path) path.push_back({pt(0), pt(1)});
  return {{"feature", p.feature},
          {"feature_index", p.feature_index},
          {"params", p.param_values},
          {"path", std::move(path)},
          {"length", p.length},
          {"sigma", p.sigma},
          {"k", p.k},
          {"c", p.c},
          {"degenerate", p.degenerate}};
}

json to_json(const AnovaResult& r) {
  return {{"F", number_or_null(r.f_stat)},
          {"df1", r.df_between},
          {"df2", r.df_within},
          {"p", r.p_value},
          {"ss_between", r.ss_between},
          {"ss_within", r.ss_within},
          {"grand_mean", r.grand_mean},
          {"groups", [&] {
             json g = json::array();
             for (std::size_t i = 0; i < r.group_means.size(); ++i)
               g.push_back({{"mean", r.group_means[i]}, {"size", r.group_sizes[i]}});
             return g;
           }()},
          {"degenerate", r.degenerate}};
}

json to_json(const std::vector<CorrelationEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries)
    out.push_back({{"a", e.feature_a}, {"b", e.feature_b}, {"r", e.defined ? json(e.r) : json(nullptr)}, {"defined", e.defined}});
  return out;
}

json to_json(const std::vector<PointStats>& stats) {
  json out = json::array();
  for (const auto& s : stats)
    out.push_back({{"feature", s.feature}, {"count", s.count}, {"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}});
  return out;
}

ConstraintSet constraints_from_json(const json& j, const std::vector<std::string>& features, const Vector& point) {
  const auto d = static_cast<Eigen::Index>(features.size());
  ConstraintSet cons = ConstraintSet::none(d);
  if (j.is_null()) return cons;
  if (!j.is_object()) throw Error(ErrorCode::Validation, "constraints must be an object");
  if (point.size() != d) throw Error(ErrorCode::Dimension, "point does not match the feature list");

  bool value_space = false;
  if (j.contains("space")) {
    const auto space = j["space"].get<std::string>();
    if (space == "value")
      value_space = true;
    else if (space != "delta")
      throw Error(ErrorCode::Validation, "constraint space must be 'delta' or 'value'");
  }

  try {
    if (j.contains("equalities")) {
      const json& eqs = j["equalities"];
      cons.C = Matrix::Zero(static_cast<Eigen::Index>(eqs.size()), d);
      cons.d = Vector::Zero(static_cast<Eigen::Index>(eqs.size()));
      for (std::size_t r = 0; r < eqs.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        cons.C.row(row) = vector_from_json(eqs[r].at("coeffs"), features, 0.0).transpose();
        double rhs = eqs[r].value("rhs", 0.0);
        if (value_space) rhs -= cons.C.row(row).dot(point);
        cons.d(row) = rhs;
      }
    }
    if (j.contains("fixed")) {
      // Shorthand for dx_i = 0 on each listed feature.
      const auto names = j["fixed"].get<std::vector<std::string>>();
      const Eigen::Index m0 = cons.C.rows();
      cons.C.conservativeResize(m0 + static_cast<Eigen::Index>(names.size()), d);
      cons.d.conservativeResize(m0 + static_cast<Eigen::Index>(names.size()));
      for (std::size_t r = 0; r < names.size(); ++r) {
        const auto row = m0 + static_cast<Eigen::Index>(r);
        cons.C.row(row).setZero();
        cons.C(row, static_cast<Eigen::Index>(feature_position(features, names[r]))) = 1.0;
        cons.d(row) = 0.0;
      }
    }
    if (j.contains("bounds")) {
      for (const auto& b : j["bounds"]) {
        const auto i = static_cast<Eigen::Index>(feature_position(features, b.at("feature").get<std::string>()));
        const double offset = value_space ? point(i) : 0.0;
        if (b.contains("lb") && !b["lb"].is_null()) cons.lb(i) = std::max(cons.lb(i), b["lb"].get<double>() - offset);
        if (b.contains("ub") && !b["ub"].is_null()) cons.ub(i) = std::min(cons.ub(i), b["ub"].get<double>() - offset);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("malformed constraints: ") + e.what());
  }
  return cons;
}

json backward_json(const std::vector<std::string>& features, const Vector& point, const Vector& delta_x,
                   double objective, double kkt_residual, QPStatus status) {
  json dx = json::object();
  json np = json::object();
  json dirs = json::object();
  const auto directions = classify_deltas(delta_x);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    dx[features[i]] = delta_x(ii);
    np[features[i]] = point(ii) + delta_x(ii);
    dirs[features[i]] = direction_name(directions[i]);
  }
  return {{"delta_x", std::move(dx)},
          {"new_point", std::move(np)},
          {"direction", std::move(dirs)},
          {"objective", objective},
          {"kkt_residual", kkt_residual},
          {"status", to_string(status)}};
}

json backward_json(const std::vector<std::string>& features, const BackwardResult& result, const Vector& point) {
  json out = backward_json(features, point, result.solution.delta_x, result.solution.objective,
                           result.solution.kkt_residual, result.solution.status);
  out["residual"] = result.solution.residual;
  out["iterations"] = result.solution.iterations;
  return out;
}

json error_json(const std::exception& e) {
  json out = {{"message", e.what()}};
  if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
    out["error"] = "syntax";
    out["offset"] = pe->offset();
    out["expected"] = pe->expected();
  } else if (const auto* ne = dynamic_cast<const NameResolutionError*>(&e)) {
    out["error"] = "name_resolution";
    out["names"] = ne->names();
  } else if (const auto* ce = dynamic_cast<const Error*>(&e)) {
    out["error"] = to_string(ce->code());
  } else {
    out["error"] = "internal";
  }
  return out;
}

}  // namespace clusterscope
