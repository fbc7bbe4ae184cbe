#include "clusterscope/service.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stop_token>

#include "clusterscope/error.hpp"

namespace clusterscope {

namespace fs = std::filesystem;

struct ProjectionState {
  ProjectionMethod method = ProjectionMethod::PCA;
  DistanceMeasure distance = DistanceMeasure::Euclidean;
  bool standardize = false;
  std::uint64_t revision = 0;
  Embedding embedding;
  std::vector<std::size_t> rows;  // table rows behind each embedded point
};

struct ClusteringState {
  ClusteringModel model;
  ClusterProfile profile;
  std::uint64_t revision = 0;
  std::vector<std::size_t> rows;
};

struct Session {
  Session(std::string id_, std::string source_, CsvOptions csv_, TablePtr table_)
      : id(std::move(id_)), source(std::move(source_)), csv(std::move(csv_)), table(table_), view(table_) {}

  std::string id;
  std::mutex mu;
  std::string source;
  CsvOptions csv;
  TablePtr table;
  TableView view;
  std::string filter_expr;
  std::string keyword;
  std::uint64_t revision = 1;
  std::optional<ProjectionState> projection;
  std::optional<ClusteringState> clustering;
  std::stop_source stop;
};

namespace {

// Non-engine failures that map straight to an HTTP status.
struct HttpError {
  int status;
  json body;
};

Response reply(int status, const json& j) {
  Response r;
  r.status = status;
  r.body = j.dump();
  return r;
}

HttpError not_found(const std::string& message) { return {404, {{"error", "not_found"}, {"message", message}}}; }

HttpError conflict(const std::string& reason, const std::string& message, const json& extra = json::object()) {
  json body = {{"error", "conflict"}, {"reason", reason}, {"message", message}};
  body.update(extra);
  return {409, body};
}

json parse_body(const Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw HttpError{400, {{"error", "bad_request"}, {"message", "request body must be a JSON object"}}};
    return j;
  } catch (const json::parse_error& e) {
    throw HttpError{400, {{"error", "bad_json"}, {"message", e.what()}}};
  }
}

template <typename T>
T field(const json& body, const char* key, T fallback) {
  if (!body.contains(key) || body[key].is_null()) return fallback;
  try {
    return body[key].get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Validation, std::string("field '") + key + "' has the wrong type");
  }
}

std::size_t positive_size(const json& body, const char* key) {
  if (!body.contains(key)) throw Error(ErrorCode::Validation, std::string("missing field '") + key + "'");
  const json& v = body[key];
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw Error(ErrorCode::Parameter, std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::size_t query_size(const Request& req, const std::string& key, std::size_t fallback) {
  const auto it = req.query.find(key);
  if (it == req.query.end() || it->second.empty()) return fallback;
  std::size_t v = 0;
  const auto* end = it->second.data() + it->second.size();
  const auto res = std::from_chars(it->second.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw Error(ErrorCode::Validation, "query parameter '" + key + "' must be a non-negative integer");
  return v;
}

char parse_delimiter(const std::string& s) {
  if (s.empty()) return ',';
  if (s == "tab" || s == "\\t") return '\t';
  if (s.size() != 1) throw Error(ErrorCode::Validation, "delimiter must be a single character");
  return s[0];
}

Vector2 vector2_from_json(const json& j, const char* what) {
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return Vector2(j[0].get<double>(), j[1].get<double>());
  if (j.is_object() && j.contains("x") && j.contains("y") && j["x"].is_number() && j["y"].is_number())
    return Vector2(j["x"].get<double>(), j["y"].get<double>());
  throw Error(ErrorCode::Validation, std::string(what) + " must be [x, y] or {x, y}");
}

json vec2_json(const Vector2& v) { return json::array({v(0), v(1)}); }

// Joined labels when the clustering matches the current view.
const std::vector<std::size_t>* current_labels(const Session& s) {
  if (s.clustering && s.clustering->revision == s.revision) return &s.clustering->model.labels;
  return nullptr;
}

const ProjectionModel& require_linear_projection(const Session& s) {
  if (!s.projection)
    throw conflict("no_projection", "fit a projection first", {{"hint", "POST /sessions/" + s.id + "/projection"}});
  if (s.projection->revision != s.revision)
    throw conflict("stale_model", "the projection was fitted on an earlier view",
                   {{"model", "projection"},
                    {"model_revision", s.projection->revision},
                    {"revision", s.revision},
                    {"hint", "POST /sessions/" + s.id + "/projection"}});
  if (!s.projection->embedding.model)
    throw conflict("nonlinear_projection", "this projection has no linear model; refit with PCA or euclidean CMDS",
                   {{"hint", "POST /sessions/" + s.id + "/projection"}});
  return *s.projection->embedding.model;
}

const ClusteringState& require_clustering(const Session& s) {
  if (!s.clustering)
    throw conflict("no_clustering", "fit a clustering first", {{"hint", "POST /sessions/" + s.id + "/clustering"}});
  if (s.clustering->revision != s.revision)
    throw conflict("stale_model", "the clustering was fitted on an earlier view",
                   {{"model", "clustering"},
                    {"model_revision", s.clustering->revision},
                    {"revision", s.revision},
                    {"hint", "POST /sessions/" + s.id + "/clustering"}});
  return *s.clustering;
}

Vector row_values(const DataTable& table, std::size_t row, const std::vector<std::string>& features) {
  Vector v(static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) {
    const auto col = table.numeric_index(features[j]);
    if (!col) throw NameResolutionError({features[j]});
    v(static_cast<Eigen::Index>(j)) = table.values()(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(*col));
  }
  return v;
}

// point: a row id, {"row_id": ...}, a feature map or a dense array.
Vector resolve_point(const Session& s, const json& body, const std::vector<std::string>& features) {
  if (!body.contains("point")) throw Error(ErrorCode::Validation, "missing field 'point'");
  const json& p = body["point"];
  std::optional<std::string> row_id;
  if (p.is_string()) row_id = p.get<std::string>();
  if (p.is_object() && p.contains("row_id")) row_id = p["row_id"].get<std::string>();
  if (row_id) {
    const auto r = s.table->row_index(*row_id);
    if (!r) throw Error(ErrorCode::Validation, "unknown row id '" + *row_id + "'");
    return row_values(*s.table, *r, features);
  }
  return vector_from_json(p, features, std::nullopt);
}

struct TableRowKey {
  std::optional<double> number;
  std::string text;
};

Response table_page(const Session& s, const Request& req) {
  const DataTable& t = *s.table;
  const std::size_t offset = query_size(req, "offset", 0);
  const std::size_t limit = std::min<std::size_t>(query_size(req, "limit", 50), 10000);
  const auto dir_it = req.query.find("dir");
  const std::string dir = dir_it == req.query.end() || dir_it->second.empty() ? "asc" : dir_it->second;
  if (dir != "asc" && dir != "desc") throw Error(ErrorCode::Validation, "dir must be 'asc' or 'desc'");

  const auto* labels = current_labels(s);
  std::vector<std::size_t> rows = s.view.selected_rows();
  std::vector<std::size_t> position(t.rows(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) position[rows[i]] = i;

  const auto sort_it = req.query.find("sort_by");
  if (sort_it != req.query.end() && !sort_it->second.empty()) {
    const std::string& key = sort_it->second;
    std::function<TableRowKey(std::size_t)> key_of;
    if (key == t.id_name()) {
      key_of = [&](std::size_t r) { return TableRowKey{std::nullopt, t.row_ids()[r]}; };
    } else if (key == "label") {
      if (!labels) throw conflict("no_clustering", "sorting by label needs a current clustering");
      key_of = [&](std::size_t r) { return TableRowKey{static_cast<double>((*labels)[position[r]]), {}}; };
    } else if (const auto j = t.numeric_index(key)) {
      key_of = [&, j](std::size_t r) {
        return TableRowKey{t.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(*j)), {}};
      };
    } else if (const auto c = t.categorical_index(key)) {
      key_of = [&, c](std::size_t r) { return TableRowKey{std::nullopt, t.categorical_values(*c)[r]}; };
    } else {
      throw NameResolutionError({key});
    }
    const bool desc = dir == "desc";
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      const TableRowKey ka = key_of(a), kb = key_of(b);
      if (ka.number) return desc ? *kb.number < *ka.number : *ka.number < *kb.number;
      return desc ? kb.text < ka.text : ka.text < kb.text;
    });
  }

  json columns = json::array();
  for (const auto& c : t.columns()) columns.push_back(c.name);
  json out_rows = json::array();
  for (std::size_t i = offset; i < rows.size() && i < offset + limit; ++i) {
    const std::size_t r = rows[i];
    json values = json::object();
    for (std::size_t c = 0; c < t.columns().size(); ++c) {
      const auto& meta = t.columns()[c];
      const auto k = t.storage_index(c);
      if (meta.kind == FeatureKind::Numeric)
        values[meta.name] = t.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      else
        values[meta.name] = t.categorical_values(k)[r];
    }
    json row = {{"id", t.row_ids()[r]}, {"values", std::move(values)}};
    row["label"] = labels ? json((*labels)[position[r]]) : json(nullptr);
    out_rows.push_back(std::move(row));
  }
  return reply(200, {{"revision", s.revision},
                     {"total", s.view.selected_count()},
                     {"offset", offset},
                     {"limit", limit},
                     {"id_column", t.id_name()},
                     {"columns", std::move(columns)},
                     {"features", s.view.features()},
                     {"rows", std::move(out_rows)}});
}

json session_summary(const Session& s) {
  json out = {{"session_id", s.id},
              {"revision", s.revision},
              {"rows", s.table->rows()},
              {"selected", s.view.selected_count()},
              {"features", s.view.features()},
              {"filter", {{"expr", s.filter_expr}, {"keyword", s.keyword}}}};
  out["projection"] = s.projection ? json{{"method", to_string(s.projection->method)},
                                          {"distance", to_string(s.projection->distance)},
                                          {"revision", s.projection->revision},
                                          {"stale", s.projection->revision != s.revision}}
                                   : json(nullptr);
  out["clustering"] = s.clustering ? json{{"method", to_string(s.clustering->model.method)},
                                          {"k", s.clustering->model.k},
                                          {"revision", s.clustering->revision},
                                          {"stale", s.clustering->revision != s.revision}}
                                   : json(nullptr);
  return out;
}

json projection_json(const Session& s, const ProjectionState& p) {
  std::vector<std::string> ids;
  ids.reserve(p.rows.size());
  for (auto r : p.rows) ids.push_back(s.table->row_ids()[r]);
  const std::vector<std::size_t>* labels = nullptr;
  if (s.clustering && s.clustering->revision == p.revision) labels = &s.clustering->model.labels;
  json out = embedding_json(p.embedding, ids, labels);
  out["revision"] = p.revision;
  out["method"] = to_string(p.method);
  out["distance"] = to_string(p.distance);
  out["standardize"] = p.standardize;
  out["linear"] = p.embedding.model.has_value();
  return out;
}

json clustering_json(const ClusteringState& c) {
  return {{"revision", c.revision}, {"model", to_json(c.model)}, {"profile", to_json(c.profile)}};
}

// Fits run without the session lock; the view is captured first.
struct ViewSnapshot {
  TableView view;
  std::uint64_t revision;
  std::stop_token stop;
};

ViewSnapshot capture(Session& s) {
  std::lock_guard lock(s.mu);
  s.view.require_nonempty();
  return {s.view, s.revision, s.stop.get_token()};
}

void check_alive(const Session& s) {
  if (s.stop.stop_requested()) throw Error(ErrorCode::Cancelled, "session was deleted during the request");
}

ProjectionState fit_projection(const ViewSnapshot& snap, const json& body) {
  ProjectionState st;
  st.method = parse_projection_method(field<std::string>(body, "method", "pca"));
  st.distance = parse_distance_measure(field<std::string>(body, "distance", "euclidean"));
  st.standardize = field<bool>(body, "standardize", false);
  st.revision = snap.revision;
  st.rows = snap.view.selected_rows();
  const Matrix X = snap.view.matrix();
  const auto& names = snap.view.features();
  if (st.method == ProjectionMethod::PCA) {
    if (st.distance != DistanceMeasure::Euclidean)
      throw Error(ErrorCode::Parameter, "PCA supports the euclidean distance only; use cmds for other measures");
    ProjectionModel model = fit_pca(X, names, PcaOptions{st.standardize});
    st.embedding.coords = project_rows(model, X);
    st.embedding.eigenvalues = model.eigenvalues;
    st.embedding.model = std::move(model);
  } else {
    if (st.standardize) throw Error(ErrorCode::Parameter, "standardize applies to PCA only");
    st.embedding = fit_cmds(pairwise_distances(X, st.distance));
    if (st.distance == DistanceMeasure::Euclidean && X.cols() >= 2) {
      ProjectionModel model = linear_model_from_embedding(X, st.embedding.coords, names);
      st.embedding.coords = project_rows(model, X);
      st.embedding.model = std::move(model);
    }
  }
  return st;
}

ClusteringState fit_clustering(const ViewSnapshot& snap, const json& body) {
  const ClusterMethod method = parse_cluster_method(field<std::string>(body, "method", "kmeans"));
  const std::size_t k = positive_size(body, "k");
  const DistanceMeasure distance = parse_distance_measure(field<std::string>(body, "distance", "euclidean"));
  const Matrix X = snap.view.matrix();
  ClusteringState st;
  st.revision = snap.revision;
  st.rows = snap.view.selected_rows();
  if (method == ClusterMethod::KMeans) {
    KMeansOptions opts;
    opts.k = k;
    opts.distance = distance;
    opts.seed = field<std::uint64_t>(body, "seed", 0);
    opts.max_iter = field<std::size_t>(body, "max_iter", 300);
    opts.stop = snap.stop;
    st.model = kmeans(X, opts);
  } else {
    AgglomerativeOptions opts;
    opts.k = k;
    opts.distance = distance;
    opts.linkage = parse_linkage(field<std::string>(body, "linkage", "ward"));
    opts.stop = snap.stop;
    st.model = agglomerative(X, opts);
  }
  st.profile = cluster_profile(st.model, snap.view);
  return st;
}

fs::path resolve_data_path(const std::string& data_dir, const std::string& name) {
  if (data_dir.empty()) throw Error(ErrorCode::Validation, "the server has no data directory configured");
  const fs::path rel(name);
  if (rel.empty() || rel.is_absolute()) throw Error(ErrorCode::Validation, "paths must be relative to the data directory");
  for (const auto& part : rel)
    if (part == "..") throw Error(ErrorCode::Validation, "paths must stay inside the data directory");
  return fs::path(data_dir) / rel;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Validation, "cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json matrix_rows_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_to_json(m.row(i).transpose()));
  return out;
}

Matrix matrix_from_rows(const json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = j[i].at(static_cast<std::size_t>(c)).get<double>();
  return m;
}

json snapshot_json(const Session& s) {
  json out = {{"format", "clusterscope-session"},
              {"version", 1},
              {"session_id", s.id},
              {"source", s.source},
              {"csv",
               {{"delimiter", std::string(1, s.csv.delimiter)},
                {"header_row", s.csv.header_row},
                {"id_column", s.csv.id_column ? json(*s.csv.id_column) : json(nullptr)}}},
              {"filter", {{"expr", s.filter_expr}, {"keyword", s.keyword}}},
              {"features", s.view.features()},
              {"revision", s.revision}};
  if (s.projection) {
    const auto& p = *s.projection;
    out["projection"] = {{"method", to_string(p.method)},
                         {"distance", to_string(p.distance)},
                         {"standardize", p.standardize},
                         {"revision", p.revision},
                         {"rows", p.rows},
                         {"coords", matrix_rows_json(p.embedding.coords)},
                         {"eigenvalues", {p.embedding.eigenvalues[0], p.embedding.eigenvalues[1]}},
                         {"clamped_negative", p.embedding.clamped_negative}};
    out["projection"]["model"] = p.embedding.model ? to_json(*p.embedding.model) : json(nullptr);
  }
  if (s.clustering) {
    out["clustering"] = {{"revision", s.clustering->revision},
                         {"rows", s.clustering->rows},
                         {"model", to_json(s.clustering->model)},
                         {"features", s.clustering->profile.features}};
  }
  return out;
}

RowMask compute_mask(const DataTable& table, const std::string& expr, const std::string& keyword) {
  RowMask mask(table.rows(), true);
  if (!expr.empty()) {
    const RowMask m = apply_filter(table, filter::parse(expr));
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && m[i];
  }
  if (!keyword.empty()) {
    const RowMask m = keyword_filter(table, keyword);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && m[i];
  }
  return mask;
}

void restore_snapshot(Session& s, const json& snap) {
  try {
    s.filter_expr = snap.at("filter").value("expr", "");
    s.keyword = snap.at("filter").value("keyword", "");
    s.view = TableView(s.table, compute_mask(*s.table, s.filter_expr, s.keyword),
                       snap.at("features").get<std::vector<std::string>>());
    s.revision = snap.at("revision").get<std::uint64_t>();
    if (snap.contains("projection")) {
      const json& p = snap["projection"];
      ProjectionState st;
      st.method = parse_projection_method(p.at("method").get<std::string>());
      st.distance = parse_distance_measure(p.at("distance").get<std::string>());
      st.standardize = p.value("standardize", false);
      st.revision = p.at("revision").get<std::uint64_t>();
      st.rows = p.at("rows").get<std::vector<std::size_t>>();
      st.embedding.coords = matrix_from_rows(p.at("coords"), 2);
      st.embedding.eigenvalues = {p.at("eigenvalues").at(0).get<double>(), p.at("eigenvalues").at(1).get<double>()};
      st.embedding.clamped_negative = p.value("clamped_negative", false);
      if (!p.at("model").is_null()) st.embedding.model = projection_model_from_json(p["model"]);
      s.projection = std::move(st);
    }
    if (snap.contains("clustering")) {
      const json& c = snap["clustering"];
      ClusteringState st;
      st.revision = c.at("revision").get<std::uint64_t>();
      st.rows = c.at("rows").get<std::vector<std::size_t>>();
      st.model = clustering_model_from_json(c.at("model"));
      RowMask mask(s.table->rows(), false);
      for (auto r : st.rows) mask.at(r) = true;
      st.profile = cluster_profile(st.model, TableView(s.table, mask, c.at("features").get<std::vector<std::string>>()));
      s.clustering = std::move(st);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("malformed snapshot: ") + e.what());
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string::npos ? path.size() : j;
    if (end > i) parts.push_back(path.substr(i, end - i));
    i = end;
  }
  return parts;
}

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

Service::~Service() {
  std::lock_guard lock(mu_);
  for (auto& [id, s] : sessions_) s->stop.request_stop();
}

std::size_t Service::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::shared_ptr<Session> Service::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::string Service::new_id() {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(splitmix(id_state_)));
  return buf;
}

Response Service::handle(const Request& req) {
  try {
    const auto parts = split_path(req.path);
    if (req.method == "OPTIONS") {
      Response r;
      r.status = 204;
      return r;
    }
    if (parts.empty() || parts[0] != "sessions") throw not_found("no route for " + req.path);
    if (parts.size() == 1) {
      if (req.method == "POST") return create_session(req);
      if (req.method == "GET") {
        std::lock_guard lock(mu_);
        json ids = json::array();
        for (const auto& [id, s] : sessions_) ids.push_back(id);
        return reply(200, {{"sessions", ids}});
      }
      throw HttpError{405, {{"error", "method_not_allowed"}, {"message", req.method + " " + req.path}}};
    }
    const std::string& id = parts[1];
    if (parts.size() == 2 && req.method == "DELETE") return delete_session(id);
    auto s = find(id);
    if (!s) throw not_found("unknown session '" + id + "'");
    std::string rest;
    for (std::size_t i = 2; i < parts.size(); ++i) rest += (i > 2 ? "/" : "") + parts[i];
    return route_session(s, req, rest);
  } catch (const HttpError& e) {
    return reply(e.status, e.body);
  } catch (const Error& e) {
    return reply(e.code() == ErrorCode::Cancelled ? 410 : 422, error_json(e));
  } catch (const std::exception& e) {
    return reply(500, {{"error", "internal"}, {"message", e.what()}});
  }
}

Response Service::create_session(const Request& req) {
  std::string source;
  CsvOptions csv;
  std::optional<json> snapshot;
  const bool is_json = req.content_type.rfind("application/json", 0) == 0;
  if (is_json) {
    const json body = parse_body(req);
    csv.delimiter = parse_delimiter(field<std::string>(body, "delimiter", ","));
    csv.header_row = field<bool>(body, "header", true);
    if (body.contains("id_column") && !body["id_column"].is_null()) csv.id_column = field<std::string>(body, "id_column", "");
    if (body.contains("snapshot")) {
      try {
        snapshot = json::parse(read_file(resolve_data_path(options_.data_dir, field<std::string>(body, "snapshot", ""))));
        source = snapshot->at("source").get<std::string>();
        const json& c = snapshot->at("csv");
        csv.delimiter = parse_delimiter(c.value("delimiter", ","));
        csv.header_row = c.value("header_row", true);
        csv.id_column.reset();
        if (c.contains("id_column") && !c["id_column"].is_null()) csv.id_column = c["id_column"].get<std::string>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::Validation, std::string("malformed snapshot: ") + e.what());
      }
    } else if (body.contains("csv")) {
      source = field<std::string>(body, "csv", "");
    } else if (body.contains("path")) {
      source = read_file(resolve_data_path(options_.data_dir, field<std::string>(body, "path", "")));
    } else {
      throw Error(ErrorCode::Validation, "provide 'csv', 'path' or 'snapshot'");
    }
  } else {
    source = req.body;
    if (auto it = req.query.find("delimiter"); it != req.query.end()) csv.delimiter = parse_delimiter(it->second);
    if (auto it = req.query.find("id_column"); it != req.query.end() && !it->second.empty()) csv.id_column = it->second;
    if (auto it = req.query.find("header"); it != req.query.end()) csv.header_row = it->second != "false" && it->second != "0";
  }

  auto table = std::make_shared<const DataTable>(load_csv(source, csv));
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mu_);
    std::string id = new_id();
    while (sessions_.count(id)) id = new_id();
    s = std::make_shared<Session>(id, std::move(source), csv, table);
  }
  if (snapshot) restore_snapshot(*s, *snapshot);
  {
    std::lock_guard lock(mu_);
    sessions_[s->id] = s;
  }
  json out = {{"session_id", s->id}, {"revision", s->revision}, {"table", table_metadata(*table)}};
  return reply(201, out);
}

Response Service::delete_session(const std::string& id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw not_found("unknown session '" + id + "'");
    s = it->second;
    sessions_.erase(it);
  }
  s->stop.request_stop();
  return reply(200, {{"deleted", id}});
}

Response Service::route_session(const std::shared_ptr<Session>& sp, const Request& req, const std::string& rest) {
  Session& s = *sp;
  const std::string& m = req.method;

  if (rest.empty() && m == "GET") {
    std::lock_guard lock(s.mu);
    return reply(200, session_summary(s));
  }

  if (rest == "table" && m == "GET") {
    std::lock_guard lock(s.mu);
    return table_page(s, req);
  }

  if (rest == "filter" && m == "PUT") {
    const json body = parse_body(req);
    const std::string expr = field<std::string>(body, "expr", "");
    const std::string keyword = field<std::string>(body, "keyword", "");
    const RowMask mask = compute_mask(*s.table, expr, keyword);
    std::lock_guard lock(s.mu);
    s.view = s.view.with_mask(mask);
    s.filter_expr = expr;
    s.keyword = keyword;
    ++s.revision;
    return reply(200, {{"revision", s.revision},
                       {"match_count", s.view.selected_count()},
                       {"total", s.table->rows()},
                       {"expr", expr},
                       {"keyword", keyword}});
  }

  if (rest == "features" && m == "PUT") {
    const json body = parse_body(req);
    if (!body.contains("names") || !body["names"].is_array())
      throw Error(ErrorCode::Validation, "'names' must be an array of feature names");
    auto names = field<std::vector<std::string>>(body, "names", {});
    if (names.empty()) throw Error(ErrorCode::InsufficientData, "select at least one feature");
    std::lock_guard lock(s.mu);
    s.view = s.view.with_features(std::move(names));
    ++s.revision;
    return reply(200, {{"revision", s.revision}, {"features", s.view.features()}});
  }

  if (rest == "clustering" && m == "POST") {
    const json body = parse_body(req);
    const ViewSnapshot snap = capture(s);
    ClusteringState st = fit_clustering(snap, body);
    std::lock_guard lock(s.mu);
    check_alive(s);
    json out = clustering_json(st);
    s.clustering = std::move(st);
    return reply(200, out);
  }

  if (rest == "projection" && m == "POST") {
    const json body = parse_body(req);
    const ViewSnapshot snap = capture(s);
    ProjectionState st = fit_projection(snap, body);
    std::lock_guard lock(s.mu);
    check_alive(s);
    s.projection = std::move(st);
    return reply(200, projection_json(s, *s.projection));
  }

  if (rest == "projection" && m == "GET") {
    std::lock_guard lock(s.mu);
    if (!s.projection) throw conflict("no_projection", "fit a projection first");
    return reply(200, projection_json(s, *s.projection));
  }

  if (rest == "clustering" && m == "GET") {
    std::lock_guard lock(s.mu);
    if (!s.clustering) throw conflict("no_clustering", "fit a clustering first");
    return reply(200, clustering_json(*s.clustering));
  }

  if (rest == "forward" && m == "POST") {
    const json body = parse_body(req);
    std::lock_guard lock(s.mu);
    const ProjectionModel& model = require_linear_projection(s);
    const Vector point = resolve_point(s, body, model.feature_names);
    if (!body.contains("delta")) throw Error(ErrorCode::Validation, "missing field 'delta'");
    const Vector delta = vector_from_json(body["delta"], model.feature_names, 0.0);
    const Vector2 y = project(model, point);
    const Vector2 dy = forward_project(model, delta);
    return reply(200, {{"revision", s.projection->revision},
                       {"delta_y", vec2_json(dy)},
                       {"y", vec2_json(y)},
                       {"new_y", vec2_json(y + dy)}});
  }

  if (rest == "prolines" && m == "POST") {
    const json body = parse_body(req);
    std::lock_guard lock(s.mu);
    const ProjectionModel& model = require_linear_projection(s);
    const Vector point = resolve_point(s, body, model.feature_names);
    const ProlineOptions opts{field<double>(body, "k", 2.0), field<double>(body, "c", 0.25)};
    auto all = proline_all(model, s.view, point, opts);
    if (body.contains("features") && !body["features"].is_null()) {
      const auto wanted = field<std::vector<std::string>>(body, "features", {});
      std::vector<std::string> unknown;
      for (const auto& w : wanted)
        if (std::find(model.feature_names.begin(), model.feature_names.end(), w) == model.feature_names.end())
          unknown.push_back(w);
      if (!unknown.empty()) throw NameResolutionError(std::move(unknown));
      std::erase_if(all, [&](const Proline& p) {
        return std::find(wanted.begin(), wanted.end(), p.feature) == wanted.end();
      });
    }
    json list = json::array();
    for (const auto& p : all) list.push_back(to_json(p));
    return reply(200, {{"revision", s.projection->revision}, {"k", opts.k}, {"c", opts.c}, {"prolines", std::move(list)}});
  }

  if (rest == "backward" && m == "POST") {
    const json body = parse_body(req);
    std::lock_guard lock(s.mu);
    const ProjectionModel& model = require_linear_projection(s);
    const Vector point = resolve_point(s, body, model.feature_names);
    if (!body.contains("delta_y")) throw Error(ErrorCode::Validation, "missing field 'delta_y'");
    const Vector2 dy = vector2_from_json(body["delta_y"], "delta_y");
    json out;
    if (!body.contains("constraints") || body["constraints"].is_null()) {
      const Vector dx = backward_project_unconstrained(model, dy);
      const Matrix W = model.effective_basis();
      const double residual = (W.transpose() * dx - dy).squaredNorm();
      const double kkt = check_kkt(W, dy, ConstraintSet::none(model.dims()), 0.0, dx);
      out = backward_json(model.feature_names, point, dx, residual, kkt, QPStatus::Optimal);
      out["mode"] = "unconstrained";
    } else {
      const ConstraintSet cons = constraints_from_json(body["constraints"], model.feature_names, point);
      QPOptions opts;
      opts.lambda = field<double>(body, "lambda", 1e-6);
      const BackwardResult res = backward_project_constrained(model, point, dy, cons, opts);
      out = backward_json(model.feature_names, res, point);
      json active = json::object();
      for (std::size_t i = 0; i < model.feature_names.size(); ++i) {
        const int a = res.solution.active[i];
        active[model.feature_names[i]] = a < 0 ? "lower" : a > 0 ? "upper" : "free";
      }
      out["active"] = std::move(active);
      out["mode"] = "constrained";
    }
    out["revision"] = s.projection->revision;
    out["delta_y"] = vec2_json(dy);
    return reply(200, out);
  }

  if (rest == "stats/anova" && m == "POST") {
    const json body = parse_body(req);
    std::lock_guard lock(s.mu);
    const ClusteringState& c = require_clustering(s);
    const std::string feature = field<std::string>(body, "feature", "");
    if (feature.empty()) throw Error(ErrorCode::Validation, "missing field 'feature'");
    const auto col = s.table->numeric_index(feature);
    if (!col) throw NameResolutionError({feature});
    const auto ids = field<std::vector<std::size_t>>(body, "cluster_ids", {});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= c.model.k) throw Error(ErrorCode::Parameter, "cluster id " + std::to_string(ids[i]) + " out of range");
      if (std::find(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(i), ids[i]) != ids.begin() + static_cast<std::ptrdiff_t>(i))
        throw Error(ErrorCode::Parameter, "cluster id " + std::to_string(ids[i]) + " listed twice");
    }
    std::vector<double> values;
    values.reserve(c.rows.size());
    for (auto r : c.rows) values.push_back(s.table->values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(*col)));
    json out = to_json(anova_oneway(groups_from_labels(values, c.model.labels, ids)));
    out["revision"] = c.revision;
    out["feature"] = feature;
    out["cluster_ids"] = ids;
    return reply(200, out);
  }

  if (rest == "stats/correlations" && m == "GET") {
    std::lock_guard lock(s.mu);
    return reply(200, {{"revision", s.revision}, {"correlations", to_json(corr_pairs(s.view))}});
  }

  if (rest == "stats/points" && m == "GET") {
    std::lock_guard lock(s.mu);
    return reply(200, {{"revision", s.revision}, {"stats", to_json(point_stats(s.view))}});
  }

  if (rest == "export.csv" && m == "GET") {
    char delim = ',';
    if (auto it = req.query.find("delimiter"); it != req.query.end()) delim = parse_delimiter(it->second);
    std::lock_guard lock(s.mu);
    Response r;
    r.content_type = "text/csv; charset=utf-8";
    r.body = export_csv(s.view, delim);
    return r;
  }

  if (rest == "snapshot" && m == "POST") {
    std::lock_guard lock(s.mu);
    const fs::path path = resolve_data_path(options_.data_dir, "session-" + s.id + ".json");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Validation, "cannot write '" + path.string() + "'");
    out << snapshot_json(s).dump(2);
    out.close();
    if (!out) throw Error(ErrorCode::Validation, "failed writing '" + path.string() + "'");
    return reply(200, {{"snapshot", path.filename().string()}, {"revision", s.revision}});
  }

  throw HttpError{404, {{"error", "not_found"}, {"message", "no route for " + req.method + " " + req.path}}};
}

}  // namespace clusterscope
