#include "clusterscope/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <CLI11.hpp>

#include "clusterscope/error.hpp"
#include "clusterscope/filter.hpp"
#include "clusterscope/http_server.hpp"
#include "clusterscope/serialize.hpp"
#include "clusterscope/service.hpp"

namespace clusterscope {

namespace {

// Failure that is not the user's input (I/O, server startup): exit code 1.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {
    const char* no_color = std::getenv("NO_COLOR");
    color_ = (!no_color || !*no_color) && &err == &std::cerr && ::isatty(STDERR_FILENO);
  }

  void info(const std::string& msg) { write("info", "\033[36m", msg); }
  void error(const std::string& msg) { write("error", "\033[31m", msg); }

 private:
  void write(const char* level, const char* ansi, const std::string& msg) {
    if (color_)
      err_ << ansi << level << "\033[0m: " << msg << '\n';
    else
      err_ << level << ": " << msg << '\n';
  }

  std::ostream& err_;
  bool color_ = false;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Validation, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Validation, "'" + path + "' is not valid JSON: " + e.what());
  }
}

json parse_json_arg(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Validation, std::string(what) + " is not valid JSON: " + e.what());
  }
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty() || out_path == "-") {
    out << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot write '" + out_path + "'");
  f << text;
  if (!f) throw RuntimeFailure("failed writing '" + out_path + "'");
}

void emit_json(const json& j, const std::string& out_path, std::ostream& out) { emit(j.dump(2) + "\n", out_path, out); }

struct InputArgs {
  std::string input;
  std::string delimiter = ",";
  std::string id_column;
  bool no_header = false;
  std::vector<std::string> features;
  std::string expr;
  std::string keyword;
  std::string out;
};

void add_input_flags(CLI::App* cmd, InputArgs& a, bool with_out = true) {
  cmd->add_option("--input,-i", a.input, "CSV file")->required();
  cmd->add_option("--delimiter", a.delimiter, "field delimiter, a single character or 'tab'");
  cmd->add_option("--id-column", a.id_column, "column holding row ids");
  cmd->add_flag("--no-header", a.no_header, "the first row is data");
  cmd->add_option("--features", a.features, "numeric features to use (default: all)")->delimiter(',');
  cmd->add_option("--filter", a.expr, "row filter expression");
  cmd->add_option("--keyword", a.keyword, "keyword search over rows");
  if (with_out) cmd->add_option("--out,-o", a.out, "output file (default: stdout)");
}

CsvOptions csv_options(const InputArgs& a) {
  CsvOptions o;
  if (a.delimiter == "tab" || a.delimiter == "\\t")
    o.delimiter = '\t';
  else if (a.delimiter.size() == 1)
    o.delimiter = a.delimiter[0];
  else
    throw Error(ErrorCode::Validation, "delimiter must be a single character");
  o.header_row = !a.no_header;
  if (!a.id_column.empty()) o.id_column = a.id_column;
  return o;
}

TableView load_view(const InputArgs& a, Log& log) {
  auto table = std::make_shared<const DataTable>(load_csv(read_text(a.input), csv_options(a)));
  log.info("loaded " + std::to_string(table->rows()) + " rows from " + a.input);
  RowMask mask(table->rows(), true);
  if (!a.expr.empty()) mask = apply_filter(*table, filter::parse(a.expr));
  if (!a.keyword.empty()) {
    const RowMask k = keyword_filter(*table, a.keyword);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && k[i];
  }
  TableView view(table);
  view = view.with_mask(std::move(mask));
  if (!a.features.empty()) view = view.with_features(a.features);
  return view;
}

// Drives an in-process service so CLI output matches the HTTP API byte for byte.
class LocalSession {
 public:
  explicit LocalSession(const InputArgs& a) {
    json body = {{"csv", read_text(a.input)}, {"delimiter", a.delimiter}, {"header", !a.no_header}};
    if (!a.id_column.empty()) body["id_column"] = a.id_column;
    const json created = call("POST", "/sessions", body);
    id_ = created["session_id"].get<std::string>();
    if (!a.expr.empty() || !a.keyword.empty()) call("PUT", path("filter"), {{"expr", a.expr}, {"keyword", a.keyword}});
    if (!a.features.empty()) call("PUT", path("features"), {{"names", a.features}});
  }

  json call(const std::string& method, const std::string& p, const json& body) {
    Request req{method, p, {}, body.dump(), "application/json"};
    const Response res = service_.handle(req);
    json out = res.json_body();
    if (res.status >= 400) {
      const std::string msg = out.value("message", "request failed");
      if (res.status >= 500) throw RuntimeFailure(msg);
      throw Error(ErrorCode::Validation, msg);
    }
    return out;
  }

  std::string path(const std::string& rest) const { return "/sessions/" + id_ + "/" + rest; }

 private:
  Service service_;
  std::string id_;
};

Vector point_from_args(const TableView& view, const ProjectionModel& model, const std::string& row,
                       const std::string& point_json) {
  if (!row.empty() == !point_json.empty()) throw Error(ErrorCode::Validation, "give exactly one of --row or --point");
  if (!point_json.empty()) return vector_from_json(parse_json_arg(point_json, "--point"), model.feature_names, std::nullopt);
  const DataTable& t = view.base();
  const auto r = t.row_index(row);
  if (!r) throw Error(ErrorCode::Validation, "unknown row id '" + row + "'");
  Vector x(model.dims());
  for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
    const auto col = t.numeric_index(model.feature_names[j]);
    if (!col) throw NameResolutionError({model.feature_names[j]});
    x(static_cast<Eigen::Index>(j)) = t.values()(static_cast<Eigen::Index>(*r), static_cast<Eigen::Index>(*col));
  }
  return x;
}

int serve(const std::string& host, int port, const std::string& data_dir, const std::string& cors, Log& log) {
  // Signals are taken synchronously on a helper thread so shutdown can call into the server.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Service service(ServiceOptions{data_dir});
  HttpServer server(service, HttpOptions{host, port, cors});
  int bound = 0;
  try {
    bound = server.bind();
  } catch (const Error& e) {
    throw RuntimeFailure(e.what());
  }
  log.info("listening on http://" + host + ":" + std::to_string(bound));
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.wait_until_ready();
    server.stop();
  });
  server.run();
  // run() only returns after stop(); wake the waiter if the server exited on its own.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  log.info("stopped");
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Log log(err);
  CLI::App app{"Clustering and projection analysis engine"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a TOML or INI file");
  app.set_help_all_flag("--help-all");

  // serve
  std::string host = "127.0.0.1";
  int port = port_from_env(8080);
  std::string data_dir;
  std::string cors = "*";
  auto* serve_cmd = app.add_subcommand("serve", "start the HTTP API");
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port,-p", port, "port (default: CLUSTERSCOPE_PORT or 8080; 0 picks one)");
  serve_cmd->add_option("--data-dir", data_dir, "directory for server-side CSV paths and snapshots");
  serve_cmd->add_option("--cors-origin", cors, "Access-Control-Allow-Origin value");

  // cluster
  InputArgs cin_;
  std::string cmethod = "kmeans", cdistance = "euclidean", linkage = "ward";
  std::size_t k = 0, max_iter = 300;
  std::uint64_t seed = 0;
  auto* cluster_cmd = app.add_subcommand("cluster", "fit a clustering");
  add_input_flags(cluster_cmd, cin_);
  cluster_cmd->add_option("--method", cmethod, "kmeans | agglo");
  cluster_cmd->add_option("--k", k, "number of clusters")->required();
  cluster_cmd->add_option("--distance", cdistance, "euclidean | manhattan | cosine | correlation");
  cluster_cmd->add_option("--linkage", linkage, "single | complete | average | ward");
  cluster_cmd->add_option("--seed", seed, "k-means seed");
  cluster_cmd->add_option("--max-iter", max_iter, "k-means iteration cap");

  // project
  InputArgs pin;
  std::string pmethod = "pca", pdistance = "euclidean";
  bool standardize = false;
  auto* project_cmd = app.add_subcommand("project", "fit a 2-D projection");
  add_input_flags(project_cmd, pin);
  project_cmd->add_option("--method", pmethod, "pca | cmds");
  project_cmd->add_option("--distance", pdistance, "euclidean | manhattan | cosine | correlation");
  project_cmd->add_flag("--standardize", standardize, "scale features to unit variance (PCA)");

  // interact
  InputArgs iin;
  std::string model_path, row, point_json, delta_json, delta_y_text, constraints_path;
  double lambda = 1e-6, pk = 2.0, pc = 0.25;
  std::vector<std::string> proline_features;
  auto* interact_cmd = app.add_subcommand("interact", "what-if queries against a saved projection model");
  interact_cmd->require_subcommand(1);
  auto add_interact_common = [&](CLI::App* c) {
    add_input_flags(c, iin);
    c->add_option("--model,-m", model_path, "projection JSON from `project`")->required();
    c->add_option("--row", row, "row id of the starting point");
    c->add_option("--point", point_json, "starting point as a JSON feature map");
  };
  auto* forward_cmd = interact_cmd->add_subcommand("forward", "feature change to projected change");
  add_interact_common(forward_cmd);
  forward_cmd->add_option("--delta", delta_json, "JSON feature map of changes; missing features are 0")->required();
  auto* backward_cmd = interact_cmd->add_subcommand("backward", "projected move to feature change");
  add_interact_common(backward_cmd);
  backward_cmd->add_option("--delta-y", delta_y_text, "target move as x,y")->required();
  backward_cmd->add_option("--constraints", constraints_path, "constraints JSON file");
  backward_cmd->add_option("--lambda", lambda, "regularization weight for the constrained solve");
  auto* prolines_cmd = interact_cmd->add_subcommand("prolines", "feature sensitivity paths");
  add_interact_common(prolines_cmd);
  prolines_cmd->add_option("--k", pk, "path half-width in standard deviations");
  prolines_cmd->add_option("--c", pc, "sampling step in standard deviations");
  prolines_cmd->add_option("--only", proline_features, "restrict to these features")->delimiter(',');

  // stats
  InputArgs sin;
  std::string feature, labels_path;
  std::vector<std::size_t> cluster_ids;
  auto* stats_cmd = app.add_subcommand("stats", "statistics over the selected rows");
  stats_cmd->require_subcommand(1);
  auto* anova_cmd = stats_cmd->add_subcommand("anova", "one-way ANOVA of a feature across clusters");
  add_input_flags(anova_cmd, sin);
  anova_cmd->add_option("--feature", feature, "numeric feature to test")->required();
  anova_cmd->add_option("--labels", labels_path, "clustering JSON from `cluster`")->required();
  anova_cmd->add_option("--clusters", cluster_ids, "cluster ids to compare (default: all)")->delimiter(',');
  auto* corr_cmd = stats_cmd->add_subcommand("corr", "pairwise feature correlations");
  add_input_flags(corr_cmd, sin);
  auto* points_cmd = stats_cmd->add_subcommand("points", "per-feature summary of the selected rows");
  add_input_flags(points_cmd, sin);

  // filter
  InputArgs fin;
  auto* filter_cmd = app.add_subcommand("filter", "write the rows matching an expression as CSV");
  add_input_flags(filter_cmd, fin);
  filter_cmd->add_option("--expr", fin.expr, "filter expression");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    log.error(e.what());
    return 2;
  }

  try {
    if (*serve_cmd) return serve(host, port, data_dir, cors, log);

    if (*cluster_cmd) {
      LocalSession s(cin_);
      json body = {{"method", cmethod}, {"k", k}, {"distance", cdistance}, {"seed", seed}, {"max_iter", max_iter}};
      if (parse_cluster_method(cmethod) == ClusterMethod::Agglomerative) body["linkage"] = linkage;
      const json res = s.call("POST", s.path("clustering"), body);
      log.info("fitted " + cmethod + " with k=" + std::to_string(k));
      emit_json(res, cin_.out, out);
      return 0;
    }

    if (*project_cmd) {
      LocalSession s(pin);
      const json res =
          s.call("POST", s.path("projection"), {{"method", pmethod}, {"distance", pdistance}, {"standardize", standardize}});
      log.info("fitted " + pmethod + " projection");
      emit_json(res, pin.out, out);
      return 0;
    }

    if (*interact_cmd) {
      const ProjectionModel model = projection_model_from_json(read_json_file(model_path));
      InputArgs a = iin;
      a.features = model.feature_names;
      const TableView view = load_view(a, log);
      const Vector x = point_from_args(view, model, row, point_json);
      json res;
      if (*forward_cmd) {
        const Vector delta = vector_from_json(parse_json_arg(delta_json, "--delta"), model.feature_names, 0.0);
        const Vector2 y = project(model, x);
        const Vector2 dy = forward_project(model, delta);
        res = {{"delta_y", {dy(0), dy(1)}}, {"y", {y(0), y(1)}}, {"new_y", {y(0) + dy(0), y(1) + dy(1)}}};
      } else if (*backward_cmd) {
        double dyx = 0.0, dyy = 0.0;
        char comma = 0;
        std::istringstream ss(delta_y_text);
        if (!(ss >> dyx >> comma >> dyy) || comma != ',' || !(ss >> std::ws).eof())
          throw Error(ErrorCode::Validation, "--delta-y must look like 1.5,-2");
        const Vector2 dy(dyx, dyy);
        if (constraints_path.empty()) {
          const Vector dx = backward_project_unconstrained(model, dy);
          const Matrix W = model.effective_basis();
          const double residual = (W.transpose() * dx - dy).squaredNorm();
          const double kkt = check_kkt(W, dy, ConstraintSet::none(model.dims()), 0.0, dx);
          res = backward_json(model.feature_names, x, dx, residual, kkt, QPStatus::Optimal);
          res["mode"] = "unconstrained";
        } else {
          const ConstraintSet cons = constraints_from_json(read_json_file(constraints_path), model.feature_names, x);
          QPOptions opts;
          opts.lambda = lambda;
          res = backward_json(model.feature_names, backward_project_constrained(model, x, dy, cons, opts), x);
          res["mode"] = "constrained";
        }
        res["delta_y"] = {dy(0), dy(1)};
      } else {
        auto all = proline_all(model, view, x, ProlineOptions{pk, pc});
        if (!proline_features.empty()) {
          std::vector<std::string> unknown;
          for (const auto& f : proline_features)
            if (std::find(model.feature_names.begin(), model.feature_names.end(), f) == model.feature_names.end())
              unknown.push_back(f);
          if (!unknown.empty()) throw NameResolutionError(std::move(unknown));
          std::erase_if(all, [&](const Proline& p) {
            return std::find(proline_features.begin(), proline_features.end(), p.feature) == proline_features.end();
          });
        }
        json list = json::array();
        for (const auto& p : all) list.push_back(to_json(p));
        res = {{"k", pk}, {"c", pc}, {"prolines", std::move(list)}};
      }
      emit_json(res, iin.out, out);
      return 0;
    }

    if (*stats_cmd) {
      const TableView view = load_view(sin, log);
      if (*anova_cmd) {
        const json labels_json = read_json_file(labels_path);
        const ClusteringModel cm =
            clustering_model_from_json(labels_json.contains("model") ? labels_json["model"] : labels_json);
        if (cm.labels.size() != view.selected_count())
          throw Error(ErrorCode::Dimension, "the labels cover " + std::to_string(cm.labels.size()) +
                                                " rows but the selection has " + std::to_string(view.selected_count()) +
                                                "; use the same --filter as the clustering run");
        const auto col = view.base().numeric_index(feature);
        if (!col) throw NameResolutionError({feature});
        std::vector<double> values;
        for (auto r : view.selected_rows())
          values.push_back(view.base().values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(*col)));
        std::vector<std::size_t> ids = cluster_ids;
        if (ids.empty())
          for (std::size_t c = 0; c < cm.k; ++c) ids.push_back(c);
        for (auto id : ids)
          if (id >= cm.k) throw Error(ErrorCode::Parameter, "cluster id " + std::to_string(id) + " out of range");
        json res = to_json(anova_oneway(groups_from_labels(values, cm.labels, ids)));
        res["feature"] = feature;
        res["cluster_ids"] = ids;
        emit_json(res, sin.out, out);
      } else if (*corr_cmd) {
        emit_json({{"correlations", to_json(corr_pairs(view))}}, sin.out, out);
      } else if (*points_cmd) {
        emit_json({{"stats", to_json(point_stats(view))}}, sin.out, out);
      }
      return 0;
    }

    if (*filter_cmd) {
      const TableView view = load_view(fin, log);
      log.info(std::to_string(view.selected_count()) + " of " + std::to_string(view.base().rows()) + " rows match");
      emit(export_csv(view, csv_options(fin).delimiter), fin.out, out);
      return 0;
    }
  } catch (const ParseError& e) {
    log.error(std::string(e.what()) + " (offset " + std::to_string(e.offset()) + ")");
    return 2;
  } catch (const Error& e) {
    log.error(e.what());
    return 2;
  } catch (const RuntimeFailure& e) {
    log.error(e.what());
    return 1;
  } catch (const std::exception& e) {
    log.error(std::string("internal error: ") + e.what());
    return 1;
  }
  return 0;
}

}  // namespace clusterscope
